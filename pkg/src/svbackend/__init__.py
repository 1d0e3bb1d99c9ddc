"""Speaker-verification back-end toolkit.

Scores verification trials from precomputed chunk embeddings, normalizes
scores against a cohort, engineers per-trial quality features, fuses systems
with L1 logistic regression, evaluates with EER/minDCF, curates training
speakers by embedding similarity, and exposes training-schedule and
architecture-shape helpers plus a seeded synthetic data generator.
"""

from .errors import DataFormatError, DegenerateCohortError, FeatureMismatchError, ToolkitError

__all__ = [
    "DataFormatError",
    "DegenerateCohortError",
    "FeatureMismatchError",
    "ToolkitError",
]

__version__ = "0.1.0"
