import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from svbackend.synth import SynthConfig, gen_dataset


@pytest.fixture(scope="session")
def small_synth():
    """A small deterministic dataset shared by read-only tests."""
    cfg = SynthConfig(
        n_speakers=6,
        utts_per_speaker=4,
        chunks_per_utt=2,
        dim=8,
        within_spread=0.2,
        between_spread=1.0,
        seed=11,
    )
    return gen_dataset(cfg)


@pytest.fixture()
def np_rng():
    """Test-side noise source, independent of the library generator."""
    return np.random.default_rng(987)
