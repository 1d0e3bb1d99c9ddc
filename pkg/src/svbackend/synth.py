"""Seeded synthetic speakers, embeddings, attributes, and trial lists.

Speaker means sit on the unit sphere around a common center, with
``between_spread`` controlling how far speakers scatter and ``within_spread``
how far each chunk embedding scatters around its speaker mean. All draws come
from the documented generator in :mod:`svbackend.rng`, so every artifact is a
pure function of the config. Attribute base values are hash-derived from the
utterance and speaker ids alone; ``attribute_noise`` adds seeded Gaussian
noise on top, so noise 0 gives attributes that depend only on the ids.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .dataio import AttributeTable, ChunkEmbeddings, SchemaColumn, Trial
from .errors import ToolkitError
from .rng import SplitMix64, derive_seed, fnv1a64

DEFAULT_SCHEMA = [
    SchemaColumn("gender", "categorical", "match"),
    SchemaColumn("language", "categorical", "match"),
    SchemaColumn("snr_db", "real", "identity"),
    SchemaColumn("mos", "real", "identity"),
    SchemaColumn("speech_length", "real", "log1p"),
    SchemaColumn("file_length", "real", "log1p"),
    SchemaColumn("liveness", "real", "identity"),
    SchemaColumn("bnd", "real", "identity"),
]

_LANGUAGES = ("en", "es", "de", "fr", "pt", "ru")


@dataclass(frozen=True)
class SynthConfig:
    n_speakers: int
    utts_per_speaker: int
    chunks_per_utt: int
    dim: int
    within_spread: float
    between_spread: float
    seed: int
    attribute_noise: float = 0.0

    def __post_init__(self):
        for name in ("n_speakers", "utts_per_speaker", "chunks_per_utt"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.dim < 2:
            raise ValueError(f"dim must be >= 2, got {self.dim}")
        if not (self.within_spread > 0.0 and self.between_spread > 0.0):
            raise ValueError("spreads must be positive")
        if self.attribute_noise < 0.0:
            raise ValueError(f"attribute_noise must be >= 0, got {self.attribute_noise}")


def _unit(vector: np.ndarray) -> np.ndarray:
    norm = float(np.sqrt(np.sum(vector * vector)))
    if not norm > 0.0:
        raise ToolkitError("degenerate zero-norm draw")
    return vector / norm


def speaker_id(index: int) -> str:
    return f"spk{index:04d}"


def utt_id(speaker: str, index: int) -> str:
    return f"{speaker}_utt{index:03d}"


def gen_dataset(cfg: SynthConfig) -> tuple[list[ChunkEmbeddings], dict[str, str]]:
    """Embedding store plus speaker map, fully determined by the config.

    The draw order is fixed (center, then per speaker its mean followed by
    all chunk vectors), and spreads only scale the drawn vectors, so configs
    differing only in ``within_spread`` share identical speaker means.
    """
    rng = SplitMix64(derive_seed(cfg.seed, "dataset"))
    center = _unit(np.asarray(rng.gauss_vector(cfg.dim)))
    records: list[ChunkEmbeddings] = []
    speaker_map: dict[str, str] = {}
    for s in range(cfg.n_speakers):
        spk = speaker_id(s)
        mean = _unit(center + cfg.between_spread * np.asarray(rng.gauss_vector(cfg.dim)))
        for u in range(cfg.utts_per_speaker):
            utt = utt_id(spk, u)
            chunks = np.empty((cfg.chunks_per_utt, cfg.dim))
            for c in range(cfg.chunks_per_utt):
                chunks[c] = _unit(mean + cfg.within_spread * np.asarray(rng.gauss_vector(cfg.dim)))
            records.append(ChunkEmbeddings(utt, chunks))
            speaker_map[utt] = spk
    return records, speaker_map


def gen_trials(
    records: list[ChunkEmbeddings],
    speaker_map: dict[str, str],
    n_pos: int,
    n_neg: int,
    seed: int,
) -> list[Trial]:
    """Seeded sample of same-speaker and cross-speaker pairs, no repetition."""
    if n_pos < 0 or n_neg < 0:
        raise ToolkitError("trial counts must be nonnegative")
    utts = sorted(rec.utt_id for rec in records)
    for utt in utts:
        if utt not in speaker_map:
            raise ToolkitError(f"utterance {utt!r} missing from speaker map")
    pos_pairs = []
    neg_pairs = []
    for a, b in itertools.combinations(utts, 2):
        if speaker_map[a] == speaker_map[b]:
            pos_pairs.append((a, b))
        else:
            neg_pairs.append((a, b))
    if n_pos > len(pos_pairs):
        raise ToolkitError(f"requested {n_pos} same-speaker pairs, only {len(pos_pairs)} available")
    if n_neg > len(neg_pairs):
        raise ToolkitError(f"requested {n_neg} cross-speaker pairs, only {len(neg_pairs)} available")
    rng = SplitMix64(derive_seed(seed, "trials"))
    trials = [Trial(a, b, True) for a, b in rng.take(pos_pairs, n_pos)]
    trials += [Trial(a, b, False) for a, b in rng.take(neg_pairs, n_neg)]
    rng.shuffle(trials)
    return trials


def _hash_uniform(key: str) -> float:
    return (fnv1a64(key) >> 11) * 2.0**-53


def gen_attributes(
    records: list[ChunkEmbeddings],
    speaker_map: dict[str, str],
    cfg: SynthConfig,
) -> AttributeTable:
    """Attribute table over the store's utterances for the default schema.

    Gender and language are speaker-consistent categoricals. Real columns
    are hash-derived base values plus ``attribute_noise`` times a seeded
    Gaussian, clamped to their documented ranges.
    """
    table = AttributeTable(columns=tuple(col.name for col in DEFAULT_SCHEMA))
    for rec in records:
        utt = rec.utt_id
        if utt not in speaker_map:
            raise ToolkitError(f"utterance {utt!r} missing from speaker map")
        spk = speaker_map[utt]
        noise_rng = SplitMix64(derive_seed(cfg.seed, f"attr/{utt}"))

        def noisy(base: float) -> float:
            if cfg.attribute_noise == 0.0:
                return base
            return base + cfg.attribute_noise * noise_rng.gauss()

        file_length = max(0.1, noisy(3.0 + 57.0 * _hash_uniform(f"{utt}/file_length")))
        speech_base = file_length * (0.3 + 0.7 * _hash_uniform(f"{utt}/speech_length"))
        row: dict[str, float | str | None] = {
            "gender": "f" if fnv1a64(f"{spk}/gender") & 1 else "m",
            "language": _LANGUAGES[fnv1a64(f"{spk}/language") % len(_LANGUAGES)],
            "snr_db": noisy(30.0 * _hash_uniform(f"{utt}/snr_db")),
            "mos": min(5.0, max(1.0, noisy(1.0 + 4.0 * _hash_uniform(f"{utt}/mos")))),
            "speech_length": min(file_length, max(0.01, noisy(speech_base))),
            "file_length": file_length,
            "liveness": min(1.0, max(0.0, noisy(_hash_uniform(f"{utt}/liveness")))),
            "bnd": min(1.0, max(0.0, noisy(_hash_uniform(f"{utt}/bnd")))),
        }
        table.rows[utt] = row
    return table
