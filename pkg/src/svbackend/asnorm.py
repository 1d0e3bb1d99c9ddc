"""Adaptive symmetric score normalization.

Each trial side is scored against a cohort of per-speaker mean embeddings,
the top N cohort scores per side give that side's mean and population
standard deviation, and the normalized score is the average of the two
z-normalized raw scores:

    0.5 * ((raw - mu_e) / sd_e + (raw - mu_t) / sd_t)

Swapping enroll and test swaps the two summands, so the result is exactly
symmetric.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dataio import ChunkEmbeddings
from .errors import DegenerateCohortError, ToolkitError
from .rng import SplitMix64, derive_seed
from .scoring import cosine_matrix


@dataclass(frozen=True)
class AsNormConfig:
    top_n: int = 100
    utterances_per_speaker: int = 20

    def __post_init__(self):
        if self.top_n < 1:
            raise ValueError(f"top_n must be >= 1, got {self.top_n}")
        if self.utterances_per_speaker < 1:
            raise ValueError(f"utterances_per_speaker must be >= 1, got {self.utterances_per_speaker}")


@dataclass(frozen=True)
class Cohort:
    """One mean embedding per cohort speaker. Immutable after construction."""

    speaker_ids: tuple[str, ...]
    embeddings: np.ndarray

    def __post_init__(self):
        emb = np.asarray(self.embeddings, dtype=np.float64)
        if emb.ndim != 2 or emb.shape[0] != len(self.speaker_ids):
            raise ValueError(f"embeddings must be (n_speakers, dim), got {emb.shape}")
        if emb.shape[0] < 1:
            raise ValueError("empty cohort")
        if not np.all(np.isfinite(emb)):
            raise ValueError("non-finite cohort embedding")
        if len(set(self.speaker_ids)) != len(self.speaker_ids):
            raise ValueError("duplicate cohort speaker ids")
        object.__setattr__(self, "embeddings", emb)

    def __len__(self) -> int:
        return self.embeddings.shape[0]


def build_cohort(
    records: list[ChunkEmbeddings],
    speaker_map: dict[str, str],
    config: AsNormConfig = AsNormConfig(),
    seed: int = 0,
) -> Cohort:
    """Cohort of per-speaker embeddings from an embedding store.

    For each speaker, up to ``utterances_per_speaker`` utterances are chosen
    by a seeded shuffle of the speaker's sorted utterance list (substream
    derived from the speaker id, so the choice is independent of input
    order), and the cohort embedding is the mean of the chosen utterances'
    mean embeddings.
    """
    if not speaker_map:
        raise ToolkitError("empty speaker map")
    by_speaker: dict[str, list[ChunkEmbeddings]] = {}
    for rec in records:
        if rec.utt_id not in speaker_map:
            raise ToolkitError(f"utterance {rec.utt_id!r} missing from speaker map")
        by_speaker.setdefault(speaker_map[rec.utt_id], []).append(rec)
    for speaker_id in speaker_map.values():
        if speaker_id not in by_speaker:
            raise ToolkitError(f"speaker {speaker_id!r} has no utterances in the store")

    speaker_ids = sorted(by_speaker)
    rows = []
    for speaker_id in speaker_ids:
        recs = sorted(by_speaker[speaker_id], key=lambda r: r.utt_id)
        rng = SplitMix64(derive_seed(seed, f"cohort/{speaker_id}"))
        chosen = rng.take(recs, min(config.utterances_per_speaker, len(recs)))
        means = np.stack([rec.mean_embedding() for rec in chosen])
        rows.append(means.mean(axis=0))
    return Cohort(speaker_ids=tuple(speaker_ids), embeddings=np.stack(rows))


def top_n_stats(cohort_scores: np.ndarray, top_n: int) -> tuple[float, float]:
    """Mean and population std of the ``top_n`` largest cohort scores."""
    scores = np.asarray(cohort_scores, dtype=np.float64)
    if scores.ndim != 1 or scores.shape[0] < top_n:
        raise ToolkitError(f"need at least top_n={top_n} cohort scores, got shape {scores.shape}")
    if top_n < scores.shape[0]:
        top = np.partition(scores, scores.shape[0] - top_n)[-top_n:]
    else:
        top = scores
    return float(top.mean()), float(top.std())


def normalize_from_cohort_scores(
    raw: float,
    enroll_cohort_scores: np.ndarray,
    test_cohort_scores: np.ndarray,
    top_n: int,
) -> float:
    """AS-Norm given precomputed per-side cohort score vectors."""
    if not math.isfinite(raw):
        raise ToolkitError(f"non-finite raw score {raw!r}")
    mu_e, sd_e = top_n_stats(enroll_cohort_scores, top_n)
    mu_t, sd_t = top_n_stats(test_cohort_scores, top_n)
    if sd_e <= 1e-12 or sd_t <= 1e-12:
        raise DegenerateCohortError(f"cohort score spread too small (enroll {sd_e}, test {sd_t})")
    return 0.5 * ((raw - mu_e) / sd_e + (raw - mu_t) / sd_t)


def cohort_scores(embedding: np.ndarray, cohort: Cohort) -> np.ndarray:
    """Cosines between one utterance-level embedding and every cohort row."""
    embedding = np.asarray(embedding, dtype=np.float64)
    if embedding.ndim != 1:
        raise ToolkitError(f"expected a 1-D embedding, got shape {embedding.shape}")
    return cosine_matrix(embedding[None, :], cohort.embeddings)[0]


def asnorm_score(
    raw: float,
    enroll_embedding: np.ndarray,
    test_embedding: np.ndarray,
    cohort: Cohort,
    config: AsNormConfig = AsNormConfig(),
) -> float:
    """Normalized score for one trial given its raw score and embeddings."""
    if len(cohort) < config.top_n:
        raise ToolkitError(f"cohort has {len(cohort)} speakers, need >= top_n={config.top_n}")
    e_scores = cohort_scores(enroll_embedding, cohort)
    t_scores = cohort_scores(test_embedding, cohort)
    return normalize_from_cohort_scores(raw, e_scores, t_scores, config.top_n)


def asnorm_trials(
    raw_scores: np.ndarray,
    enroll_embeddings: np.ndarray,
    test_embeddings: np.ndarray,
    cohort: Cohort,
    config: AsNormConfig = AsNormConfig(),
) -> np.ndarray:
    """AS-Norm over aligned vectors of raw scores and per-side embeddings."""
    raw_scores = np.asarray(raw_scores, dtype=np.float64)
    n = raw_scores.shape[0]
    enroll_embeddings = np.asarray(enroll_embeddings, dtype=np.float64)
    test_embeddings = np.asarray(test_embeddings, dtype=np.float64)
    if enroll_embeddings.shape[0] != n or test_embeddings.shape[0] != n:
        raise ToolkitError("raw scores and embedding sides must have equal length")
    out = np.empty(n, dtype=np.float64)
    for i in range(n):
        out[i] = asnorm_score(float(raw_scores[i]), enroll_embeddings[i], test_embeddings[i], cohort, config)
    return out
