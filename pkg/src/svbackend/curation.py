"""Distractor-driven filtering of candidate training speakers.

Each speaker is summarized by the component-wise median of their utterance
mean embeddings (lower-middle element for even counts), L2 normalized. For
every target speaker the top-k most similar source speakers are kept; the
union of those lists is then deduplicated by dropping any source speaker
whose best similarity to a target exceeds the threshold (likely the same
identity). Inputs are canonicalized by speaker id before any computation, so
the output does not depend on input ordering.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataio import ChunkEmbeddings
from .errors import ToolkitError
from .scoring import cosine_matrix, vector_norm


@dataclass(frozen=True)
class DdfConfig:
    top_k: int = 50
    dedup_threshold: float = 0.8

    def __post_init__(self):
        if self.top_k < 1:
            raise ValueError(f"top_k must be >= 1, got {self.top_k}")
        if not 0.0 < self.dedup_threshold <= 1.0:
            raise ValueError(f"dedup_threshold must lie in (0, 1], got {self.dedup_threshold}")


@dataclass(frozen=True)
class SpeakerProfile:
    """Unit-norm median embedding for one speaker."""

    speaker_id: str
    median_embedding: np.ndarray

    def __post_init__(self):
        emb = np.asarray(self.median_embedding, dtype=np.float64)
        if emb.ndim != 1 or emb.shape[0] < 1:
            raise ValueError(f"median_embedding must be a 1-D vector, got shape {emb.shape}")
        if not np.all(np.isfinite(emb)):
            raise ValueError("non-finite profile embedding")
        object.__setattr__(self, "median_embedding", emb)


def _lower_median(matrix: np.ndarray) -> np.ndarray:
    """Component-wise lower-middle median over rows ((n-1)//2 after sorting)."""
    ordered = np.sort(matrix, axis=0)
    return ordered[(matrix.shape[0] - 1) // 2]


def median_profile(speaker_id: str, utterance_means: list[np.ndarray]) -> SpeakerProfile:
    """Median-of-means speaker profile, L2 normalized."""
    if not utterance_means:
        raise ToolkitError(f"speaker {speaker_id!r} has no utterances")
    matrix = np.stack([np.asarray(m, dtype=np.float64) for m in utterance_means])
    median = _lower_median(matrix)
    norm = vector_norm(median)
    if not norm > 0.0:
        raise ToolkitError(f"zero-norm median embedding for speaker {speaker_id!r}")
    return SpeakerProfile(speaker_id=speaker_id, median_embedding=median / norm)


def profiles_from_store(records: list[ChunkEmbeddings], speaker_map: dict[str, str]) -> list[SpeakerProfile]:
    """One profile per speaker from an embedding store, sorted by speaker id."""
    by_speaker: dict[str, list[np.ndarray]] = {}
    for rec in records:
        if rec.utt_id not in speaker_map:
            raise ToolkitError(f"utterance {rec.utt_id!r} missing from speaker map")
        by_speaker.setdefault(speaker_map[rec.utt_id], []).append(rec.mean_embedding())
    return [median_profile(spk, means) for spk, means in sorted(by_speaker.items())]


@dataclass(frozen=True)
class DdfSelection:
    speaker_id: str
    max_similarity: float
    nearest_target_id: str


def ddf_select(
    source: list[SpeakerProfile],
    targets: list[SpeakerProfile],
    config: DdfConfig = DdfConfig(),
) -> list[DdfSelection]:
    """Distractor speakers from ``source`` for the given ``targets``.

    Returns the kept selections sorted by speaker id, each with its best
    cosine to any target and the id of that nearest target (lexicographic
    tie break). Every kept similarity is <= the dedup threshold.
    """
    if not source or not targets:
        raise ToolkitError("source and target profile lists must be nonempty")
    source = sorted(source, key=lambda p: p.speaker_id)
    targets = sorted(targets, key=lambda p: p.speaker_id)
    for profiles, role in ((source, "source"), (targets, "target")):
        ids = [p.speaker_id for p in profiles]
        if len(set(ids)) != len(ids):
            raise ToolkitError(f"duplicate {role} speaker ids")
    src_matrix = np.stack([p.median_embedding for p in source])
    tgt_matrix = np.stack([p.median_embedding for p in targets])
    if src_matrix.shape[1] != tgt_matrix.shape[1]:
        raise ToolkitError(
            f"profile dim mismatch: source {src_matrix.shape[1]}, target {tgt_matrix.shape[1]}"
        )

    # (n_targets, n_source) similarities in canonical order
    sims = cosine_matrix(tgt_matrix, src_matrix)
    src_ids = [p.speaker_id for p in source]

    candidate_idx: set[int] = set()
    k = min(config.top_k, len(source))
    for row in sims:
        ranked = sorted(range(len(source)), key=lambda j: (-row[j], src_ids[j]))
        candidate_idx.update(ranked[:k])

    best_sim = sims.max(axis=0)
    nearest = sims.argmax(axis=0)  # first (lexicographically smallest) target on ties
    kept = []
    for j in sorted(candidate_idx):
        if best_sim[j] > config.dedup_threshold:
            continue
        kept.append(
            DdfSelection(
                speaker_id=src_ids[j],
                max_similarity=float(best_sim[j]),
                nearest_target_id=targets[int(nearest[j])].speaker_id,
            )
        )
    kept.sort(key=lambda s: s.speaker_id)
    return kept
