"""Training schedule functions and the network shape calculator.

Everything here is a pure function of its arguments: learning-rate and
margin schedules for the base and fine-tune training phases, the stepped
staircase schedule used for self-supervised pretraining stages, and the
layer-shape calculator for the 100-layer residual encoder.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ToolkitError


@dataclass(frozen=True)
class PhaseSchedule:
    """Warmup / plateau / decay schedule for learning rate and loss margin.

    The learning rate ramps linearly from ``lr_start`` to ``lr_max`` over the
    warmup, holds at ``lr_max`` through the plateau, then decays by
    ``decay_gamma`` every ``decay_every`` epochs, continuously or in steps.
    The margin holds at ``margin_start`` through the warmup, ramps linearly
    to ``margin_max`` over the plateau, then stays there.
    """

    warmup_epochs: int
    plateau_epochs: int
    lr_start: float
    lr_max: float
    decay_gamma: float
    decay_every: int
    margin_max: float
    total_epochs: int
    margin_start: float = 0.0
    stepped_decay: bool = False
    scale: float = 30.0

    def __post_init__(self):
        if self.warmup_epochs < 0 or self.plateau_epochs < 0:
            raise ValueError("epoch counts must be nonnegative")
        if not 0.0 < self.lr_start <= self.lr_max:
            raise ValueError(f"need 0 < lr_start <= lr_max, got {self.lr_start} and {self.lr_max}")
        if not 0.0 < self.decay_gamma < 1.0:
            raise ValueError(f"decay_gamma must lie in (0, 1), got {self.decay_gamma}")
        if self.decay_every < 1:
            raise ValueError(f"decay_every must be >= 1, got {self.decay_every}")
        if self.margin_max < 0.0 or self.margin_start < 0.0:
            raise ValueError("margins must be nonnegative")
        if self.total_epochs <= self.warmup_epochs + self.plateau_epochs:
            raise ValueError("total_epochs must exceed warmup plus plateau")
        if self.scale <= 0.0:
            raise ValueError(f"scale must be positive, got {self.scale}")


BASE_SCHEDULE = PhaseSchedule(
    warmup_epochs=10,
    plateau_epochs=50,
    lr_start=1e-5,
    lr_max=0.2,
    decay_gamma=0.5,
    decay_every=20,
    margin_max=0.3,
    total_epochs=300,
)

FINETUNE_SCHEDULE = PhaseSchedule(
    warmup_epochs=1,
    plateau_epochs=0,
    lr_start=1e-5,
    lr_max=1e-2,
    decay_gamma=0.5,
    decay_every=5,
    margin_max=0.3,
    total_epochs=30,
    margin_start=0.3,
    stepped_decay=True,
)


def _check_epoch(schedule: PhaseSchedule, epoch: float) -> None:
    if not (math.isfinite(epoch) and 0.0 <= epoch < schedule.total_epochs):
        raise ToolkitError(f"epoch {epoch} outside [0, {schedule.total_epochs})")


def schedule_lr(schedule: PhaseSchedule, epoch: float) -> float:
    _check_epoch(schedule, epoch)
    if epoch < schedule.warmup_epochs:
        return schedule.lr_start + (schedule.lr_max - schedule.lr_start) * (epoch / schedule.warmup_epochs)
    past_plateau = epoch - schedule.warmup_epochs - schedule.plateau_epochs
    if past_plateau < 0:
        return schedule.lr_max
    periods = past_plateau / schedule.decay_every
    if schedule.stepped_decay:
        periods = math.floor(periods)
    return schedule.lr_max * schedule.decay_gamma**periods


def schedule_margin(schedule: PhaseSchedule, epoch: float) -> float:
    _check_epoch(schedule, epoch)
    if epoch < schedule.warmup_epochs:
        return schedule.margin_start
    if schedule.plateau_epochs > 0 and epoch < schedule.warmup_epochs + schedule.plateau_epochs:
        ramp = (epoch - schedule.warmup_epochs) / schedule.plateau_epochs
        return schedule.margin_start + (schedule.margin_max - schedule.margin_start) * ramp
    return schedule.margin_max


def base_lr(epoch: float) -> float:
    """Learning rate of the 300-epoch base phase at a (possibly fractional) epoch."""
    return schedule_lr(BASE_SCHEDULE, epoch)


def base_margin(epoch: float) -> float:
    """Additive margin of the base phase: 0 through warmup, ramp to 0.3, hold."""
    return schedule_margin(BASE_SCHEDULE, epoch)


def finetune_lr(epoch: float) -> float:
    """Learning rate of the 30-epoch fine-tune phase (stepped halving)."""
    return schedule_lr(FINETUNE_SCHEDULE, epoch)


def finetune_margin(epoch: float) -> float:
    """Fine-tune margin, constant at 0.3."""
    return schedule_margin(FINETUNE_SCHEDULE, epoch)


@dataclass(frozen=True)
class StaircaseSpec:
    """Staircase schedule parameters (gamma, warmup, plateau, epochs per step)."""

    gamma: float
    warmup_epochs: int
    plateau_epochs: int
    epochs_per: int
    max_lr: float

    def __post_init__(self):
        # gamma 1 is the degenerate constant schedule
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in (0, 1], got {self.gamma}")
        for name in ("warmup_epochs", "plateau_epochs", "epochs_per"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.max_lr <= 0.0:
            raise ValueError(f"max_lr must be positive, got {self.max_lr}")


def staircase_lr(spec: StaircaseSpec, epoch: int) -> float:
    """Stepped learning rate: warmup to max_lr in warmup_epochs equal steps,
    hold through the plateau, then multiply by gamma every epochs_per epochs."""
    if epoch < 0:
        raise ToolkitError(f"epoch must be >= 0, got {epoch}")
    if epoch < spec.warmup_epochs:
        return min(spec.max_lr, spec.max_lr / spec.warmup_epochs * (epoch + 1))
    past = epoch - spec.warmup_epochs - spec.plateau_epochs
    if past < 0:
        return spec.max_lr
    return spec.max_lr * spec.gamma ** (1 + past // spec.epochs_per)


# ---------------------------------------------------------------------------
# Architecture shapes


@dataclass(frozen=True)
class StageSpec:
    blocks: int
    channels: int
    freq_bins: int
    time_divisor: int


@dataclass(frozen=True)
class ArchSpec:
    """Residual encoder layout: stem + four stages + flatten + pooling + dense."""

    stages: tuple[StageSpec, ...] = (
        StageSpec(blocks=6, channels=128, freq_bins=96, time_divisor=1),
        StageSpec(blocks=16, channels=128, freq_bins=48, time_divisor=2),
        StageSpec(blocks=24, channels=256, freq_bins=24, time_divisor=4),
        StageSpec(blocks=3, channels=256, freq_bins=12, time_divisor=8),
    )
    input_freq_bins: int = 96
    embedding_dim: int = 256

    def __post_init__(self):
        if not self.stages:
            raise ValueError("need at least one stage")
        for stage in self.stages:
            if stage.time_divisor not in (1, 2, 4, 8):
                raise ValueError(f"time divisor must be one of 1, 2, 4, 8, got {stage.time_divisor}")
            if stage.blocks < 1 or stage.channels < 1 or stage.freq_bins < 1:
                raise ValueError("stage sizes must be positive")
        if self.input_freq_bins < 1 or self.embedding_dim < 1:
            raise ValueError("input_freq_bins and embedding_dim must be positive")


@dataclass(frozen=True)
class LayerShape:
    name: str
    channels: int
    freq_bins: int
    frames: int


@dataclass(frozen=True)
class ArchShapes:
    """Output shapes per stage plus the flatten/pooling/dense dimensions."""

    stem: LayerShape
    stages: tuple[LayerShape, ...]
    flatten_channels: int
    flatten_frames: int
    pooled_dim: int
    embedding_dim: int
    weight_layers: int


def resnet_shapes(spec: ArchSpec = ArchSpec(), frames: int = 800) -> ArchShapes:
    """Layer output shapes for an input of ``frames`` feature frames.

    ``frames`` must be divisible by the largest stage time divisor. The
    flatten step merges channels with frequency bins; attentive statistics
    pooling doubles that dimension; the dense layer maps to the embedding.
    The weight-layer count is 2 per residual block plus stem and dense.
    """
    max_divisor = max(stage.time_divisor for stage in spec.stages)
    if frames < 1 or frames % max_divisor != 0:
        raise ToolkitError(f"frames must be a positive multiple of {max_divisor}, got {frames}")
    stem = LayerShape("stem", spec.stages[0].channels, spec.input_freq_bins, frames)
    stages = tuple(
        LayerShape(f"stage{i}", stage.channels, stage.freq_bins, frames // stage.time_divisor)
        for i, stage in enumerate(spec.stages, start=1)
    )
    last = spec.stages[-1]
    flatten_channels = last.channels * last.freq_bins
    flatten_frames = frames // last.time_divisor
    weight_layers = 2 * sum(stage.blocks for stage in spec.stages) + 2
    return ArchShapes(
        stem=stem,
        stages=stages,
        flatten_channels=flatten_channels,
        flatten_frames=flatten_frames,
        pooled_dim=2 * flatten_channels,
        embedding_dim=spec.embedding_dim,
        weight_layers=weight_layers,
    )
