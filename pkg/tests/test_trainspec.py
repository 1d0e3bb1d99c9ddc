"""Training schedules and encoder shape arithmetic, anchored exactly."""

import pytest

from svbackend.errors import ToolkitError
from svbackend.trainspec import (
    ArchSpec,
    BASE_SCHEDULE,
    FINETUNE_SCHEDULE,
    PhaseSchedule,
    StaircaseSpec,
    StageSpec,
    base_lr,
    base_margin,
    finetune_lr,
    finetune_margin,
    resnet_shapes,
    schedule_lr,
    schedule_margin,
    staircase_lr,
)


def test_base_lr_anchors_exact():
    assert base_lr(0) == 1e-5
    assert base_lr(10) == 0.2
    assert base_lr(59) == 0.2
    assert base_lr(80) == 0.1
    assert base_lr(100) == 0.05


def test_base_lr_warmup_is_linear():
    assert base_lr(5) == 1e-5 + (0.2 - 1e-5) * 0.5
    assert base_lr(2.5) == 1e-5 + (0.2 - 1e-5) * 0.25


def test_base_decay_is_continuous():
    # decay starts exactly at the plateau value and falls smoothly
    assert base_lr(60) == 0.2
    assert base_lr(60.0001) < 0.2
    assert abs(base_lr(70) - 0.2 * 0.5**0.5) <= 1e-15
    values = [base_lr(e) for e in range(60, 200, 5)]
    assert all(a > b for a, b in zip(values, values[1:]))


def test_base_margin_anchors():
    assert base_margin(0) == 0.0
    assert base_margin(9.99) == 0.0
    assert base_margin(35) == 0.15
    assert base_margin(60) == 0.3
    assert base_margin(200) == 0.3


def test_finetune_lr_anchors_exact():
    assert finetune_lr(1) == 1e-2
    assert finetune_lr(6) == 5e-3
    assert finetune_lr(0.5) == 5.005e-3


def test_finetune_decay_is_stepped():
    assert finetune_lr(5.999) == 1e-2
    for epoch in range(6, 11):
        assert finetune_lr(epoch) == 5e-3
    for epoch in range(11, 16):
        assert finetune_lr(epoch) == 2.5e-3


def test_finetune_margin_constant():
    for epoch in (0, 1, 15, 29):
        assert finetune_margin(epoch) == 0.3


def test_epoch_range_is_enforced():
    with pytest.raises(ToolkitError):
        base_lr(-1)
    with pytest.raises(ToolkitError):
        base_lr(300)
    with pytest.raises(ToolkitError):
        finetune_lr(30)
    with pytest.raises(ToolkitError):
        schedule_margin(BASE_SCHEDULE, 301)


def test_phase_schedule_constants():
    assert BASE_SCHEDULE.total_epochs == 300
    assert BASE_SCHEDULE.stepped_decay is False
    assert BASE_SCHEDULE.scale == 30.0
    assert FINETUNE_SCHEDULE.total_epochs == 30
    assert FINETUNE_SCHEDULE.stepped_decay is True
    assert FINETUNE_SCHEDULE.margin_start == 0.3
    assert FINETUNE_SCHEDULE.scale == 30.0


def test_custom_phase_schedule_round_trip():
    phase = PhaseSchedule(
        warmup_epochs=2,
        plateau_epochs=3,
        lr_start=0.001,
        lr_max=0.1,
        decay_gamma=0.5,
        decay_every=2,
        margin_max=0.2,
        total_epochs=20,
    )
    assert schedule_lr(phase, 0) == 0.001
    assert schedule_lr(phase, 2) == 0.1
    assert schedule_lr(phase, 4) == 0.1
    assert schedule_lr(phase, 7) == 0.1 * 0.5
    assert schedule_margin(phase, 1) == 0.0
    assert schedule_margin(phase, 5) == 0.2


# ---------------------------------------------------------------------------
# Staircase schedule


def test_staircase_example_anchors():
    spec = StaircaseSpec(gamma=0.5, warmup_epochs=2, plateau_epochs=6, epochs_per=2, max_lr=1.0)
    assert staircase_lr(spec, 1) == 1.0
    assert staircase_lr(spec, 7) == 1.0
    assert staircase_lr(spec, 8) == 0.5
    assert staircase_lr(spec, 10) == 0.25


def test_staircase_warmup_steps():
    spec = StaircaseSpec(gamma=0.5, warmup_epochs=4, plateau_epochs=2, epochs_per=3, max_lr=0.8)
    assert staircase_lr(spec, 0) == 0.8 / 4
    assert staircase_lr(spec, 1) == 0.8 / 4 * 2
    assert staircase_lr(spec, 3) == 0.8


def test_staircase_gamma_one_is_constant():
    spec = StaircaseSpec(gamma=1.0, warmup_epochs=1, plateau_epochs=1, epochs_per=1, max_lr=0.3)
    assert {staircase_lr(spec, e) for e in range(0, 50)} == {0.3}


def test_staircase_holds_within_each_step():
    spec = StaircaseSpec(gamma=0.5, warmup_epochs=1, plateau_epochs=1, epochs_per=4, max_lr=1.0)
    values = [staircase_lr(spec, e) for e in range(2, 10)]
    assert values == [0.5, 0.5, 0.5, 0.5, 0.25, 0.25, 0.25, 0.25]


def test_staircase_validation():
    with pytest.raises(ValueError):
        StaircaseSpec(gamma=0.0, warmup_epochs=1, plateau_epochs=1, epochs_per=1, max_lr=1.0)
    with pytest.raises(ValueError):
        StaircaseSpec(gamma=1.5, warmup_epochs=1, plateau_epochs=1, epochs_per=1, max_lr=1.0)
    with pytest.raises(ValueError):
        StaircaseSpec(gamma=0.5, warmup_epochs=0, plateau_epochs=1, epochs_per=1, max_lr=1.0)
    with pytest.raises(ValueError):
        StaircaseSpec(gamma=0.5, warmup_epochs=1, plateau_epochs=1, epochs_per=1, max_lr=0.0)
    with pytest.raises(ToolkitError):
        staircase_lr(StaircaseSpec(gamma=0.5, warmup_epochs=1, plateau_epochs=1, epochs_per=1, max_lr=1.0), -1)


# ---------------------------------------------------------------------------
# Encoder shapes


def test_default_shapes_at_800_frames():
    shapes = resnet_shapes(frames=800)
    assert (shapes.stem.channels, shapes.stem.freq_bins, shapes.stem.frames) == (128, 96, 800)
    got = [(s.channels, s.freq_bins, s.frames) for s in shapes.stages]
    assert got == [(128, 96, 800), (128, 48, 400), (256, 24, 200), (256, 12, 100)]
    assert shapes.flatten_channels == 3072
    assert shapes.flatten_frames == 100
    assert shapes.pooled_dim == 6144
    assert shapes.embedding_dim == 256
    assert shapes.weight_layers == 100


def test_shapes_scale_with_frames():
    shapes = resnet_shapes(frames=8)
    assert [s.frames for s in shapes.stages] == [8, 4, 2, 1]
    assert shapes.flatten_frames == 1


def test_frames_must_divide():
    with pytest.raises(ToolkitError):
        resnet_shapes(frames=100)
    with pytest.raises(ToolkitError):
        resnet_shapes(frames=0)
    with pytest.raises(ToolkitError):
        resnet_shapes(frames=-8)


def test_custom_arch_spec():
    spec = ArchSpec(
        stages=(
            StageSpec(blocks=2, channels=32, freq_bins=40, time_divisor=1),
            StageSpec(blocks=3, channels=64, freq_bins=20, time_divisor=2),
        ),
        input_freq_bins=40,
        embedding_dim=128,
    )
    shapes = resnet_shapes(spec, frames=16)
    assert shapes.flatten_channels == 64 * 20
    assert shapes.pooled_dim == 2 * 64 * 20
    assert shapes.weight_layers == 2 * 5 + 2
    assert shapes.embedding_dim == 128


def test_arch_spec_validation():
    with pytest.raises(ValueError):
        ArchSpec(stages=())
    with pytest.raises(ValueError):
        ArchSpec(stages=(StageSpec(blocks=1, channels=8, freq_bins=4, time_divisor=3),))
    with pytest.raises(ValueError):
        ArchSpec(stages=(StageSpec(blocks=0, channels=8, freq_bins=4, time_divisor=1),))
