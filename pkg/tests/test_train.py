import math

import pytest
import torch

from ctma.errors import (
    ConfigError,
    DataError,
    EmptyHistoryError,
    NonFiniteLossError,
)
from ctma.model import AblationFlags, CTMANet, ModelOutput
from ctma.spatial_encoder import SEConfig
from ctma.synthetic import SynthParams, generate_synthetic
from ctma.temporal_encoder import TEConfig
from ctma.tiling import TileSpec
from ctma.train import (
    CSV_HEADER,
    EpochRecord,
    RunHistory,
    ScheduleConfig,
    evaluate,
    format_ablation_table,
    lr_at,
    run_ablation,
    select_best,
    train_loop,
)

TE = TEConfig(tblock1_channels=4, tblock2_filters=[4, 4, 8, 8], n_frames=4)
SE = SEConfig(channels=(8, 16, 32), backbone_stem=8, backbone_stages=(8, 16))
SYNTH = SynthParams(canvas=16, num_shapes=2, shape_min=3, shape_max=6, noise=0.01)


def _pairs(n, base_seed=0):
    return [generate_synthetic(SYNTH, base_seed + i) for i in range(n)]


def _net(seed=0, flags=None):
    torch.manual_seed(seed)
    return CTMANet(TE, SE, flags)


def test_lr_schedule_published_operating_points():
    whu = ScheduleConfig(base_lr=0.0004, decay_rate=0.2, decay_step=105)
    assert lr_at(0, whu) == pytest.approx(0.0004)
    assert lr_at(104, whu) == pytest.approx(0.0004)
    assert lr_at(105, whu) == pytest.approx(8e-05)
    svcd = ScheduleConfig(base_lr=0.0004, decay_rate=0.1, decay_step=70)
    assert lr_at(69, svcd) == pytest.approx(0.0004)
    assert lr_at(70, svcd) == pytest.approx(4e-05)
    assert lr_at(140, svcd) == pytest.approx(4e-06)


def test_lr_schedule_is_nonincreasing_piecewise_constant():
    cfg = ScheduleConfig(base_lr=0.01, decay_rate=0.5, decay_step=3)
    values = [lr_at(e, cfg) for e in range(12)]
    assert all(a >= b for a, b in zip(values, values[1:]))
    assert values[0] == values[1] == values[2]
    assert values[3] == pytest.approx(0.005)
    assert values[6] == pytest.approx(0.0025)


def test_schedule_validation():
    for bad in (
        dict(base_lr=0.0),
        dict(decay_rate=0.0),
        dict(decay_rate=1.0),
        dict(decay_step=0),
        dict(optimizer="sgd"),
        dict(batch_size=0),
        dict(max_iterations=-1),
        dict(weight_decay=-0.1),
    ):
        with pytest.raises(ConfigError):
            ScheduleConfig(**bad).validate()
    assert ScheduleConfig().validate().base_lr == pytest.approx(0.0004)


def test_history_requires_increasing_epochs_per_split():
    hist = RunHistory()
    hist.add(EpochRecord(0, "train", 1.0, 0, 0, 0, 0, 1e-3))
    hist.add(EpochRecord(0, "val", 1.0, 0, 0, 0, 0, 1e-3))
    hist.add(EpochRecord(1, "train", 0.9, 0, 0, 0, 0, 1e-3))
    with pytest.raises(ValueError):
        hist.add(EpochRecord(1, "train", 0.8, 0, 0, 0, 0, 1e-3))
    with pytest.raises(ValueError):
        hist.add(EpochRecord(0, "val", 0.8, 0, 0, 0, 0, 1e-3))


def test_history_csv_round_trip(tmp_path):
    hist = RunHistory()
    hist.add(EpochRecord(0, "train", 0.5, 0.25, 0.125, 0.75, 0.875, 0.0004))
    hist.add(EpochRecord(0, "val", 0.25, 0.5, 0.5, 0.5, 0.5, 0.0004))
    hist.add(EpochRecord(1, "train", 0.125, 1.0, 1.0, 1.0, 1.0, 8e-05))
    path = tmp_path / "metrics.csv"
    hist.to_csv(str(path))
    text = path.read_text()
    assert text.splitlines()[0] == CSV_HEADER
    back = RunHistory.from_csv(str(path))
    assert len(back.records) == 3
    for a, b in zip(hist.records, back.records):
        assert (a.epoch, a.split) == (b.epoch, b.split)
        assert b.loss == pytest.approx(a.loss, abs=1e-6)
        assert b.f1 == pytest.approx(a.f1, abs=1e-6)
        assert b.lr == pytest.approx(a.lr, rel=1e-6)


def test_history_csv_rejects_foreign_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b,c\n1,2,3\n")
    with pytest.raises(DataError):
        RunHistory.from_csv(str(path))


def test_select_best_prefers_validation_f1():
    hist = RunHistory()
    for e, f1 in enumerate([0.1, 0.5, 0.3]):
        hist.add(EpochRecord(e, "train", 1.0, 0, 0, 0.9, 0, 1e-3))
        hist.add(EpochRecord(e, "val", 1.0, 0, 0, f1, 0, 1e-3))
    assert select_best(hist) == 1


def test_select_best_tie_goes_to_earliest():
    hist = RunHistory()
    for e, f1 in enumerate([0.2, 0.5, 0.5]):
        hist.add(EpochRecord(e, "val", 1.0, 0, 0, f1, 0, 1e-3))
    assert select_best(hist) == 1


def test_select_best_falls_back_to_train_and_rejects_empty():
    hist = RunHistory()
    hist.add(EpochRecord(0, "train", 1.0, 0, 0, 0.4, 0, 1e-3))
    hist.add(EpochRecord(1, "train", 1.0, 0, 0, 0.6, 0, 1e-3))
    assert select_best(hist) == 1
    with pytest.raises(EmptyHistoryError):
        select_best(RunHistory())


def test_short_run_records_history_and_checkpoints(tmp_path):
    pairs = _pairs(4)
    net = _net(0)
    sched = ScheduleConfig(base_lr=1e-3, decay_rate=0.2, decay_step=105,
                           batch_size=2, max_iterations=4)
    ckpt, hist = train_loop(net, pairs, sched, seed=0,
                            val_pairs=pairs[:2], run_dir=str(tmp_path),
                            augment=False, config_text="seed = 0\n")
    train_recs = hist.split_records("train")
    val_recs = hist.split_records("val")
    assert len(train_recs) == 2 and len(val_recs) == 2
    assert [r.epoch for r in train_recs] == [0, 1]
    assert all(r.lr == pytest.approx(1e-3) for r in train_recs)
    assert ckpt.step > 0
    assert ckpt.config_text == "seed = 0\n"
    assert (tmp_path / "metrics.csv").exists()
    assert (tmp_path / "checkpoints" / "best.ckpt").exists()
    assert (tmp_path / "checkpoints" / "last.ckpt").exists()
    back = RunHistory.from_csv(str(tmp_path / "metrics.csv"))
    assert len(back.records) == len(hist.records)


def test_training_is_seed_deterministic():
    pairs = _pairs(4)
    losses = []
    for _ in range(2):
        net = _net(7)
        sched = ScheduleConfig(base_lr=1e-3, decay_rate=0.2, decay_step=105,
                               batch_size=2, max_iterations=3)
        _, hist = train_loop(net, pairs, sched, seed=7, augment=True)
        losses.append([r.loss for r in hist.split_records("train")])
    assert losses[0] == losses[1]


def test_nonfinite_loss_reports_iteration():
    pairs = _pairs(2)
    net = _net(1)
    with torch.no_grad():
        net.temporal.head.weight.fill_(float("nan"))
    sched = ScheduleConfig(batch_size=2, max_iterations=2)
    with pytest.raises(NonFiniteLossError, match="iteration 0"):
        train_loop(net, pairs, sched, seed=1, augment=False)


def test_zero_iteration_run_still_yields_a_checkpoint():
    pairs = _pairs(2)
    net = _net(2)
    sched = ScheduleConfig(batch_size=2, max_iterations=0)
    ckpt, hist = train_loop(net, pairs, sched, seed=2, augment=False)
    assert ckpt.step == 0
    assert hist.records == []
    with pytest.raises(EmptyHistoryError):
        select_best(hist)


def test_train_loop_rejects_empty_or_unlabeled_data():
    net = _net(3)
    sched = ScheduleConfig(batch_size=2, max_iterations=2)
    with pytest.raises(DataError):
        train_loop(net, [], sched)
    pair = generate_synthetic(SYNTH, 0)
    pair.label = None
    with pytest.raises(DataError):
        train_loop(net, [pair], sched)


def test_early_stop_callback_halts_training():
    pairs = _pairs(2)
    net = _net(4)
    sched = ScheduleConfig(batch_size=2, max_iterations=50)
    _, hist = train_loop(net, pairs, sched, seed=4, augment=False,
                         on_epoch_end=lambda m, h: True)
    assert len(hist.split_records("train")) == 1


class _ConstantNet(CTMANet):
    """Spatially uniform prediction, used to compare whole-image and tiled
    inference paths exactly."""

    def __init__(self, value: float):
        super().__init__(TE, SE, AblationFlags(use_mask_augment=False,
                                               use_resnet_diff=False,
                                               use_motion_augment=False))
        self.value = value

    def forward(self, i1, i2):
        b, _, h, w = i1.shape
        p = torch.full((b, 1, h, w), self.value)
        coarse = p[:, :, ::4, ::4]
        return ModelOutput(coarse=coarse, coarse_full=p,
                           mask=(p >= 0.5).float(), p_gl=p, p_mask=None, p2=p)


def test_evaluate_is_stride_invariant_for_uniform_predictions():
    params = SynthParams(canvas=48, num_shapes=3, shape_min=6, shape_max=16, noise=0.0)
    pairs = [generate_synthetic(params, s) for s in (0, 1)]
    net = _ConstantNet(0.8)
    whole = evaluate(net, pairs, spec=None)
    for stride in (8, 16, 32):
        tiled = evaluate(net, pairs, spec=TileSpec(tile_size=32, stride=stride))
        assert tiled.counts.tp == whole.counts.tp
        assert tiled.counts.fp == whole.counts.fp
        assert tiled.f1 == pytest.approx(whole.f1)
    # an all-change prediction has perfect recall and precision equal to the
    # true change fraction
    assert whole.recall == pytest.approx(1.0)
    total = whole.counts.total
    assert whole.precision == pytest.approx(
        (whole.counts.tp) / max(whole.counts.tp + whole.counts.fp, 1))
    assert whole.counts.tp + whole.counts.fp == total


def test_evaluate_requires_labels():
    pair = generate_synthetic(SYNTH, 5)
    pair.label = None
    with pytest.raises(DataError):
        evaluate(_net(5).eval(), [pair])


def test_mini_ablation_rows_are_distinct_and_reproducible():
    pairs = _pairs(3, base_seed=50)
    rows = [
        AblationFlags(use_mask_augment=False, use_resnet_diff=False,
                      use_motion_augment=False),
        AblationFlags(use_mask_augment=True, use_resnet_diff=True,
                      use_motion_augment=True),
    ]
    sched = ScheduleConfig(base_lr=1e-3, decay_rate=0.2, decay_step=105,
                           batch_size=2, max_iterations=2)

    def run():
        return run_ablation(TE, SE, rows, pairs, sched, seed=9)

    first = run()
    second = run()
    assert first[0].parameter_count != first[1].parameter_count
    for a, b in zip(first, second):
        assert a.report.f1 == b.report.f1
        assert a.report.precision == b.report.precision
    table = format_ablation_table(first)
    lines = table.strip().splitlines()
    assert len(lines) == 3
    assert "MA- RN- MO-" in lines[1] and "MA+ RN+ MO+" in lines[2]


def test_ablation_rejects_empty_rows():
    with pytest.raises(ConfigError):
        run_ablation(TE, SE, [], _pairs(1), ScheduleConfig(max_iterations=1))
