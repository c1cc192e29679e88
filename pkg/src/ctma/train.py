"""Training loop, step-decay schedule, tiled evaluation, ablation runner.

Every source of randomness is a deterministic function of the run seed: batch
order comes from a dedicated numpy generator, per-sample augmentation seeds
are derived from (seed, epoch, index), and the model's own initialization is
seeded by the caller before construction. Two runs with the same seed on the
same build produce identical loss sequences and identical checkpoint bytes.
"""

import os
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence

import numpy as np
import torch

from .checkpoint import Checkpoint, save_checkpoint
from .data import augment_sample
from .errors import ConfigError, DataError, EmptyHistoryError, NonFiniteLossError
from .losses import LossConfig, total_loss
from .metrics import ConfusionCounts, MetricsReport, accumulate_confusion, compute_metrics
from .model import CTMANet, STANDARD_ABLATION_ROWS, AblationFlags
from .pseudo_video import BiTemporalPair
from .spatial_encoder import binarize
from .tiling import TileSpec, stitch_predictions, tile_image

CSV_HEADER = "epoch,split,loss,precision,recall,f1,oa,lr"


@dataclass
class ScheduleConfig:
    base_lr: float = 0.0004
    decay_rate: float = 0.2
    decay_step: int = 105
    optimizer: str = "adam"
    batch_size: int = 8
    max_iterations: int = 160000
    weight_decay: float = 0.0
    grad_clip: float = 0.0

    def validate(self):
        if self.base_lr <= 0:
            raise ConfigError(f"base_lr must be positive, got {self.base_lr}")
        if not 0.0 < self.decay_rate < 1.0:
            raise ConfigError(f"decay_rate must lie in (0, 1), got {self.decay_rate}")
        if self.decay_step < 1:
            raise ConfigError(f"decay_step must be >= 1, got {self.decay_step}")
        if self.optimizer != "adam":
            raise ConfigError(f"unsupported optimizer {self.optimizer!r}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.max_iterations < 0:
            raise ConfigError("max_iterations must be >= 0")
        if self.weight_decay < 0 or self.grad_clip < 0:
            raise ConfigError("weight_decay and grad_clip must be >= 0")
        return self


def lr_at(epoch: int, cfg: ScheduleConfig) -> float:
    """Step decay: base_lr * decay_rate^(number of completed decay periods)."""
    return cfg.base_lr * cfg.decay_rate ** (epoch // cfg.decay_step)


@dataclass
class EpochRecord:
    epoch: int
    split: str
    loss: float
    precision: float
    recall: float
    f1: float
    oa: float
    lr: float

    def csv_row(self) -> str:
        return (f"{self.epoch},{self.split},{self.loss:.6f},{self.precision:.6f},"
                f"{self.recall:.6f},{self.f1:.6f},{self.oa:.6f},{self.lr:.8g}")


class RunHistory:
    """Per-epoch train/val records; epochs strictly increase within a split."""

    def __init__(self):
        self.records: List[EpochRecord] = []
        self._last_epoch = {}

    def add(self, rec: EpochRecord):
        last = self._last_epoch.get(rec.split)
        if last is not None and rec.epoch <= last:
            raise ValueError(
                f"epoch {rec.epoch} for split {rec.split!r} is not increasing (last {last})"
            )
        self._last_epoch[rec.split] = rec.epoch
        self.records.append(rec)

    def split_records(self, split: str) -> List[EpochRecord]:
        return [r for r in self.records if r.split == split]

    def to_csv(self, path: str):
        with open(path, "w") as f:
            f.write(CSV_HEADER + "\n")
            for r in self.records:
                f.write(r.csv_row() + "\n")

    @classmethod
    def from_csv(cls, path: str) -> "RunHistory":
        hist = cls()
        with open(path) as f:
            header = f.readline().strip()
            if header != CSV_HEADER:
                raise DataError(f"unexpected metrics header in {path}: {header!r}")
            for line in f:
                line = line.strip()
                if not line:
                    continue
                e, split, loss, p, r, f1, oa, lr = line.split(",")
                hist.add(EpochRecord(int(e), split, float(loss), float(p),
                                     float(r), float(f1), float(oa), float(lr)))
        return hist


def select_best(history: RunHistory) -> int:
    """Epoch with the highest validation F1; earliest wins ties. Falls back to
    train records when no validation split was run."""
    recs = history.split_records("val") or history.split_records("train")
    if not recs:
        raise EmptyHistoryError("history holds no epoch records")
    best = max(recs, key=lambda r: (r.f1, -r.epoch))
    return best.epoch


def _augment_seed(seed: int, epoch: int, index: int) -> int:
    return ((seed + 1) * 2654435761 + epoch * 40503 + index * 97) % (2 ** 31)


def _stack_batch(pairs: Sequence[BiTemporalPair]):
    i1 = torch.stack([p.i1 for p in pairs])
    i2 = torch.stack([p.i2 for p in pairs])
    y = torch.stack([p.label for p in pairs])
    return i1, i2, y


def predict_probability(model: CTMANet, pair: BiTemporalPair,
                        spec: Optional[TileSpec] = None,
                        batch_size: int = 8) -> torch.Tensor:
    """Fused probability map for one pair: whole-image when it fits in a single
    tile, otherwise sliding-window inference with overlap averaging.
    Returns (1, 1, H, W)."""
    h, w = pair.height, pair.width
    if spec is None or h < spec.tile_size or w < spec.tile_size:
        out = model(pair.i1.unsqueeze(0), pair.i2.unsqueeze(0))
        return out.p2
    tiles1, index = tile_image(pair.i1, spec)
    tiles2, _ = tile_image(pair.i2, spec)
    preds = []
    for s in range(0, tiles1.shape[0], batch_size):
        out = model(tiles1[s:s + batch_size], tiles2[s:s + batch_size])
        preds.append(out.p2)
    stitched = stitch_predictions(torch.cat(preds, dim=0), index)
    return stitched.unsqueeze(0)


def evaluate(model: CTMANet, pairs: Sequence[BiTemporalPair],
             spec: Optional[TileSpec] = None, threshold: float = 0.5,
             batch_size: int = 8) -> MetricsReport:
    """Tile, predict, stitch, binarize, and accumulate confusion over a split."""
    model.eval()
    counts = ConfusionCounts()
    with torch.no_grad():
        for pair in pairs:
            if pair.label is None:
                raise DataError(f"pair {pair.id!r} has no label; cannot evaluate")
            p2 = predict_probability(model, pair, spec, batch_size)
            pred = binarize(p2, threshold)
            counts = accumulate_confusion(pred, pair.label.unsqueeze(0), counts)
    return compute_metrics(counts)


def _validation_pass(model, pairs, loss_cfg, threshold, batch_size):
    model.eval()
    losses = []
    counts = ConfusionCounts()
    with torch.no_grad():
        for s in range(0, len(pairs), batch_size):
            i1, i2, y = _stack_batch(pairs[s:s + batch_size])
            out = model(i1, i2)
            losses.append(float(total_loss(out.coarse_full, out.p2, y, loss_cfg)))
            counts = accumulate_confusion(binarize(out.p2, threshold), y, counts)
    report = compute_metrics(counts)
    return float(np.mean(losses)), report


def train_loop(model: CTMANet, train_pairs: Sequence[BiTemporalPair],
               schedule: ScheduleConfig, loss_cfg: LossConfig = None,
               seed: int = 0, val_pairs: Optional[Sequence[BiTemporalPair]] = None,
               run_dir: Optional[str] = None, augment: bool = True,
               translate_frac: float = 0.1, config_text: str = "",
               on_epoch_end: Optional[Callable[[CTMANet, RunHistory], bool]] = None):
    """Iterate batches until max_iterations, validating once per epoch.

    Returns (checkpoint of the best model by validation F1, history). The
    model is left at its final (not necessarily best) parameters; the run
    directory, when given, receives metrics.csv plus last/best checkpoints.
    """
    schedule.validate()
    loss_cfg = (loss_cfg or LossConfig()).validate()
    if not train_pairs:
        raise DataError("training split is empty")
    for p in train_pairs:
        if p.label is None:
            raise DataError(f"training pair {p.id!r} has no label")

    threshold = model.se_cfg.fusion.binarize_threshold
    opt = torch.optim.Adam(model.parameters(), lr=schedule.base_lr,
                           weight_decay=schedule.weight_decay)
    order_rng = np.random.default_rng(seed)
    history = RunHistory()
    best_f1 = None
    best_ckpt = None
    ckpt_dir = None
    if run_dir:
        ckpt_dir = os.path.join(run_dir, "checkpoints")
        os.makedirs(ckpt_dir, exist_ok=True)

    n = len(train_pairs)
    iters_done = 0
    epoch = 0
    while iters_done < schedule.max_iterations:
        lr = lr_at(epoch, schedule)
        for g in opt.param_groups:
            g["lr"] = lr
        perm = order_rng.permutation(n)
        model.train()
        losses = []
        counts = ConfusionCounts()
        for start in range(0, n, schedule.batch_size):
            if iters_done >= schedule.max_iterations:
                break
            idxs = perm[start:start + schedule.batch_size]
            batch = [train_pairs[i] for i in idxs]
            if augment:
                batch = [
                    augment_sample(p, _augment_seed(seed, epoch, int(i)), translate_frac)
                    for p, i in zip(batch, idxs)
                ]
            i1, i2, y = _stack_batch(batch)
            out = model(i1, i2)
            loss = total_loss(out.coarse_full, out.p2, y, loss_cfg)
            if not torch.isfinite(loss):
                raise NonFiniteLossError(f"non-finite loss at iteration {iters_done}")
            opt.zero_grad()
            loss.backward()
            if schedule.grad_clip > 0:
                torch.nn.utils.clip_grad_norm_(model.parameters(), schedule.grad_clip)
            opt.step()
            losses.append(float(loss.detach()))
            with torch.no_grad():
                counts = accumulate_confusion(binarize(out.p2.detach(), threshold), y, counts)
            iters_done += 1

        train_report = compute_metrics(counts)
        history.add(EpochRecord(epoch, "train", float(np.mean(losses)),
                                train_report.precision, train_report.recall,
                                train_report.f1, train_report.oa, lr))
        if val_pairs:
            val_loss, val_report = _validation_pass(
                model, val_pairs, loss_cfg, threshold, schedule.batch_size)
            history.add(EpochRecord(epoch, "val", val_loss, val_report.precision,
                                    val_report.recall, val_report.f1,
                                    val_report.oa, lr))
            epoch_f1 = val_report.f1
        else:
            epoch_f1 = train_report.f1

        if best_f1 is None or epoch_f1 > best_f1:
            best_f1 = epoch_f1
            best_ckpt = Checkpoint.from_model(model, step=iters_done,
                                              best_val_f1=best_f1,
                                              config_text=config_text)
            if ckpt_dir:
                save_checkpoint(best_ckpt, os.path.join(ckpt_dir, "best.ckpt"))
        if run_dir:
            history.to_csv(os.path.join(run_dir, "metrics.csv"))
            save_checkpoint(
                Checkpoint.from_model(model, step=iters_done,
                                      best_val_f1=best_f1 if best_f1 is not None else 0.0,
                                      config_text=config_text),
                os.path.join(ckpt_dir, "last.ckpt"))
        epoch += 1
        if on_epoch_end is not None and on_epoch_end(model, history):
            break

    if best_ckpt is None:
        best_ckpt = Checkpoint.from_model(model, step=iters_done,
                                          best_val_f1=0.0, config_text=config_text)
        if ckpt_dir:
            save_checkpoint(best_ckpt, os.path.join(ckpt_dir, "last.ckpt"))
    return best_ckpt, history


@dataclass
class AblationResult:
    flags: AblationFlags
    report: MetricsReport
    parameter_count: int


def run_ablation(te_cfg, se_cfg, rows: Optional[List[AblationFlags]],
                 train_pairs: Sequence[BiTemporalPair],
                 schedule: ScheduleConfig, loss_cfg: LossConfig = None,
                 seed: int = 0, eval_pairs: Optional[Sequence[BiTemporalPair]] = None,
                 augment: bool = False) -> List[AblationResult]:
    """Train and evaluate one model per component row under identical seed and
    data, mirroring the four-row component study."""
    rows = rows if rows is not None else list(STANDARD_ABLATION_ROWS)
    if not rows:
        raise ConfigError("ablation needs at least one row")
    results = []
    for flags in rows:
        torch.manual_seed(seed)
        model = CTMANet(te_cfg, se_cfg, flags)
        train_loop(model, train_pairs, schedule, loss_cfg, seed=seed, augment=augment)
        report = evaluate(model, eval_pairs if eval_pairs is not None else train_pairs,
                          spec=None,
                          threshold=model.se_cfg.fusion.binarize_threshold,
                          batch_size=schedule.batch_size)
        results.append(AblationResult(flags, report, model.parameter_count()))
    return results


def format_ablation_table(results: List[AblationResult]) -> str:
    lines = [
        f"{'row':<4} {'components':<12} {'params':>10} {'precision':>10} "
        f"{'recall':>10} {'f1':>10} {'oa':>10}",
    ]
    for i, res in enumerate(results, 1):
        r = res.report
        lines.append(
            f"{i:<4} {res.flags.label():<12} {res.parameter_count:>10} "
            f"{r.precision:>10.4f} {r.recall:>10.4f} {r.f1:>10.4f} {r.oa:>10.4f}"
        )
    return "\n".join(lines) + "\n"
