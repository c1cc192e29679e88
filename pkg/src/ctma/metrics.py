"""Confusion counting and derived evaluation metrics.

Counts accumulate additively, so evaluation can map-reduce over tiles or
dataset chunks and merge at the end.
"""

from dataclasses import dataclass

import torch

from .errors import NonBinaryError, ShapeMismatchError


@dataclass
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(
            tp=self.tp + other.tp,
            fp=self.fp + other.fp,
            fn=self.fn + other.fn,
            tn=self.tn + other.tn,
        )

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass
class MetricsReport:
    precision: float
    recall: float
    f1: float
    oa: float
    counts: ConfusionCounts


def accumulate_confusion(pred_mask, target, acc: ConfusionCounts = None) -> ConfusionCounts:
    """Add per-pixel confusion counts of a binary prediction into acc.

    Both inputs must be binary tensors of identical shape. Returns a new
    ConfusionCounts (the accumulator is not mutated).
    """
    pred_mask = torch.as_tensor(pred_mask)
    target = torch.as_tensor(target)
    if pred_mask.shape != target.shape:
        raise ShapeMismatchError(
            f"prediction {tuple(pred_mask.shape)} vs target {tuple(target.shape)}"
        )
    for name, t in (("prediction", pred_mask), ("target", target)):
        if not torch.all((t == 0) | (t == 1)):
            raise NonBinaryError(f"{name} contains values other than 0 and 1")
    p = pred_mask.bool()
    y = target.bool()
    counts = ConfusionCounts(
        tp=int((p & y).sum()),
        fp=int((p & ~y).sum()),
        fn=int((~p & y).sum()),
        tn=int((~p & ~y).sum()),
    )
    return counts if acc is None else acc + counts


def compute_metrics(counts: ConfusionCounts) -> MetricsReport:
    """Precision, recall, F1 and overall accuracy from confusion counts.

    Zero denominators yield 0 for the affected metric (and F1 = 0 when
    precision + recall = 0).
    """
    tp, fp, fn, tn = counts.tp, counts.fp, counts.fn, counts.tn
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    oa = (tp + tn) / counts.total if counts.total > 0 else 0.0
    return MetricsReport(precision=precision, recall=recall, f1=f1, oa=oa, counts=counts)
