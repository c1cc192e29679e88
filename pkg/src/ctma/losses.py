"""Class-weighted binary cross-entropy and the two-branch training objective.

The coarse and fine probability maps are supervised jointly:

    balanced mode (default):  alpha * L_coarse + (1 - alpha) * L_fine
    auxiliary mode:           L_fine + aux_weight * L_coarse

With inverse-frequency class weighting the positive/negative terms are scaled
by the opposite class's pixel share in the current batch, which keeps sparse
change regions from being drowned out by background.
"""

from dataclasses import dataclass

import torch
import torch.nn.functional as F

from .errors import ConfigError, NonBinaryError, ShapeMismatchError


@dataclass
class LossConfig:
    alpha: float = 0.5
    aux_weight: float = 0.4
    mode: str = "balanced"              # balanced | auxiliary
    class_weighting: str = "inverse_frequency"  # inverse_frequency | none
    epsilon: float = 1e-7

    def validate(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"loss alpha must be in [0, 1], got {self.alpha}")
        if not 0.0 < self.epsilon < 0.01:
            raise ConfigError(f"loss epsilon must be in (0, 0.01), got {self.epsilon}")
        if self.mode not in ("balanced", "auxiliary"):
            raise ConfigError(f"unknown loss mode {self.mode!r}")
        if self.class_weighting not in ("inverse_frequency", "none"):
            raise ConfigError(f"unknown class weighting {self.class_weighting!r}")
        return self


def _check_target(pred, target):
    if pred.shape != target.shape:
        raise ShapeMismatchError(
            f"prediction {tuple(pred.shape)} vs target {tuple(target.shape)}"
        )
    if not torch.all((target == 0) | (target == 1)):
        raise NonBinaryError("target contains values other than 0 and 1")


def _class_weights(target, cfg: LossConfig):
    # w_pos = share of negatives, w_neg = share of positives (per batch)
    if cfg.class_weighting == "none":
        return 1.0, 1.0
    n_total = target.numel()
    n_pos = target.sum()
    w_pos = (n_total - n_pos) / n_total
    w_neg = n_pos / n_total
    return w_pos, w_neg


def weighted_bce(pred, target, cfg: LossConfig = None):
    """Mean weighted BCE over all pixels of a probability map.

    Predictions are clamped to [eps, 1-eps] before the logs.
    """
    cfg = cfg or LossConfig()
    _check_target(pred, target)
    w_pos, w_neg = _class_weights(target, cfg)
    p = pred.clamp(cfg.epsilon, 1.0 - cfg.epsilon)
    loss = -(w_pos * target * torch.log(p) + w_neg * (1.0 - target) * torch.log(1.0 - p))
    return loss.mean()


def weighted_bce_from_logits(logits, target, cfg: LossConfig = None):
    """Same objective computed from raw scores via log-sigmoid.

    Logits are clamped to the range matching the probability-space epsilon
    clamp, so values agree with weighted_bce(sigmoid(logits), ...) up to
    float rounding while avoiding log of a saturated sigmoid.
    """
    cfg = cfg or LossConfig()
    _check_target(logits, target)
    w_pos, w_neg = _class_weights(target, cfg)
    bound = float(torch.log(torch.tensor((1.0 - cfg.epsilon) / cfg.epsilon)))
    z = logits.clamp(-bound, bound)
    loss = -(w_pos * target * F.logsigmoid(z) + w_neg * (1.0 - target) * F.logsigmoid(-z))
    return loss.mean()


def total_loss(p1, p2, target, cfg: LossConfig = None):
    """Joint objective over the coarse map p1 and the fused map p2.

    p1 must already be upsampled to the target resolution.
    """
    cfg = cfg or LossConfig()
    l1 = weighted_bce(p1, target, cfg)
    l2 = weighted_bce(p2, target, cfg)
    if cfg.mode == "auxiliary":
        return l2 + cfg.aux_weight * l1
    return cfg.alpha * l1 + (1.0 - cfg.alpha) * l2
