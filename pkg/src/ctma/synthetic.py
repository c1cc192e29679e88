"""Synthetic bi-temporal pairs with exact ground truth.

The first image is a smooth textured background; the second toggles a few
bright rectangles/ellipses on or off. The label is exactly the union of the
toggled shapes' pixel masks, so tests and the desk-scale overfit run have a
known-correct target. Everything is a deterministic function of the seed.
"""

from dataclasses import dataclass

import numpy as np
import torch

from .errors import ConfigError
from .pseudo_video import BiTemporalPair


@dataclass
class SynthParams:
    canvas: int = 64
    num_shapes: int = 3
    shape_min: int = 8
    shape_max: int = 24
    noise: float = 0.01

    def validate(self):
        if self.canvas < 8:
            raise ConfigError(f"canvas must be >= 8, got {self.canvas}")
        if self.num_shapes < 0:
            raise ConfigError("num_shapes must be >= 0")
        if not 0 < self.shape_min <= self.shape_max <= self.canvas:
            raise ConfigError(
                f"need 0 < shape_min <= shape_max <= canvas, got "
                f"{self.shape_min}..{self.shape_max} on canvas {self.canvas}"
            )
        if self.noise < 0:
            raise ConfigError("noise must be >= 0")
        return self


def _background(rng, size):
    # low-frequency texture: coarse noise blown up with bilinear weights
    coarse = rng.uniform(0.15, 0.45, size=(3, max(2, size // 8), max(2, size // 8)))
    t = torch.nn.functional.interpolate(
        torch.from_numpy(coarse).unsqueeze(0),
        size=(size, size),
        mode="bilinear",
        align_corners=False,
    )[0]
    return t.numpy()


def _shape_mask(rng, size, lo, hi):
    h = int(rng.integers(lo, hi + 1))
    w = int(rng.integers(lo, hi + 1))
    r0 = int(rng.integers(0, size - h + 1))
    c0 = int(rng.integers(0, size - w + 1))
    mask = np.zeros((size, size), dtype=bool)
    if rng.random() < 0.5:
        mask[r0 : r0 + h, c0 : c0 + w] = True
    else:
        yy, xx = np.mgrid[0:size, 0:size]
        cy, cx = r0 + h / 2.0, c0 + w / 2.0
        mask[((yy - cy) / (h / 2.0)) ** 2 + ((xx - cx) / (w / 2.0)) ** 2 <= 1.0] = True
    return mask


def generate_synthetic(params: SynthParams, seed: int) -> BiTemporalPair:
    """One deterministic pair: shapes present in exactly one of the images."""
    params.validate()
    rng = np.random.default_rng(seed)
    size = params.canvas

    base = _background(rng, size)
    i1 = base.copy()
    i2 = base.copy()
    label = np.zeros((size, size), dtype=bool)

    for _ in range(params.num_shapes):
        # shapes are kept disjoint so the label is exactly the union of the
        # toggled regions with no ambiguity where two shapes would overlap
        mask = None
        for _attempt in range(64):
            cand = _shape_mask(rng, size, params.shape_min, params.shape_max)
            if not (cand & label).any():
                mask = cand
                break
        if mask is None:
            continue
        color = rng.uniform(0.6, 0.95, size=3)
        target = i2 if rng.random() < 0.5 else i1  # shape appears or disappears
        for ch in range(3):
            target[ch][mask] = color[ch]
        label |= mask

    if params.noise > 0:
        i1 = i1 + rng.normal(0.0, params.noise, size=i1.shape)
        i2 = i2 + rng.normal(0.0, params.noise, size=i2.shape)
    i1 = np.clip(i1, 0.0, 1.0)
    i2 = np.clip(i2, 0.0, 1.0)

    return BiTemporalPair(
        i1=torch.from_numpy(i1.astype(np.float32)),
        i2=torch.from_numpy(i2.astype(np.float32)),
        label=torch.from_numpy(label[None].astype(np.float32)),
        id=f"synth{seed:06d}",
    )
