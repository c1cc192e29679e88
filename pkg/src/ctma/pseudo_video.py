"""Bi-temporal pair validation and pseudo-video construction.

A registered image pair (3xHxW each, values in [0, 1]) is expanded into an
N-frame sequence by per-pixel linear interpolation. Frame 0 and frame N-1 are
direct copies of the two input images; intermediate frames sit on the straight
line between them, so every pixel stays inside the interval spanned by its two
endpoint values.
"""

from dataclasses import dataclass
from typing import Optional

import torch

from .errors import BadFrameCountError, ShapeMismatchError, ValueRangeError


@dataclass
class BiTemporalPair:
    """Validated image pair with an optional binary change label."""

    i1: torch.Tensor            # (3, H, W) in [0, 1]
    i2: torch.Tensor            # (3, H, W) in [0, 1]
    label: Optional[torch.Tensor] = None  # (1, H, W) in {0, 1}
    id: str = ""

    @property
    def height(self) -> int:
        return self.i1.shape[-2]

    @property
    def width(self) -> int:
        return self.i1.shape[-1]


@dataclass
class PseudoVideo:
    frames: torch.Tensor        # (N, 3, H, W)
    frame_count: int


def validate_pair(i1, i2, label=None, id="") -> BiTemporalPair:
    """Check shapes and value ranges, returning a BiTemporalPair.

    Raises ShapeMismatchError if the two images (or the label's spatial dims)
    disagree, ValueRangeError if pixels leave [0, 1] or the label is not
    strictly {0, 1}.
    """
    i1 = torch.as_tensor(i1, dtype=torch.float32)
    i2 = torch.as_tensor(i2, dtype=torch.float32)
    if i1.shape != i2.shape:
        raise ShapeMismatchError(
            f"pair {id!r}: image shapes differ: {tuple(i1.shape)} vs {tuple(i2.shape)}"
        )
    if i1.dim() != 3 or i1.shape[0] != 3:
        raise ShapeMismatchError(
            f"pair {id!r}: expected (3, H, W) images, got {tuple(i1.shape)}"
        )
    for name, img in (("i1", i1), ("i2", i2)):
        lo, hi = float(img.min()), float(img.max())
        if lo < 0.0 or hi > 1.0:
            raise ValueRangeError(
                f"pair {id!r}: {name} pixel values outside [0, 1] (min {lo}, max {hi})"
            )
    if label is not None:
        label = torch.as_tensor(label, dtype=torch.float32)
        if label.dim() == 2:
            label = label.unsqueeze(0)
        if label.shape != (1, i1.shape[1], i1.shape[2]):
            raise ShapeMismatchError(
                f"pair {id!r}: label shape {tuple(label.shape)} does not match "
                f"images {tuple(i1.shape[1:])}"
            )
        if not torch.all((label == 0) | (label == 1)):
            raise ValueRangeError(f"pair {id!r}: label values must be exactly 0 or 1")
    return BiTemporalPair(i1=i1, i2=i2, label=label, id=id)


def interpolate_pair(pair: BiTemporalPair, n_frames: int = 8) -> PseudoVideo:
    """Build the N-frame linear transition from pair.i1 to pair.i2.

    Frame n is i1 + n/(N-1) * (i2 - i1); the endpoint frames are exact copies
    of the inputs (assigned, not recomputed, so they are bitwise identical).
    """
    if n_frames < 2:
        raise BadFrameCountError(f"n_frames must be >= 2, got {n_frames}")
    frames = torch.empty((n_frames,) + tuple(pair.i1.shape), dtype=pair.i1.dtype)
    frames[0] = pair.i1
    frames[n_frames - 1] = pair.i2
    delta = pair.i2 - pair.i1
    for n in range(1, n_frames - 1):
        frames[n] = pair.i1 + (n / (n_frames - 1)) * delta
    return PseudoVideo(frames=frames, frame_count=n_frames)


def interpolate_batch(i1: torch.Tensor, i2: torch.Tensor, n_frames: int) -> torch.Tensor:
    """Batched variant used by the training loop.

    i1, i2: (B, 3, H, W) -> returns (B, 3, N, H, W) with the time axis third,
    ready for 3D convolution.
    """
    if n_frames < 2:
        raise BadFrameCountError(f"n_frames must be >= 2, got {n_frames}")
    if i1.shape != i2.shape:
        raise ShapeMismatchError(
            f"batch shapes differ: {tuple(i1.shape)} vs {tuple(i2.shape)}"
        )
    frames = torch.empty(
        (i1.shape[0], i1.shape[1], n_frames, i1.shape[2], i1.shape[3]), dtype=i1.dtype
    )
    frames[:, :, 0] = i1
    frames[:, :, n_frames - 1] = i2
    delta = i2 - i1
    for n in range(1, n_frames - 1):
        frames[:, :, n] = i1 + (n / (n_frames - 1)) * delta
    return frames
