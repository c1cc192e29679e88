"""Temporal branch: 3D convolutions over the interpolated frame stack.

The stack (B, 3, N, H, W) is downsampled 4x spatially by a strided 3D stem,
refined by two residual 3D blocks, squeezed over time by an attention module,
and read out as a coarse change probability map at 1/4 resolution.
"""

from dataclasses import dataclass, field
from typing import List, Tuple

import torch
import torch.nn as nn

from .errors import BadShapeError, BadThresholdError, ConfigError


@dataclass
class TEConfig:
    """Widths and knobs of the temporal branch. tblock2_filters lists four
    counts, consumed pairwise by the two residual 3D blocks."""

    tblock1_channels: int = 64
    tblock2_filters: List[int] = field(default_factory=lambda: [256, 256, 512, 512])
    mask_threshold: float = 0.5
    n_frames: int = 8

    def validate(self):
        if self.tblock1_channels < 1:
            raise ConfigError("tblock1_channels must be positive")
        if len(self.tblock2_filters) != 4:
            raise ConfigError(
                f"tblock2_filters needs 4 entries, got {len(self.tblock2_filters)}"
            )
        if any(f < 1 for f in self.tblock2_filters):
            raise ConfigError("tblock2_filters must be positive")
        if not 0.0 < self.mask_threshold < 1.0:
            raise ConfigError(f"mask_threshold must lie in (0, 1), got {self.mask_threshold}")
        if self.n_frames < 2:
            raise ConfigError(f"n_frames must be at least 2, got {self.n_frames}")
        return self


class TBlockI(nn.Module):
    """Strided 3D stem. Kernel (3, 9, 9), stride (1, 4, 4), padding (1, 4, 4):
    time length is preserved, height and width shrink exactly 4x (they must be
    divisible by 4)."""

    def __init__(self, out_channels: int = 64):
        super().__init__()
        self.conv = nn.Conv3d(3, out_channels, kernel_size=(3, 9, 9),
                              stride=(1, 4, 4), padding=(1, 4, 4))
        self.bn = nn.BatchNorm3d(out_channels)
        self.relu = nn.ReLU(inplace=True)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.dim() != 5 or x.shape[1] != 3:
            raise BadShapeError(f"expected (B, 3, N, H, W), got {tuple(x.shape)}")
        if x.shape[-2] % 4 or x.shape[-1] % 4:
            raise BadShapeError(
                f"height and width must be divisible by 4, got {tuple(x.shape[-2:])}"
            )
        return self.relu(self.bn(self.conv(x)))


class TBlockII(nn.Module):
    """Residual 3D block: 1x1x1 bottleneck entry, 3x3x3 body, 3x3x3 exit to f2,
    projection shortcut, ReLU after the add. Spatial and temporal sizes are
    unchanged."""

    def __init__(self, in_channels: int, f1: int, f2: int):
        super().__init__()
        self.conv1 = nn.Conv3d(in_channels, f1, kernel_size=1)
        self.bn1 = nn.BatchNorm3d(f1)
        self.conv2 = nn.Conv3d(f1, f1, kernel_size=3, padding=1)
        self.bn2 = nn.BatchNorm3d(f1)
        self.conv3 = nn.Conv3d(f1, f2, kernel_size=3, padding=1)
        self.bn3 = nn.BatchNorm3d(f2)
        self.proj = nn.Conv3d(in_channels, f2, kernel_size=1)
        self.bn_proj = nn.BatchNorm3d(f2)
        self.relu = nn.ReLU(inplace=True)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        u = self.relu(self.bn1(self.conv1(x)))
        v = self.relu(self.bn2(self.conv2(u)))
        w = self.bn3(self.conv3(v))
        s = self.bn_proj(self.proj(x))
        return self.relu(w + s)


def _sorted_time_mean(x: torch.Tensor) -> torch.Tensor:
    # Sorting along time before the fixed-order sum makes the float reduction
    # independent of frame order, so any permutation of the stack gives a
    # bitwise identical mean.
    vals, _ = torch.sort(x, dim=2)
    n = x.shape[2]
    out = vals[:, :, 0]
    for i in range(1, n):
        out = out + vals[:, :, i]
    return out / n


class TemporalAttention(nn.Module):
    """Squeeze the time axis: order-invariant average and max pooling over
    frames, concatenated and mixed by a 1x1 convolution.

    (B, C, N, H, W) -> (B, C, H, W)
    """

    def __init__(self, channels: int):
        super().__init__()
        self.mix = nn.Conv2d(2 * channels, channels, kernel_size=1)
        self.bn = nn.BatchNorm2d(channels)
        self.relu = nn.ReLU(inplace=True)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.dim() != 5:
            raise BadShapeError(f"expected (B, C, N, H, W), got {tuple(x.shape)}")
        avg = _sorted_time_mean(x)
        mx = torch.amax(x, dim=2)
        return self.relu(self.bn(self.mix(torch.cat([avg, mx], dim=1))))


def threshold_mask(prob: torch.Tensor, threshold: float, out_hw: Tuple[int, int]) -> torch.Tensor:
    """Binarize a coarse probability map, then nearest-neighbour upsample the
    binary result to out_hw. Binarizing first keeps the output exactly {0, 1}.
    Ties (p == threshold) count as change."""
    if not 0.0 < threshold < 1.0:
        raise BadThresholdError(f"threshold must lie in (0, 1), got {threshold}")
    binary = (prob >= threshold).to(prob.dtype)
    if binary.shape[-2:] == tuple(out_hw):
        return binary
    return nn.functional.interpolate(binary, size=tuple(out_hw), mode="nearest")


class TemporalEncoder(nn.Module):
    """Full temporal branch. forward() returns the coarse probability map at
    1/4 input resolution plus the two intermediate time-squeezed feature maps
    used to augment the spatial branch.

    The first aggregation head exists only to feed motion injection, so it is
    skipped (feat1 = None) when build_first_tam is off; this keeps every
    constructed parameter on a gradient path.
    """

    def __init__(self, cfg: TEConfig = None, build_first_tam: bool = True):
        super().__init__()
        cfg = (cfg or TEConfig()).validate()
        self.cfg = cfg
        c0 = cfg.tblock1_channels
        f1a, f2a, f1b, f2b = cfg.tblock2_filters
        self.stem = TBlockI(c0)
        self.block1 = TBlockII(c0, f1a, f2a)
        self.block2 = TBlockII(f2a, f1b, f2b)
        self.attn1 = TemporalAttention(f2a) if build_first_tam else None
        self.attn2 = TemporalAttention(f2b)
        self.head = nn.Conv2d(f2b, 1, kernel_size=3, padding=1)

    def coarse_logits(self, frames: torch.Tensor):
        """frames: (B, 3, N, H, W) -> (logits (B, 1, H/4, W/4),
        feat1 (B, f2a, H/4, W/4) or None, feat2 (B, f2b, H/4, W/4))."""
        x = self.stem(frames)
        b1 = self.block1(x)
        b2 = self.block2(b1)
        feat1 = self.attn1(b1) if self.attn1 is not None else None
        feat2 = self.attn2(b2)
        return self.head(feat2), feat1, feat2

    def forward(self, frames: torch.Tensor):
        """Same pass with the head squashed to [0, 1]."""
        logits, feat1, feat2 = self.coarse_logits(frames)
        return torch.sigmoid(logits), feat1, feat2
