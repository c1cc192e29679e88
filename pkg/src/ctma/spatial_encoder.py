"""Spatial branch: global-local encoding of the image pair, shared-weight
residual difference features, motion feature injection, four-block decoding,
the mask-augmented branch, and probability fusion.

Feature pyramid convention: three levels at strides 2, 4, 8 with channels
(32, 64, 128) by default. The difference backbone also ends at stride 8 so its
output concatenates with the deepest level; deeper stages would never be
consumed and are therefore not built.
"""

from dataclasses import dataclass, field
from typing import Optional, Tuple

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import BadThresholdError, ConfigError, ShapeMismatchError


@dataclass
class FusionConfig:
    lambda_mask: float = 0.3
    gl_weights: Tuple[float, float] = (0.5, 0.5)
    binarize_threshold: float = 0.5

    def validate(self):
        if not 0.0 <= self.lambda_mask <= 1.0:
            raise ConfigError(f"lambda_mask must lie in [0, 1], got {self.lambda_mask}")
        w1, w2 = self.gl_weights
        if w1 < 0 or w2 < 0 or abs(w1 + w2 - 1.0) > 1e-9:
            raise ConfigError(f"gl_weights must be nonnegative and sum to 1, got {self.gl_weights}")
        if not 0.0 < self.binarize_threshold < 1.0:
            raise ConfigError(
                f"binarize_threshold must lie in (0, 1), got {self.binarize_threshold}"
            )
        return self


@dataclass
class SEConfig:
    channels: Tuple[int, int, int] = (32, 64, 128)
    backbone_stem: int = 64
    backbone_stages: Tuple[int, int] = (64, 128)
    fusion: FusionConfig = field(default_factory=FusionConfig)

    def validate(self):
        if len(self.channels) != 3 or any(c < 1 for c in self.channels):
            raise ConfigError(f"channels must be 3 positive counts, got {self.channels}")
        if self.backbone_stem < 1 or any(c < 1 for c in self.backbone_stages):
            raise ConfigError("backbone widths must be positive")
        self.fusion.validate()
        return self


class SBlockI(nn.Module):
    """conv-norm-relu, conv-norm, residual from the first relu to the second
    norm, relu, then 2x max-pool."""

    def __init__(self, in_channels: int, out_channels: int):
        super().__init__()
        self.conv1 = nn.Conv2d(in_channels, out_channels, 3, padding=1)
        self.bn1 = nn.BatchNorm2d(out_channels)
        self.conv2 = nn.Conv2d(out_channels, out_channels, 3, padding=1)
        self.bn2 = nn.BatchNorm2d(out_channels)
        self.relu = nn.ReLU(inplace=True)
        self.pool = nn.MaxPool2d(2)

    def forward(self, x):
        y1 = self.relu(self.bn1(self.conv1(x)))
        y2 = self.bn2(self.conv2(y1))
        return self.pool(self.relu(y1 + y2))


class SBlockII(nn.Module):
    """SBlockI with one extra conv-norm-relu before the closing conv-norm."""

    def __init__(self, in_channels: int, out_channels: int):
        super().__init__()
        self.conv1 = nn.Conv2d(in_channels, out_channels, 3, padding=1)
        self.bn1 = nn.BatchNorm2d(out_channels)
        self.conv2 = nn.Conv2d(out_channels, out_channels, 3, padding=1)
        self.bn2 = nn.BatchNorm2d(out_channels)
        self.conv3 = nn.Conv2d(out_channels, out_channels, 3, padding=1)
        self.bn3 = nn.BatchNorm2d(out_channels)
        self.relu = nn.ReLU(inplace=True)
        self.pool = nn.MaxPool2d(2)

    def forward(self, x):
        y1 = self.relu(self.bn1(self.conv1(x)))
        y2 = self.relu(self.bn2(self.conv2(y1)))
        y3 = self.bn3(self.conv3(y2))
        return self.pool(self.relu(y1 + y3))


class BasicBlock(nn.Module):
    def __init__(self, in_channels: int, out_channels: int, stride: int = 1):
        super().__init__()
        self.conv1 = nn.Conv2d(in_channels, out_channels, 3, stride=stride, padding=1, bias=False)
        self.bn1 = nn.BatchNorm2d(out_channels)
        self.conv2 = nn.Conv2d(out_channels, out_channels, 3, padding=1, bias=False)
        self.bn2 = nn.BatchNorm2d(out_channels)
        self.relu = nn.ReLU(inplace=True)
        if stride != 1 or in_channels != out_channels:
            self.short = nn.Sequential(
                nn.Conv2d(in_channels, out_channels, 1, stride=stride, bias=False),
                nn.BatchNorm2d(out_channels),
            )
        else:
            self.short = nn.Identity()

    def forward(self, x):
        y = self.relu(self.bn1(self.conv1(x)))
        y = self.bn2(self.conv2(y))
        return self.relu(y + self.short(x))


class Backbone(nn.Module):
    """Shared-weight residual feature extractor for the difference branch.

    Stem (stride 4) plus two 2-block stages ending at stride 8, where the
    difference is taken. out_channels is the second stage width.
    """

    def __init__(self, stem_channels: int = 64, stage_channels: Tuple[int, int] = (64, 128)):
        super().__init__()
        c1, c2 = stage_channels
        self.stem = nn.Sequential(
            nn.Conv2d(3, stem_channels, 7, stride=2, padding=3, bias=False),
            nn.BatchNorm2d(stem_channels),
            nn.ReLU(inplace=True),
            nn.MaxPool2d(3, stride=2, padding=1),
        )
        self.stage1 = nn.Sequential(
            BasicBlock(stem_channels, c1), BasicBlock(c1, c1)
        )
        self.stage2 = nn.Sequential(
            BasicBlock(c1, c2, stride=2), BasicBlock(c2, c2)
        )
        self.out_channels = c2

    def forward(self, x):
        return self.stage2(self.stage1(self.stem(x)))


def residual_difference(i1: torch.Tensor, i2: torch.Tensor, backbone: Backbone) -> torch.Tensor:
    """Exactly antisymmetric stride-8 difference feature: same network over
    both images, subtracted. Swapping the images negates the output bitwise."""
    return backbone(i1) - backbone(i2)


class MotionInjection(nn.Module):
    """Resize motion features to the target map's size, concatenate on
    channels, project back to the target channel count with a pointwise conv.

    The projection starts as the identity on the original channels with zeros
    on the motion channels, so injection is a no-op at initialization.
    """

    def __init__(self, block_channels: int, motion_channels: int):
        super().__init__()
        self.proj = nn.Conv2d(block_channels + motion_channels, block_channels, 1)
        with torch.no_grad():
            self.proj.weight.zero_()
            for i in range(block_channels):
                self.proj.weight[i, i, 0, 0] = 1.0
            self.proj.bias.zero_()

    def forward(self, x, motion):
        if motion.shape[-2:] != x.shape[-2:]:
            motion = F.interpolate(motion, size=x.shape[-2:], mode="bilinear", align_corners=False)
        return self.proj(torch.cat([x, motion], dim=1))


class GlobalLocalEncoder(nn.Module):
    """Three S-Blocks over the 6-channel concatenated pair, producing the
    stride 2/4/8 pyramid. Motion features, when given, are injected before
    every block: the first aggregated map before blocks 1-2, the second before
    block 3."""

    def __init__(self, channels: Tuple[int, int, int] = (32, 64, 128),
                 motion_channels: Optional[Tuple[int, int]] = None):
        super().__init__()
        c1, c2, c3 = channels
        self.block1 = SBlockI(6, c1)
        self.block2 = SBlockI(c1, c2)
        self.block3 = SBlockII(c2, c3)
        if motion_channels is not None:
            m1, m2 = motion_channels
            self.inject1 = MotionInjection(6, m1)
            self.inject2 = MotionInjection(c1, m1)
            self.inject3 = MotionInjection(c2, m2)
        else:
            self.inject1 = self.inject2 = self.inject3 = None

    def forward(self, i1, i2, motion1=None, motion2=None):
        x = torch.cat([i1, i2], dim=1)
        if self.inject1 is not None and motion1 is not None:
            x = self.inject1(x, motion1)
        e1 = self.block1(x)
        y = e1
        if self.inject2 is not None and motion1 is not None:
            y = self.inject2(y, motion1)
        e2 = self.block2(y)
        z = e2
        if self.inject3 is not None and motion2 is not None:
            z = self.inject3(z, motion2)
        e3 = self.block3(z)
        return e1, e2, e3


class DecodeBlock(nn.Module):
    """Optionally upsample to the skip's scale, concatenate, then two
    conv-norm-relu layers with a residual around the second conv."""

    def __init__(self, in_channels: int, skip_channels: int, out_channels: int,
                 upsample: bool = True):
        super().__init__()
        self.upsample = upsample
        self.conv1 = nn.Conv2d(in_channels + skip_channels, out_channels, 3, padding=1)
        self.bn1 = nn.BatchNorm2d(out_channels)
        self.conv2 = nn.Conv2d(out_channels, out_channels, 3, padding=1)
        self.bn2 = nn.BatchNorm2d(out_channels)
        self.relu = nn.ReLU(inplace=True)

    def forward(self, x, skip=None):
        if skip is not None:
            if self.upsample and x.shape[-2:] != skip.shape[-2:]:
                x = F.interpolate(x, size=skip.shape[-2:], mode="bilinear", align_corners=False)
            x = torch.cat([x, skip], dim=1)
        y1 = self.relu(self.bn1(self.conv1(x)))
        y2 = self.bn2(self.conv2(y1))
        return self.relu(y1 + y2)


class GlobalDecoder(nn.Module):
    """Four decode blocks, coarse to fine. The first consumes the deepest
    pyramid level concatenated with the difference feature (when present); the
    last consumes the raw image pair as its skip. Returns full-resolution
    logits."""

    def __init__(self, channels: Tuple[int, int, int] = (32, 64, 128),
                 diff_channels: int = 0):
        super().__init__()
        c1, c2, c3 = channels
        d1, d2, d3, d4 = c3, c2, c1, max(c1 // 2, 4)
        self.dec1 = DecodeBlock(c3, diff_channels, d1, upsample=False)
        self.dec2 = DecodeBlock(d1, c2, d2)
        self.dec3 = DecodeBlock(d2, c1, d3)
        self.dec4 = DecodeBlock(d3, 6, d4)
        self.head = nn.Conv2d(d4, 1, 3, padding=1)
        self.diff_channels = diff_channels

    def forward(self, pyramid, diff, i1, i2):
        e1, e2, e3 = pyramid
        if self.diff_channels:
            if diff is None:
                raise ShapeMismatchError("decoder was built with a difference input")
            if diff.shape[-2:] != e3.shape[-2:]:
                raise ShapeMismatchError(
                    f"difference feature {tuple(diff.shape[-2:])} does not match "
                    f"deepest level {tuple(e3.shape[-2:])}"
                )
            x = self.dec1(e3, diff)
        else:
            x = self.dec1(e3)
        x = self.dec2(x, e2)
        x = self.dec3(x, e1)
        raw = torch.cat([i1, i2], dim=1)
        x = self.dec4(x, raw)
        return self.head(x)


class MaskBranch(nn.Module):
    """U-shaped refinement over the mask-gated pair. Same S-Block encoder
    design with independent weights, three decode blocks back to full
    resolution (the last skips in the gated pair itself). Returns logits."""

    def __init__(self, channels: Tuple[int, int, int] = (32, 64, 128)):
        super().__init__()
        c1, c2, c3 = channels
        self.enc1 = SBlockI(6, c1)
        self.enc2 = SBlockI(c1, c2)
        self.enc3 = SBlockII(c2, c3)
        self.dec1 = DecodeBlock(c3, c2, c2)
        self.dec2 = DecodeBlock(c2, c1, c1)
        self.dec3 = DecodeBlock(c1, 6, max(c1 // 2, 4))
        self.head = nn.Conv2d(max(c1 // 2, 4), 1, 3, padding=1)

    def forward(self, i1, i2, mask):
        if mask.shape[-2:] != i1.shape[-2:]:
            raise ShapeMismatchError(
                f"mask {tuple(mask.shape[-2:])} does not match images {tuple(i1.shape[-2:])}"
            )
        gated = torch.cat([i1 * mask, i2 * mask], dim=1)
        e1 = self.enc1(gated)
        e2 = self.enc2(e1)
        e3 = self.enc3(e2)
        x = self.dec1(e3, e2)
        x = self.dec2(x, e1)
        x = self.dec3(x, gated)
        return self.head(x)


def fuse_probability(p_global_local: torch.Tensor, p_mask: torch.Tensor,
                     cfg: FusionConfig) -> torch.Tensor:
    """Convex blend of the two probability maps by the mask-branch weight."""
    if p_global_local.shape != p_mask.shape:
        raise ShapeMismatchError(
            f"probability maps differ in shape: {tuple(p_global_local.shape)} "
            f"vs {tuple(p_mask.shape)}"
        )
    lam = cfg.lambda_mask
    return (1.0 - lam) * p_global_local + lam * p_mask


def binarize(p: torch.Tensor, threshold: float = 0.5) -> torch.Tensor:
    """Probability map to {0, 1}; ties at the threshold count as change."""
    if not 0.0 < threshold < 1.0:
        raise BadThresholdError(f"threshold must lie in (0, 1), got {threshold}")
    return (p >= threshold).to(p.dtype)
