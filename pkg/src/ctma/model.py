"""Full change-detection network: temporal branch feeding coarse guidance and
motion features into the spatial branch, fused into the final probability map.

Component toggles mirror the ablation table rows. The temporal and spatial
branches are always present; the residual difference backbone, the mask
branch, and the motion feature injection can each be switched off, in which
case their parameters are not built at all.
"""

from dataclasses import dataclass
from typing import Optional

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ConfigError
from .pseudo_video import interpolate_batch
from .spatial_encoder import (
    Backbone,
    GlobalDecoder,
    GlobalLocalEncoder,
    MaskBranch,
    SEConfig,
    fuse_probability,
    residual_difference,
)
from .temporal_encoder import TEConfig, TemporalEncoder, threshold_mask


@dataclass
class AblationFlags:
    use_te: bool = True
    use_se: bool = True
    use_resnet_diff: bool = True
    use_mask_augment: bool = True
    use_motion_augment: bool = True

    def validate(self):
        if not (self.use_te and self.use_se):
            raise ConfigError("the temporal and spatial branches cannot be disabled")
        return self

    def label(self) -> str:
        parts = [
            "MA+" if self.use_mask_augment else "MA-",
            "RN+" if self.use_resnet_diff else "RN-",
            "MO+" if self.use_motion_augment else "MO-",
        ]
        return " ".join(parts)


STANDARD_ABLATION_ROWS = [
    AblationFlags(use_mask_augment=False, use_resnet_diff=False, use_motion_augment=False),
    AblationFlags(use_mask_augment=True, use_resnet_diff=False),
    AblationFlags(use_mask_augment=False, use_resnet_diff=True),
    AblationFlags(use_mask_augment=True, use_resnet_diff=True),
]


@dataclass
class ModelOutput:
    coarse: torch.Tensor            # (B,1,H/4,W/4) probabilities
    coarse_full: torch.Tensor       # (B,1,H,W) bilinearly upsampled probabilities
    mask: torch.Tensor              # (B,1,H,W) binary guidance
    p_gl: torch.Tensor              # (B,1,H,W) encoder-decoder probability
    p_mask: Optional[torch.Tensor]  # (B,1,H,W) mask-branch probability, if built
    p2: torch.Tensor                # (B,1,H,W) fused probability


class CTMANet(nn.Module):
    def __init__(self, te_cfg: TEConfig = None, se_cfg: SEConfig = None,
                 flags: AblationFlags = None):
        super().__init__()
        self.te_cfg = (te_cfg or TEConfig()).validate()
        self.se_cfg = (se_cfg or SEConfig()).validate()
        self.flags = (flags or AblationFlags()).validate()

        self.temporal = TemporalEncoder(
            self.te_cfg, build_first_tam=self.flags.use_motion_augment
        )
        f2a = self.te_cfg.tblock2_filters[1]
        f2b = self.te_cfg.tblock2_filters[3]
        motion_channels = (f2a, f2b) if self.flags.use_motion_augment else None
        self.encoder = GlobalLocalEncoder(self.se_cfg.channels, motion_channels)

        if self.flags.use_resnet_diff:
            self.backbone = Backbone(self.se_cfg.backbone_stem, self.se_cfg.backbone_stages)
            diff_channels = self.backbone.out_channels
        else:
            self.backbone = None
            diff_channels = 0
        self.decoder = GlobalDecoder(self.se_cfg.channels, diff_channels)

        self.mask_branch = MaskBranch(self.se_cfg.channels) if self.flags.use_mask_augment else None

    def forward(self, i1: torch.Tensor, i2: torch.Tensor) -> ModelOutput:
        h, w = i1.shape[-2], i1.shape[-1]
        frames = interpolate_batch(i1, i2, self.te_cfg.n_frames)
        coarse_logits, feat1, feat2 = self.temporal.coarse_logits(frames)
        coarse = torch.sigmoid(coarse_logits)
        mask = threshold_mask(coarse, self.te_cfg.mask_threshold, (h, w))

        if self.flags.use_motion_augment:
            pyramid = self.encoder(i1, i2, feat1, feat2)
        else:
            pyramid = self.encoder(i1, i2)

        diff = None
        if self.backbone is not None:
            diff = residual_difference(i1, i2, self.backbone)

        gl_logits = self.decoder(pyramid, diff, i1, i2)
        p_gl = torch.sigmoid(gl_logits)

        if self.mask_branch is not None:
            p_mask = torch.sigmoid(self.mask_branch(i1, i2, mask))
            p2 = fuse_probability(p_gl, p_mask, self.se_cfg.fusion)
        else:
            p_mask = None
            p2 = p_gl

        coarse_full = F.interpolate(coarse, size=(h, w), mode="bilinear", align_corners=False)
        return ModelOutput(coarse=coarse, coarse_full=coarse_full, mask=mask,
                           p_gl=p_gl, p_mask=p_mask, p2=p2)

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters())
