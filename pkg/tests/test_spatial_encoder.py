import pytest
import torch

from ctma.errors import BadThresholdError, ConfigError, ShapeMismatchError
from ctma.spatial_encoder import (
    Backbone,
    FusionConfig,
    GlobalDecoder,
    GlobalLocalEncoder,
    MaskBranch,
    MotionInjection,
    SBlockI,
    SBlockII,
    SEConfig,
    binarize,
    fuse_probability,
    residual_difference,
)

CH = (8, 16, 32)


def _pair(seed=0, hw=64, batch=1):
    g = torch.Generator().manual_seed(seed)
    return (torch.rand(batch, 3, hw, hw, generator=g),
            torch.rand(batch, 3, hw, hw, generator=g))


def test_sblocks_halve_resolution():
    torch.manual_seed(0)
    b1 = SBlockI(6, 8).eval()
    b2 = SBlockII(8, 16).eval()
    with torch.no_grad():
        y = b1(torch.rand(2, 6, 32, 32))
        z = b2(y)
    assert y.shape == (2, 8, 16, 16)
    assert z.shape == (2, 16, 8, 8)


def test_encoder_pyramid_strides():
    torch.manual_seed(1)
    enc = GlobalLocalEncoder(CH).eval()
    i1, i2 = _pair(1)
    with torch.no_grad():
        e1, e2, e3 = enc(i1, i2)
    assert e1.shape == (1, 8, 32, 32)
    assert e2.shape == (1, 16, 16, 16)
    assert e3.shape == (1, 32, 8, 8)


def test_backbone_reaches_stride_eight():
    torch.manual_seed(2)
    bb = Backbone(stem_channels=8, stage_channels=(8, 16)).eval()
    with torch.no_grad():
        out = bb(torch.rand(1, 3, 64, 64))
    assert out.shape == (1, 16, 8, 8)
    assert bb.out_channels == 16


def test_difference_is_zero_for_identical_inputs():
    torch.manual_seed(3)
    bb = Backbone(8, (8, 16)).eval()
    i1, _ = _pair(3)
    with torch.no_grad():
        d = residual_difference(i1, i1.clone(), bb)
    assert torch.equal(d, torch.zeros_like(d))


def test_difference_negates_under_swap():
    torch.manual_seed(4)
    bb = Backbone(8, (8, 16)).eval()
    i1, i2 = _pair(4)
    with torch.no_grad():
        fwd = residual_difference(i1, i2, bb)
        rev = residual_difference(i2, i1, bb)
    assert torch.equal(fwd, -rev)


def test_motion_injection_is_identity_at_init():
    inj = MotionInjection(block_channels=6, motion_channels=5)
    g = torch.Generator().manual_seed(5)
    x = torch.rand(2, 6, 16, 16, generator=g)
    same_size = torch.rand(2, 5, 16, 16, generator=g)
    needs_resize = torch.rand(2, 5, 7, 9, generator=g)
    with torch.no_grad():
        assert torch.equal(inj(x, same_size), x)
        assert torch.equal(inj(x, needs_resize), x)


def test_encoder_with_identity_injection_matches_plain_pass():
    torch.manual_seed(6)
    enc = GlobalLocalEncoder(CH, motion_channels=(4, 6)).eval()
    i1, i2 = _pair(6, hw=32)
    m1 = torch.rand(1, 4, 8, 8)
    m2 = torch.rand(1, 6, 4, 4)
    with torch.no_grad():
        with_motion = enc(i1, i2, m1, m2)
        without = enc(i1, i2)
    for a, b in zip(with_motion, without):
        assert torch.equal(a, b)


def test_decoder_returns_full_resolution_logits():
    torch.manual_seed(7)
    enc = GlobalLocalEncoder(CH).eval()
    dec = GlobalDecoder(CH, diff_channels=16).eval()
    bb = Backbone(8, (8, 16)).eval()
    i1, i2 = _pair(7)
    with torch.no_grad():
        pyramid = enc(i1, i2)
        diff = residual_difference(i1, i2, bb)
        logits = dec(pyramid, diff, i1, i2)
    assert logits.shape == (1, 1, 64, 64)
    assert torch.isfinite(logits).all()


def test_decoder_without_difference_branch():
    torch.manual_seed(8)
    enc = GlobalLocalEncoder(CH).eval()
    dec = GlobalDecoder(CH, diff_channels=0).eval()
    i1, i2 = _pair(8, hw=32)
    with torch.no_grad():
        logits = dec(enc(i1, i2), None, i1, i2)
    assert logits.shape == (1, 1, 32, 32)


def test_decoder_rejects_missing_or_misshapen_difference():
    torch.manual_seed(9)
    enc = GlobalLocalEncoder(CH).eval()
    dec = GlobalDecoder(CH, diff_channels=16).eval()
    i1, i2 = _pair(9, hw=32)
    with torch.no_grad():
        pyramid = enc(i1, i2)
    with pytest.raises(ShapeMismatchError):
        dec(pyramid, None, i1, i2)
    with pytest.raises(ShapeMismatchError):
        dec(pyramid, torch.rand(1, 16, 2, 2), i1, i2)


def test_mask_branch_output_shape():
    torch.manual_seed(10)
    mb = MaskBranch(CH).eval()
    i1, i2 = _pair(10)
    mask = (torch.rand(1, 1, 64, 64) > 0.5).float()
    with torch.no_grad():
        logits = mb(i1, i2, mask)
    assert logits.shape == (1, 1, 64, 64)


def test_mask_branch_zero_mask_hides_the_images():
    # with an all-zero mask the gated input is zero regardless of the pair,
    # so two different pairs must produce bitwise identical outputs
    torch.manual_seed(11)
    mb = MaskBranch(CH).eval()
    a1, a2 = _pair(11)
    b1, b2 = _pair(12)
    zero = torch.zeros(1, 1, 64, 64)
    with torch.no_grad():
        out_a = mb(a1, a2, zero)
        out_b = mb(b1, b2, zero)
    assert torch.equal(out_a, out_b)


def test_mask_branch_rejects_mismatched_mask():
    mb = MaskBranch(CH)
    i1, i2 = _pair(13, hw=32)
    with pytest.raises(ShapeMismatchError):
        mb(i1, i2, torch.ones(1, 1, 16, 16))


def test_fusion_endpoints_and_bounds():
    g = torch.Generator().manual_seed(14)
    p_gl = torch.rand(1, 1, 8, 8, generator=g)
    p_mask = torch.rand(1, 1, 8, 8, generator=g)
    assert torch.equal(fuse_probability(p_gl, p_mask, FusionConfig(lambda_mask=0.0)), p_gl)
    assert torch.equal(fuse_probability(p_gl, p_mask, FusionConfig(lambda_mask=1.0)), p_mask)
    mixed = fuse_probability(p_gl, p_mask, FusionConfig(lambda_mask=0.3))
    lo = torch.minimum(p_gl, p_mask)
    hi = torch.maximum(p_gl, p_mask)
    assert bool((mixed >= lo - 1e-7).all()) and bool((mixed <= hi + 1e-7).all())


def test_fusion_default_weight():
    p_gl = torch.full((1, 1, 2, 2), 1.0)
    p_mask = torch.zeros(1, 1, 2, 2)
    fused = fuse_probability(p_gl, p_mask, FusionConfig())
    assert torch.allclose(fused, torch.full_like(fused, 0.7))


def test_fusion_rejects_shape_mismatch():
    with pytest.raises(ShapeMismatchError):
        fuse_probability(torch.rand(1, 1, 4, 4), torch.rand(1, 1, 8, 8), FusionConfig())


def test_binarize_ties_and_idempotence():
    p = torch.tensor([[0.1, 0.5], [0.7, 0.49999]])
    out = binarize(p, 0.5)
    assert torch.equal(out, torch.tensor([[0.0, 1.0], [1.0, 0.0]]))
    assert torch.equal(binarize(out, 0.5), out)
    for t in (0.0, 1.0):
        with pytest.raises(BadThresholdError):
            binarize(p, t)


def test_config_validation():
    with pytest.raises(ConfigError):
        FusionConfig(lambda_mask=1.5).validate()
    with pytest.raises(ConfigError):
        FusionConfig(gl_weights=(0.8, 0.8)).validate()
    with pytest.raises(ConfigError):
        FusionConfig(binarize_threshold=0.0).validate()
    with pytest.raises(ConfigError):
        SEConfig(channels=(0, 64, 128)).validate()
    with pytest.raises(ConfigError):
        SEConfig(backbone_stages=(64, 0)).validate()
    cfg = SEConfig().validate()
    assert cfg.channels == (32, 64, 128)
    assert cfg.fusion.lambda_mask == pytest.approx(0.3)
