import pytest
import torch

from ctma.errors import ConfigError
from ctma.model import AblationFlags, CTMANet, STANDARD_ABLATION_ROWS
from ctma.spatial_encoder import SEConfig
from ctma.temporal_encoder import TEConfig, threshold_mask

TE = TEConfig(tblock1_channels=4, tblock2_filters=[4, 4, 8, 8], n_frames=4)
SE = SEConfig(channels=(8, 16, 32), backbone_stem=8, backbone_stages=(8, 16))


def _net(flags=None, seed=0):
    torch.manual_seed(seed)
    return CTMANet(TE, SE, flags).eval()


def _pair(seed=0, hw=32, batch=1):
    g = torch.Generator().manual_seed(seed)
    return (torch.rand(batch, 3, hw, hw, generator=g),
            torch.rand(batch, 3, hw, hw, generator=g))


def test_flags_require_both_branches():
    with pytest.raises(ConfigError):
        AblationFlags(use_te=False).validate()
    with pytest.raises(ConfigError):
        AblationFlags(use_se=False).validate()
    assert AblationFlags().validate().use_mask_augment


def test_standard_rows_and_labels():
    labels = [f.label() for f in STANDARD_ABLATION_ROWS]
    assert labels == ["MA- RN- MO-", "MA+ RN- MO+", "MA- RN+ MO+", "MA+ RN+ MO+"]


def test_full_model_output_shapes_and_ranges():
    net = _net()
    i1, i2 = _pair(0, batch=2)
    with torch.no_grad():
        out = net(i1, i2)
    assert out.coarse.shape == (2, 1, 8, 8)
    assert out.coarse_full.shape == (2, 1, 32, 32)
    assert out.mask.shape == (2, 1, 32, 32)
    assert out.p_gl.shape == (2, 1, 32, 32)
    assert out.p_mask.shape == (2, 1, 32, 32)
    assert out.p2.shape == (2, 1, 32, 32)
    for t in (out.coarse, out.coarse_full, out.p_gl, out.p_mask, out.p2):
        assert float(t.min()) >= 0.0 and float(t.max()) <= 1.0
    assert set(out.mask.unique().tolist()) <= {0.0, 1.0}


def test_guidance_mask_matches_coarse_map():
    net = _net(seed=1)
    i1, i2 = _pair(1)
    with torch.no_grad():
        out = net(i1, i2)
    expected = threshold_mask(out.coarse, 0.5, (32, 32))
    assert torch.equal(out.mask, expected)


def test_fused_map_is_the_configured_blend():
    net = _net(seed=2)
    i1, i2 = _pair(2)
    with torch.no_grad():
        out = net(i1, i2)
    lam = SE.fusion.lambda_mask
    assert torch.allclose(out.p2, (1 - lam) * out.p_gl + lam * out.p_mask, atol=1e-6)


def test_stripped_model_reduces_to_plain_encoder_decoder():
    flags = AblationFlags(use_mask_augment=False, use_resnet_diff=False,
                          use_motion_augment=False)
    net = _net(flags, seed=3)
    names = [n for n, _ in net.named_parameters()]
    assert not any(n.startswith("backbone") for n in names)
    assert not any(n.startswith("mask_branch") for n in names)
    assert not any(n.startswith("temporal.attn1") for n in names)
    assert not any(".inject" in n for n in names)
    i1, i2 = _pair(3)
    with torch.no_grad():
        out = net(i1, i2)
    assert out.p_mask is None
    assert torch.equal(out.p2, out.p_gl)


def test_every_parameter_lies_on_a_gradient_path():
    for flags in STANDARD_ABLATION_ROWS:
        torch.manual_seed(4)
        net = CTMANet(TE, SE, flags).train()
        i1, i2 = _pair(4)
        out = net(i1, i2)
        loss = out.p2.mean() + out.coarse_full.mean()
        loss.backward()
        missing = [n for n, p in net.named_parameters() if p.grad is None]
        assert missing == [], f"{flags.label()}: no grad for {missing}"


def test_ablation_rows_have_distinct_parameter_counts():
    counts = []
    for flags in STANDARD_ABLATION_ROWS:
        counts.append(_net(flags).parameter_count())
    assert len(set(counts)) == len(counts)
    # the full model is the largest
    assert counts[-1] == max(counts)


def test_forward_is_deterministic_in_eval_mode():
    net = _net(seed=5)
    i1, i2 = _pair(5)
    with torch.no_grad():
        a = net(i1, i2)
        b = net(i1, i2)
    assert torch.equal(a.p2, b.p2)
    assert torch.equal(a.coarse, b.coarse)
