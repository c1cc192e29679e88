import pytest
import torch

from ctma.errors import ConfigError
from ctma.synthetic import SynthParams, generate_synthetic


def test_deterministic_in_seed():
    params = SynthParams(canvas=32, num_shapes=3, shape_min=6, shape_max=12)
    a = generate_synthetic(params, 11)
    b = generate_synthetic(params, 11)
    assert torch.equal(a.i1, b.i1) and torch.equal(a.i2, b.i2)
    assert torch.equal(a.label, b.label)
    c = generate_synthetic(params, 12)
    assert not torch.equal(a.i1, c.i1)


def test_zero_shapes_zero_noise_means_no_change():
    params = SynthParams(canvas=24, num_shapes=0, noise=0.0, shape_min=4, shape_max=8)
    pair = generate_synthetic(params, 5)
    assert torch.equal(pair.i1, pair.i2)
    assert float(pair.label.sum()) == 0.0


def test_label_is_exactly_the_changed_pixel_set():
    # with zero noise, label 1 <-> the images differ at that pixel
    params = SynthParams(canvas=48, num_shapes=3, noise=0.0, shape_min=6, shape_max=16)
    for seed in range(8):
        pair = generate_synthetic(params, seed)
        changed = (pair.i1 != pair.i2).any(dim=0, keepdim=True).float()
        assert torch.equal(changed, pair.label)


def test_values_in_unit_range_and_label_binary():
    params = SynthParams(canvas=32, num_shapes=2, noise=0.05, shape_min=6, shape_max=10)
    for seed in range(5):
        pair = generate_synthetic(params, seed)
        for img in (pair.i1, pair.i2):
            assert float(img.min()) >= 0.0 and float(img.max()) <= 1.0
        assert set(pair.label.unique().tolist()) <= {0.0, 1.0}


def test_shapes_present_when_requested():
    params = SynthParams(canvas=64, num_shapes=2, noise=0.0, shape_min=8, shape_max=16)
    pair = generate_synthetic(params, 3)
    assert float(pair.label.sum()) > 0


def test_param_validation():
    with pytest.raises(ConfigError):
        SynthParams(canvas=4).validate()
    with pytest.raises(ConfigError):
        SynthParams(shape_min=0).validate()
    with pytest.raises(ConfigError):
        SynthParams(shape_min=20, shape_max=10).validate()
    with pytest.raises(ConfigError):
        SynthParams(canvas=16, shape_max=32).validate()
    with pytest.raises(ConfigError):
        SynthParams(noise=-0.1).validate()
