"""Saliency volume arithmetic and upsampling."""

import numpy as np
import pytest

from vidsal.gradcam import SaliencyVolume, gradcam, upsample
from vidsal.models import Conv3DNet, Conv3DNetConfig, ConvLSTMNet, ConvLSTMNetConfig
from vidsal.tensor import Tensor


class _StubVolume:
    def __init__(self, maps):
        self.maps = maps


def make_volume(maps):
    maps = np.asarray(maps, dtype=np.float32)
    return SaliencyVolume(maps=maps, frame_coverage=tuple((i,) for i in range(maps.shape[0])), class_index=0)


def test_hand_weighted_sum():
    # single filter, activations 1 on a 2x2 map, gradient 0.5 everywhere:
    # weight = 0.5, map = 0.5 (pure arithmetic of the weighting formula)
    acts = np.ones((1, 2, 2, 1), dtype=np.float64)
    grads = np.full((1, 2, 2, 1), 0.5)
    weights = grads.mean(axis=(1, 2))
    maps = np.maximum(np.einsum("tk,thwk->thw", weights, acts), 0.0)
    assert np.allclose(maps, 0.5)


def test_gradcam_zero_gradients_give_zero_maps():
    net = Conv3DNet.initialize(Conv3DNetConfig(num_classes=4, filters=(8, 16, 32)), seed=1)
    net.params["head.weight"] = Tensor(np.zeros((32, 4)), requires_grad=True)
    net.params["head.bias"] = Tensor(np.zeros(4), requires_grad=True)
    clip = np.random.default_rng(0).random((16, 32, 32, 1)).astype(np.float32)
    vol = gradcam(net, clip, 0)
    assert np.all(vol.maps == 0.0)


def test_gradcam_clamps_negative_combinations():
    maps = np.einsum("tk,thwk->thw", np.array([[-1.0]]), np.ones((1, 3, 3, 1)))
    assert maps.min() < 0
    clamped = np.maximum(maps, 0.0)
    assert np.all(clamped == 0.0)


@pytest.mark.parametrize("arch_cfg", [
    (Conv3DNet, Conv3DNetConfig()),
    (ConvLSTMNet, ConvLSTMNetConfig()),
])
def test_gradcam_shapes_nonnegativity_and_coverage(arch_cfg):
    cls, cfg = arch_cfg
    net = cls.initialize(cfg, seed=2)
    clip = np.random.default_rng(1).random((cfg.frames, cfg.height, cfg.width, cfg.channels)).astype(np.float32)
    vol = gradcam(net, clip, 3)
    assert np.all(vol.maps >= 0.0)
    assert vol.timesteps == net.activation_frames
    covered = sorted(f for group in vol.frame_coverage for f in group)
    assert covered == list(range(cfg.frames))
    with pytest.raises(ValueError):
        gradcam(net, clip, 99)


def test_gradcam_scales_linearly_with_upstream_gradient():
    # scaling every activation gradient by a > 0 scales the maps by a;
    # realized here through the weighting arithmetic directly
    rng = np.random.default_rng(3)
    acts = rng.random((2, 4, 4, 3))
    grads = rng.normal(size=(2, 4, 4, 3))
    for alpha in (2.0, 7.5):
        w1 = grads.mean(axis=(1, 2))
        w2 = (alpha * grads).mean(axis=(1, 2))
        m1 = np.maximum(np.einsum("tk,thwk->thw", w1, acts), 0.0)
        m2 = np.maximum(np.einsum("tk,thwk->thw", w2, acts), 0.0)
        assert np.allclose(m2, alpha * m1, atol=1e-12)


def test_upsample_identity_and_constant():
    vol = make_volume(np.full((2, 4, 4), 0.7))
    same = upsample(vol, 4, 4)
    assert np.array_equal(same.maps, vol.maps)
    up = upsample(vol, 9, 9)
    assert up.maps.shape == (2, 9, 9)
    assert np.allclose(up.maps, 0.7, atol=1e-6)


def test_upsample_monotone_columns():
    vol = make_volume([[[0.0, 1.0], [0.0, 1.0]]])
    up = upsample(vol, 4, 4)
    for row in up.maps[0]:
        assert np.all(np.diff(row) > 0)


def test_upsample_preserves_nonnegativity_and_peak():
    rng = np.random.default_rng(4)
    maps = rng.random((3, 4, 4)).astype(np.float32)
    vol = make_volume(maps)
    up = upsample(vol, 32, 32)
    assert np.all(up.maps >= 0.0)
    # corners align, so each map's max survives within interpolation error
    for i in range(3):
        assert up.maps[i].max() <= maps[i].max() + 1e-6
        assert up.maps[i].max() >= 0.8 * maps[i].max()
    with pytest.raises(ValueError):
        upsample(vol, 2, 2)


def test_normalized_scales_global_max_to_one():
    vol = make_volume(np.array([[[0.0, 2.0], [1.0, 0.5]]]))
    norm = vol.normalized()
    assert norm.max() == pytest.approx(1.0)
    assert np.all(norm >= 0.0)
    zero = make_volume(np.zeros((1, 2, 2)))
    assert np.all(zero.normalized() == 0.0)
