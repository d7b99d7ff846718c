"""Class-specific saliency volumes for video inputs.

Per timestep t and filter k, the weight is the spatial mean of the class
score's gradient at the target layer's activations; the saliency map is
the ReLU-clamped weighted sum of those activations:

    w[k, t] = mean_ij d(score_c) / d(A[k, i, j, t])
    L[t, i, j] = max(0, sum_k w[k, t] * A[k, i, j, t])

The target layer is the last convolution block of the 3-D net and the
final recurrent layer's full hidden sequence for the ConvLSTM; gradients
come from the same tape machinery the rest of the package uses.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ops
from .models import _VideoNet
from .tensor import Tape, Tensor, backward


@dataclass
class SaliencyVolume:
    maps: np.ndarray  # [T', H, W], non-negative float32
    frame_coverage: tuple[tuple[int, ...], ...]  # input frames per timestep
    class_index: int

    def __post_init__(self):
        if self.maps.ndim != 3:
            raise ValueError(f"saliency maps must be [T,H,W], got {self.maps.shape}")

    @property
    def timesteps(self) -> int:
        return self.maps.shape[0]

    def normalized(self) -> np.ndarray:
        """Maps scaled to [0,1] by the volume's global maximum."""
        peak = float(self.maps.max())
        if peak <= 0.0:
            return np.zeros_like(self.maps)
        return self.maps / peak


def gradcam(net: _VideoNet, clip: np.ndarray, class_index: int) -> SaliencyVolume:
    """Saliency volume of ``class_index`` for one clip, at the target
    layer's native resolution."""
    if not 0 <= class_index < net.num_classes:
        raise ValueError(f"class index {class_index} out of range for {net.num_classes} classes")
    tape = Tape()
    result = net.forward(tape, Tensor(clip, dtype=net.param_dtype))
    score = ops.pick(tape, result.scores, class_index)
    grads = backward(tape, score)
    acts = result.activations.data  # [T', H', W', K]
    g = grads.wrt(result.activations)
    if g is None:
        g = np.zeros_like(acts)
    weights = g.mean(axis=(1, 2), dtype=np.float64).astype(acts.dtype)  # [T', K]
    maps = np.einsum("tk,thwk->thw", weights, acts)
    np.maximum(maps, 0.0, out=maps)
    return SaliencyVolume(
        maps=maps.astype(np.float32), frame_coverage=net.frame_coverage(), class_index=class_index
    )


def upsample(volume: SaliencyVolume, height: int, width: int) -> SaliencyVolume:
    """Bilinear spatial upsampling of every map (corners aligned)."""
    t, h, w = volume.maps.shape
    if height < h or width < w:
        raise ValueError(f"target {height}x{width} smaller than source {h}x{w}")
    if (height, width) == (h, w):
        return SaliencyVolume(volume.maps.copy(), volume.frame_coverage, volume.class_index)
    maps = np.empty((t, height, width), dtype=np.float32)
    rows = np.linspace(0.0, h - 1.0, height) if h > 1 else np.zeros(height)
    cols = np.linspace(0.0, w - 1.0, width) if w > 1 else np.zeros(width)
    r0 = np.minimum(rows.astype(np.int64), h - 1)
    c0 = np.minimum(cols.astype(np.int64), w - 1)
    r1 = np.minimum(r0 + 1, h - 1)
    c1 = np.minimum(c0 + 1, w - 1)
    fr = (rows - r0)[:, None]
    fc = (cols - c0)[None, :]
    for i in range(t):
        src = volume.maps[i].astype(np.float64)
        top = src[r0][:, c0] * (1 - fc) + src[r0][:, c1] * fc
        bottom = src[r1][:, c0] * (1 - fc) + src[r1][:, c1] * fc
        maps[i] = (top * (1 - fr) + bottom * fr).astype(np.float32)
    return SaliencyVolume(maps=maps, frame_coverage=volume.frame_coverage, class_index=volume.class_index)
