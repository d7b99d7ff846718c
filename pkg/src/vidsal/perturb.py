"""Temporal input perturbations: motion-removing freeze and segment reverse.

Freeze blends each frame toward its already-perturbed predecessor, so an
active mask entry removes the motion into that frame while keeping pixel
values inside the input range. It is differentiable in the mask and has an
on-tape form used by the mask optimizer. Reverse is an evaluation-time
operator: it thresholds the mask, finds contiguous active segments and
reverses the frame order inside each one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ops
from .tensor import Tape, Tensor


@dataclass(frozen=True)
class SubMaskRange:
    """Inclusive frame range of one contiguous active mask segment."""

    start: int
    end: int

    def __post_init__(self):
        if self.start > self.end or self.start < 0:
            raise ValueError(f"invalid range [{self.start}, {self.end}]")


def _check_mask(clip_frames: int, mask) -> np.ndarray:
    m = np.asarray(mask, dtype=np.float64)
    if m.ndim != 1 or m.shape[0] != clip_frames:
        raise ValueError(f"mask length {m.shape} does not match clip length {clip_frames}")
    return m


def apply_freeze(clip: np.ndarray, mask) -> np.ndarray:
    """out[0] = clip[0]; out[i] = (1 - m[i]) * clip[i] + m[i] * out[i-1].

    The first frame is never perturbed. Every output frame is a convex
    combination of input frames.
    """
    m = _check_mask(clip.shape[0], mask)
    out = np.array(clip, copy=True)
    for i in range(1, clip.shape[0]):
        w = clip.dtype.type(m[i])
        out[i] = (1 - w) * clip[i] + w * out[i - 1]
    return out


def freeze_on_tape(tape: Tape | None, clip: Tensor, mask: Tensor) -> Tensor:
    """Differentiable freeze, composed from primitive ops.

    ``mask`` is the activation vector in [0,1]; entry 0 is unused, so its
    gradient is exactly zero.
    """
    t_frames = clip.shape[0]
    if mask.data.ndim != 1 or mask.shape[0] != t_frames:
        raise ValueError(f"mask length {mask.shape} does not match clip length {t_frames}")
    frame_shape = clip.shape[1:]

    def frame(i):
        return ops.reshape(tape, ops.slice_axis(tape, clip, 0, i, i + 1), frame_shape)

    prev = frame(0)
    frames_out = [prev]
    for i in range(1, t_frames):
        m_i = ops.pick(tape, mask, i)
        keep = ops.add_scalar(tape, ops.neg(tape, m_i), 1.0)
        prev = ops.add(tape, ops.mul(tape, frame(i), keep), ops.mul(tape, prev, m_i))
        frames_out.append(prev)
    return ops.stack(tape, frames_out, axis=0)


def extract_submasks(mask, threshold: float = 0.1) -> list[SubMaskRange]:
    """Maximal runs of consecutive indices with mask > threshold, ascending."""
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    m = np.asarray(mask, dtype=np.float64)
    active = m > threshold
    runs: list[SubMaskRange] = []
    start = None
    for i, on in enumerate(active):
        if on and start is None:
            start = i
        elif not on and start is not None:
            runs.append(SubMaskRange(start, i - 1))
            start = None
    if start is not None:
        runs.append(SubMaskRange(start, len(m) - 1))
    return runs


def apply_reverse(clip: np.ndarray, mask, threshold: float = 0.1) -> np.ndarray:
    """Reverse the frame order inside each contiguous active mask segment.

    A permutation of the input frames, and an involution for a fixed
    thresholded mask.
    """
    _check_mask(clip.shape[0], mask)
    out = np.array(clip, copy=True)
    for run in extract_submasks(mask, threshold):
        out[run.start : run.end + 1] = out[run.start : run.end + 1][::-1]
    return out
