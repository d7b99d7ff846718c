"""Search-based baseline: exhaustively score every contiguous temporal crop.

For a crop [a, b] the frames outside the range are frozen to the crop's
boundary values (motion removed from the complement, same perturbation
family the learned mask uses), the model scores the result, and the best
crop is the argmax with ties broken by shorter range, then earlier start.
The table has T*(T+1)/2 entries, so cost grows quadratically with length,
which is exactly what the learned mask's fixed iteration count avoids.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class CropResult:
    best: tuple[int, int]  # inclusive (start, end)
    scores: list  # [(start, end, score)] for every contiguous crop
    class_index: int

    @property
    def best_score(self) -> float:
        return max(s for _, _, s in self.scores)


def freeze_complement(clip: np.ndarray, start: int, end: int) -> np.ndarray:
    """Hold frames before ``start`` at clip[start] and frames after ``end``
    at clip[end]; the crop itself is untouched."""
    t = clip.shape[0]
    if not 0 <= start <= end < t:
        raise ValueError(f"crop [{start}, {end}] out of range for {t} frames")
    out = clip.copy()
    out[:start] = clip[start]
    out[end + 1 :] = clip[end]
    return out


def exhaustive_crop_search(net, clip: np.ndarray, class_index: int) -> CropResult:
    """Score all T*(T+1)/2 crops; ``net`` needs only a ``scores`` method."""
    t = clip.shape[0]
    if t < 1:
        raise ValueError("clip must have at least one frame")
    table = []
    best = None
    best_key = None
    for start in range(t):
        for end in range(start, t):
            if start == 0 and end == t - 1:
                perturbed = clip  # full-range crop is exactly the original
            else:
                perturbed = freeze_complement(clip, start, end)
            score = float(net.scores(perturbed)[class_index])
            table.append((start, end, score))
            key = (score, -(end - start), -start)  # prefer shorter, then earlier
            if best_key is None or key > best_key:
                best_key = key
                best = (start, end)
    return CropResult(best=best, scores=table, class_index=class_index)


def mask_crop_agreement(mask: np.ndarray, crop: tuple[int, int]) -> float:
    """Intersection over union between the mask's active frame set and the
    crop's frame range."""
    active = {int(i) for i in np.flatnonzero(np.asarray(mask, dtype=bool))}
    crop_set = set(range(crop[0], crop[1] + 1))
    union = active | crop_set
    if not union:
        return 0.0
    return len(active & crop_set) / len(union)
