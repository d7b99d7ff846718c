"""Lossless-ish image export: binary PGM for raw grayscale maps and PNG
overlays blending a frame with its saliency map."""

from __future__ import annotations

import numpy as np
from PIL import Image


def to_uint8(img01: np.ndarray) -> np.ndarray:
    return np.rint(np.clip(img01, 0.0, 1.0) * 255.0).astype(np.uint8)


def write_pgm(path, img01: np.ndarray) -> None:
    """Binary (P5) 8-bit PGM of a [H,W] image in [0,1]."""
    data = to_uint8(np.asarray(img01))
    if data.ndim != 2:
        raise ValueError(f"PGM wants a 2-D image, got shape {data.shape}")
    h, w = data.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


def overlay_rgb(frame01: np.ndarray, saliency01: np.ndarray, alpha: float = 0.55) -> np.ndarray:
    """Grayscale frame with a red-yellow heat wash where saliency is high."""
    frame = np.clip(np.asarray(frame01, dtype=np.float64), 0.0, 1.0)
    sal = np.clip(np.asarray(saliency01, dtype=np.float64), 0.0, 1.0)
    if frame.shape != sal.shape:
        raise ValueError(f"frame {frame.shape} vs saliency {sal.shape}")
    heat = np.stack([sal, 0.45 * sal, np.zeros_like(sal)], axis=-1)
    gray = np.repeat(frame[..., None], 3, axis=-1)
    blend = (1.0 - alpha * sal[..., None]) * gray + alpha * sal[..., None] * heat
    return to_uint8(blend)


def write_overlay_png(path, frame01: np.ndarray, saliency01: np.ndarray) -> None:
    Image.fromarray(overlay_rgb(frame01, saliency01), mode="RGB").save(path, format="PNG")
