"""Quantitative comparison suite: blob statistics over saliency maps,
temporal-mask statistics, score-drop statistics with the boundary
exclusion rule, normalized histograms and Welch's unequal-variance t-test.

Blob detection parameters are fixed (threshold 0.4 of the volume maximum,
8-connectivity, minimum area 4 pixels) and echoed into every summary so
results are self-describing. The t-test p-value is computed from the
regularized incomplete beta function; its implementation is validated
against pre-computed reference statistics.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

BLOB_THRESHOLD = 0.4
BLOB_MIN_AREA = 4
BLOB_CONNECTIVITY = 8
DROP_EPSILON = 0.001


@dataclass(frozen=True)
class Blob:
    """One 8-connected component of a thresholded saliency map."""

    pixels: tuple  # ((row, col), ...), row-major order
    area: int
    centroid: tuple  # (x, y) = (mean col, mean row)


def detect_blobs(map01: np.ndarray, threshold: float = BLOB_THRESHOLD, min_area: int = BLOB_MIN_AREA) -> list[Blob]:
    """8-connected components of {pixel > threshold} with area >= min_area,
    sorted by area descending (ties by first pixel, so the order is total).
    """
    binary = np.asarray(map01) > threshold
    h, w = binary.shape
    seen = np.zeros((h, w), dtype=bool)
    blobs: list[Blob] = []
    for r in range(h):
        for c in range(w):
            if not binary[r, c] or seen[r, c]:
                continue
            queue = deque([(r, c)])
            seen[r, c] = True
            pixels = []
            while queue:
                rr, cc = queue.popleft()
                pixels.append((rr, cc))
                for nr in (rr - 1, rr, rr + 1):
                    if nr < 0 or nr >= h:
                        continue
                    for nc in (cc - 1, cc, cc + 1):
                        if 0 <= nc < w and binary[nr, nc] and not seen[nr, nc]:
                            seen[nr, nc] = True
                            queue.append((nr, nc))
            if len(pixels) < min_area:
                continue
            pixels.sort()
            rows = np.array([p[0] for p in pixels], dtype=np.float64)
            cols = np.array([p[1] for p in pixels], dtype=np.float64)
            blobs.append(Blob(tuple(pixels), len(pixels), (float(cols.mean()), float(rows.mean()))))
    blobs.sort(key=lambda b: (-b.area, b.pixels[0]))
    return blobs


def center_distance(blob: Blob, height: int, width: int) -> float:
    """Euclidean distance from the blob centroid to the frame's geometric
    center ((W-1)/2, (H-1)/2)."""
    cx, cy = (width - 1) / 2.0, (height - 1) / 2.0
    return float(math.hypot(blob.centroid[0] - cx, blob.centroid[1] - cy))


@dataclass
class BlobSamples:
    """Raw per-frame and per-blob observations across a set of volumes."""

    counts_per_frame: list = field(default_factory=list)
    sizes: list = field(default_factory=list)
    center_distances: list = field(default_factory=list)

    @property
    def count_mean(self) -> float | None:
        return float(np.mean(self.counts_per_frame)) if self.counts_per_frame else None

    @property
    def size_mean(self) -> float | None:
        return float(np.mean(self.sizes)) if self.sizes else None

    @property
    def center_distance_mean(self) -> float | None:
        return float(np.mean(self.center_distances)) if self.center_distances else None


def blob_statistics(volumes, threshold: float = BLOB_THRESHOLD, min_area: int = BLOB_MIN_AREA) -> BlobSamples:
    """Blob observations over normalized saliency volumes.

    Counts are collected per frame (zero-blob frames included); sizes and
    center distances per detected blob. Empty aggregates stay absent
    rather than zero.
    """
    samples = BlobSamples()
    for volume in volumes:
        maps = volume.normalized()
        height, width = maps.shape[1:]
        for frame in maps:
            blobs = detect_blobs(frame, threshold, min_area)
            samples.counts_per_frame.append(len(blobs))
            for blob in blobs:
                samples.sizes.append(float(blob.area))
                samples.center_distances.append(center_distance(blob, height, width))
    return samples


def mask_length(mask_or_result, threshold: float = 0.1) -> int:
    """Number of active (thresholded-true) frames."""
    mask = getattr(mask_or_result, "mask", mask_or_result)
    return int(np.count_nonzero(np.asarray(mask) > threshold))


@dataclass
class DropStats:
    original_score: float
    freeze_score: float
    reverse_score: float
    excluded: bool
    drop_ratio: float | None  # (OS - FS) / (OS - RS) when included
    drop_difference: float | None  # RS - FS when included


def drop_stats(os_: float, fs: float, rs: float, epsilon: float = DROP_EPSILON) -> DropStats:
    """Single-record drop statistics with the boundary exclusion rule:
    excluded when OS - RS <= epsilon (ratio would explode) or, for balance,
    when OS - FS <= epsilon."""
    excluded = (os_ - rs) <= epsilon or (os_ - fs) <= epsilon
    if excluded:
        return DropStats(os_, fs, rs, True, None, None)
    return DropStats(os_, fs, rs, False, (os_ - fs) / (os_ - rs), rs - fs)


def drop_statistics(records, epsilon: float = DROP_EPSILON) -> list[DropStats]:
    """Per-record DropStats for (OS, FS, RS) triples."""
    return [drop_stats(os_, fs, rs, epsilon) for os_, fs, rs in records]


@dataclass(frozen=True)
class WelchResult:
    t: float
    df: float
    p: float


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the regularized incomplete beta (Lentz)."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, 300):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-15:
            break
    return h


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b) for a, b > 0 and x in [0, 1]."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def welch_ttest(sample_a, sample_b) -> WelchResult:
    """Two-sided Welch t-test (unequal variances).

    t = (mean_a - mean_b) / sqrt(va/na + vb/nb) with Welch-Satterthwaite
    degrees of freedom; p = I_{df/(df+t^2)}(df/2, 1/2).
    """
    a = np.asarray(sample_a, dtype=np.float64)
    b = np.asarray(sample_b, dtype=np.float64)
    if a.size < 2 or b.size < 2:
        raise ValueError(f"samples must have size >= 2, got {a.size} and {b.size}")
    va, vb = a.var(ddof=1), b.var(ddof=1)
    if va == 0.0 and vb == 0.0:
        raise ValueError("both samples have zero variance")
    sa, sb = va / a.size, vb / b.size
    t = (a.mean() - b.mean()) / math.sqrt(sa + sb)
    # the df formula is scale-free in (sa, sb); normalizing by the larger
    # term keeps the squares from underflowing for denormal variances
    scale = max(sa, sb)
    ra, rb = sa / scale, sb / scale
    df = (ra + rb) ** 2 / (ra**2 / (a.size - 1) + rb**2 / (b.size - 1))
    p = regularized_incomplete_beta(df / 2.0, 0.5, df / (df + t * t))
    return WelchResult(t=float(t), df=float(df), p=float(p))


@dataclass
class HistogramResult:
    edges: list  # bins + 1 edges
    fractions: dict  # series name -> list of bins fractions
    outlier_fraction: dict  # series name -> fraction outside the range

    def check(self) -> None:
        for name, frac in self.fractions.items():
            total = sum(frac) + self.outlier_fraction[name]
            assert abs(total - 1.0) < 1e-9, f"{name}: bins + outliers = {total}"


def histogram(values, bins: int, value_range: tuple[float, float]) -> tuple[np.ndarray, np.ndarray, float]:
    """Normalized counts over ``bins`` equal bins spanning ``value_range``.

    Returns (edges, fractions, outlier_fraction); fractions are divided by
    the total number of values so bins plus outliers sum to one.
    """
    if bins < 1:
        raise ValueError("bins must be >= 1")
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("cannot histogram an empty sample")
    counts, edges = np.histogram(arr, bins=bins, range=value_range)
    fractions = counts / arr.size
    outliers = 1.0 - fractions.sum()
    return edges, fractions, float(outliers)
