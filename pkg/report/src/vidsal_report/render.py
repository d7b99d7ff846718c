"""Figure layout for comparison histograms and per-clip strips."""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.image as mpimg
import matplotlib.pyplot as plt
import numpy as np

from .formats import read_histograms, read_pgm, read_record, sorted_images

SERIES_COLORS = ("tab:orange", "tab:blue")
MASK_ON_COLOR = "tab:red"
MASK_OFF_COLOR = "tab:green"


@dataclass
class ReportSpec:
    compare_dir: str | None = None
    explain_dirs: list = field(default_factory=list)
    metrics: list | None = None  # None draws every metric present
    bins: int | None = None  # validated against the data when given
    out_dir: str = "report"
    image_format: str = "png"


def render_histograms(spec: ReportSpec) -> dict:
    """One overlaid bar chart per metric.

    Bar heights are exactly the normalized fractions the comparison stage
    emitted; this function never re-bins. Returns, per rendered metric,
    the output path and the heights actually drawn (read back from the
    bar containers) keyed by series name.
    """
    data = read_histograms(spec.compare_dir)
    out = Path(spec.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    wanted = spec.metrics or list(data["metrics"].keys())
    if spec.bins is not None and spec.bins != data["bins"]:
        raise ValueError(f"requested {spec.bins} bins but the data was binned with {data['bins']}")
    rendered = {}
    for metric in wanted:
        entry = data["metrics"].get(metric)
        if entry is None or not entry["series"]:
            print(f"warning: metric {metric!r} has no data, skipped", file=sys.stderr)
            continue
        edges = np.asarray(entry["edges"], dtype=np.float64)
        centers = (edges[:-1] + edges[1:]) / 2.0
        width = (edges[1] - edges[0]) * 0.42
        n_series = len(entry["series"])
        fig, ax = plt.subplots(figsize=(6.0, 3.4))
        drawn = {}
        for i, (name, fractions) in enumerate(entry["series"].items()):
            offset = (i - (n_series - 1) / 2.0) * width
            bars = ax.bar(
                centers + offset,
                fractions,
                width=width,
                label=name,
                color=SERIES_COLORS[i % len(SERIES_COLORS)],
                edgecolor="black",
                linewidth=0.3,
            )
            drawn[name] = [rect.get_height() for rect in bars]
            outlier = entry["outlier_fraction"].get(name, 0.0)
            if outlier:
                ax.plot([], [], " ", label=f"{name} outliers: {outlier:.3f}")
        ax.set_xlabel(metric.replace("_", " "))
        ax.set_ylabel("fraction of samples")
        ax.legend(fontsize=8)
        ax.set_title(f"{metric.replace('_', ' ')} (normalized)")
        fig.tight_layout()
        path = out / f"hist_{metric}.{spec.image_format}"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        rendered[metric] = {"path": str(path), "series": drawn, "edges": edges.tolist()}
    return rendered


def timeline_colors(active_flags) -> list[str]:
    """Red for active mask frames, green for inactive ones."""
    return [MASK_ON_COLOR if on else MASK_OFF_COLOR for on in active_flags]


def render_clip_strip(clip_dir, out_path) -> dict:
    """Composite strip for one explained clip: original frames, saliency
    overlays and the freeze-perturbed input in three aligned rows, plus a
    mask on/off timeline bar.

    Returns the timeline colors and score line actually drawn.
    """
    clip_dir = Path(clip_dir)
    record = read_record(clip_dir)
    frames = [read_pgm(p) for p in sorted_images(clip_dir / "frames", ".pgm")]
    overlays = [mpimg.imread(p) for p in sorted_images(clip_dir / "overlay", ".png")]
    perturbed = [read_pgm(p) for p in sorted_images(clip_dir / "perturbed", ".pgm")]
    n = len(record["thresholded"])
    if not (len(frames) == len(overlays) == len(perturbed) == n):
        raise ValueError(
            f"{clip_dir.name}: inconsistent frame counts "
            f"(frames {len(frames)}, overlays {len(overlays)}, perturbed {len(perturbed)}, mask {n})"
        )
    colors = timeline_colors(record["thresholded"])
    score_line = f"OS: {record['os']:.3f}  FS: {record['fs']:.3f}  RS: {record['rs']:.3f}"

    fig = plt.figure(figsize=(n * 0.62, 2.9))
    grid = fig.add_gridspec(4, n, height_ratios=[1, 1, 1, 0.28], hspace=0.06, wspace=0.04)
    rows = (frames, overlays, perturbed)
    labels = ("input", "saliency", "perturbed")
    for r, images in enumerate(rows):
        for c in range(n):
            ax = fig.add_subplot(grid[r, c])
            if images[c].ndim == 2:
                ax.imshow(images[c], cmap="gray", vmin=0.0, vmax=1.0)
            else:
                ax.imshow(images[c])
            ax.set_xticks([])
            ax.set_yticks([])
            if c == 0:
                ax.set_ylabel(labels[r], fontsize=7)
    for c in range(n):
        ax = fig.add_subplot(grid[3, c])
        ax.set_facecolor(colors[c])
        ax.set_xticks([])
        ax.set_yticks([])
        ax.set_xlabel(str(c + 1), fontsize=6)
    fig.suptitle(f"{clip_dir.name}   {score_line}", fontsize=9)
    fig.savefig(out_path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return {"path": str(out_path), "timeline": colors, "scores": score_line}


def render_strips(spec: ReportSpec, clip_ids=None) -> list[dict]:
    from .formats import list_clip_dirs

    out = Path(spec.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    results = []
    for explain_dir in spec.explain_dirs:
        for clip_dir in list_clip_dirs(explain_dir):
            if clip_ids and clip_dir.name not in clip_ids:
                continue
            target = out / f"strip_{Path(explain_dir).name}_{clip_dir.name}.{spec.image_format}"
            results.append(render_clip_strip(clip_dir, target))
    return results
