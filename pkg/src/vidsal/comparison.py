"""Aggregation of two explanation runs into tables, histograms and tests.

Sample units per metric: mask length, drop ratio and drop difference are
per sequence (drop metrics only over included sequences); blob count is
per frame; blob size and center distance are per blob. Welch's test runs
per metric across the two models; when both samples are degenerate
(zero variance) the comparison falls back to t = 0, p = 1 for equal means
and t = +-inf, p = 0 otherwise, so identical inputs compare as identical.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .gradcam import SaliencyVolume
from .maskopt import MaskResult
from .metrics import (
    BLOB_CONNECTIVITY,
    BLOB_MIN_AREA,
    BLOB_THRESHOLD,
    DROP_EPSILON,
    blob_statistics,
    drop_stats,
    histogram,
    mask_length,
    welch_ttest,
)
from .tensor import read_vten

CSV_COLUMNS = [
    "clip_id",
    "model",
    "true_class",
    "target_class",
    "os",
    "fs",
    "rs",
    "drop_ratio",
    "drop_difference",
    "excluded",
    "mask_length",
    "blob_count_mean",
    "blob_size_mean",
    "blob_center_distance_mean",
]

METRICS = (
    "blob_count",
    "blob_size",
    "center_distance",
    "mask_length",
    "drop_ratio",
    "drop_difference",
)


@dataclass
class Explanation:
    clip_id: str
    true_class: str
    result: MaskResult
    volume: SaliencyVolume


@dataclass
class ExplanationRun:
    name: str
    architecture: str
    source: str
    classes: list
    mask_threshold: float
    explanations: list = field(default_factory=list)


def load_explanation_run(run_dir) -> ExplanationRun:
    """Read an explain output directory back into memory."""
    root = Path(run_dir)
    manifest_path = root / "manifest.json"
    if not manifest_path.exists():
        raise FileNotFoundError(f"no explanation manifest at {manifest_path}")
    manifest = json.loads(manifest_path.read_text())
    info = manifest["explain"]
    run = ExplanationRun(
        name=info["model_name"],
        architecture=info["architecture"],
        source=str(root),
        classes=info["classes"],
        mask_threshold=info["mask_threshold"],
    )
    for clip_id in info["clips"]:
        clip_dir = root / clip_id
        record = json.loads((clip_dir / "record.json").read_text())
        maps = read_vten(clip_dir / "saliency.vten")
        volume = SaliencyVolume(
            maps=maps,
            frame_coverage=tuple(tuple(g) for g in record["frame_coverage"]),
            class_index=record["target_class"],
        )
        run.explanations.append(
            Explanation(
                clip_id=clip_id,
                true_class=record["true_class_name"],
                result=MaskResult.from_dict(record),
                volume=volume,
            )
        )
    return run


@dataclass
class ModelSamples:
    """Per-model raw observations feeding every table and histogram."""

    name: str
    mask_lengths: list = field(default_factory=list)
    drop_ratios: list = field(default_factory=list)
    drop_differences: list = field(default_factory=list)
    blob_counts: list = field(default_factory=list)
    blob_sizes: list = field(default_factory=list)
    center_distances: list = field(default_factory=list)
    rows: list = field(default_factory=list)
    excluded_count: int = 0

    def metric_values(self, metric: str) -> list:
        return {
            "blob_count": self.blob_counts,
            "blob_size": self.blob_sizes,
            "center_distance": self.center_distances,
            "mask_length": self.mask_lengths,
            "drop_ratio": self.drop_ratios,
            "drop_difference": self.drop_differences,
        }[metric]


def collect_samples(run: ExplanationRun, epsilon: float = DROP_EPSILON) -> ModelSamples:
    samples = ModelSamples(name=run.name)
    for exp in run.explanations:
        res = exp.result
        length = mask_length(res.mask, run.mask_threshold)
        stats = drop_stats(res.original_score, res.freeze_score, res.reverse_score, epsilon)
        blob = blob_statistics([exp.volume])
        samples.mask_lengths.append(float(length))
        if stats.excluded:
            samples.excluded_count += 1
        else:
            samples.drop_ratios.append(stats.drop_ratio)
            samples.drop_differences.append(stats.drop_difference)
        samples.blob_counts.extend(float(c) for c in blob.counts_per_frame)
        samples.blob_sizes.extend(blob.sizes)
        samples.center_distances.extend(blob.center_distances)
        samples.rows.append(
            {
                "clip_id": exp.clip_id,
                "model": run.name,
                "true_class": exp.true_class,
                "target_class": run.classes[res.target_class],
                "os": repr(res.original_score),
                "fs": repr(res.freeze_score),
                "rs": repr(res.reverse_score),
                "drop_ratio": "" if stats.drop_ratio is None else repr(stats.drop_ratio),
                "drop_difference": "" if stats.drop_difference is None else repr(stats.drop_difference),
                "excluded": str(stats.excluded).lower(),
                "mask_length": str(length),
                "blob_count_mean": "" if blob.count_mean is None else repr(blob.count_mean),
                "blob_size_mean": "" if blob.size_mean is None else repr(blob.size_mean),
                "blob_center_distance_mean": ""
                if blob.center_distance_mean is None
                else repr(blob.center_distance_mean),
            }
        )
    return samples


def _welch_entry(a_vals, b_vals) -> dict | None:
    if len(a_vals) < 2 or len(b_vals) < 2:
        return None
    va = float(np.var(a_vals, ddof=1))
    vb = float(np.var(b_vals, ddof=1))
    if va == 0.0 and vb == 0.0:
        # degenerate fallback so identical runs compare as identical
        ma, mb = float(np.mean(a_vals)), float(np.mean(b_vals))
        if ma == mb:
            return {"t": 0.0, "df": float(len(a_vals) + len(b_vals) - 2), "p": 1.0}
        return {"t": math.inf if ma > mb else -math.inf, "df": float(len(a_vals) + len(b_vals) - 2), "p": 0.0}
    res = welch_ttest(a_vals, b_vals)
    return {"t": res.t, "df": res.df, "p": res.p}


def build_comparison(run_a: ExplanationRun, run_b: ExplanationRun,
                     bins: int = 16, epsilon: float = DROP_EPSILON) -> dict:
    """All comparison artifacts as plain data: rows, summary, histograms."""
    a = collect_samples(run_a, epsilon)
    b = collect_samples(run_b, epsilon)
    if a.name == b.name:
        a.name = f"{a.name}[a]"
        b.name = f"{b.name}[b]"

    metrics_summary = {}
    histograms = {}
    for metric in METRICS:
        a_vals, b_vals = a.metric_values(metric), b.metric_values(metric)
        entry = {
            "samples": {a.name: len(a_vals), b.name: len(b_vals)},
            "mean": {
                a.name: float(np.mean(a_vals)) if a_vals else None,
                b.name: float(np.mean(b_vals)) if b_vals else None,
            },
            "std": {
                a.name: float(np.std(a_vals, ddof=1)) if len(a_vals) > 1 else None,
                b.name: float(np.std(b_vals, ddof=1)) if len(b_vals) > 1 else None,
            },
            "welch": _welch_entry(a_vals, b_vals),
        }
        if entry["welch"] and entry["mean"][a.name] is not None and entry["mean"][b.name] is not None:
            if entry["mean"][a.name] == entry["mean"][b.name]:
                entry["higher_mean"] = None
            else:
                entry["higher_mean"] = a.name if entry["mean"][a.name] > entry["mean"][b.name] else b.name
        metrics_summary[metric] = entry

        pooled = list(a_vals) + list(b_vals)
        if pooled:
            lo, hi = float(min(pooled)), float(max(pooled))
            if lo == hi:
                hi = lo + 1.0
            series = {}
            outliers = {}
            edges = None
            for samples, vals in ((a, a_vals), (b, b_vals)):
                if vals:
                    edges_arr, frac, out = histogram(vals, bins, (lo, hi))
                    edges = edges_arr.tolist()
                    series[samples.name] = frac.tolist()
                    outliers[samples.name] = out
            histograms[metric] = {
                "range": [lo, hi],
                "edges": edges,
                "series": series,
                "outlier_fraction": outliers,
            }

    summary = {
        "models": [
            {
                "name": s.name,
                "architecture": r.architecture,
                "source": Path(r.source).name,  # full paths live in the manifest
                "sequences": len(r.explanations),
                "excluded_sequences": s.excluded_count,
            }
            for s, r in ((a, run_a), (b, run_b))
        ],
        "blob_params": {
            "threshold": BLOB_THRESHOLD,
            "min_area": BLOB_MIN_AREA,
            "connectivity": BLOB_CONNECTIVITY,
        },
        "exclusion_epsilon": epsilon,
        "mask_threshold": {a.name: run_a.mask_threshold, b.name: run_b.mask_threshold},
        "metrics": metrics_summary,
    }
    return {
        "rows": a.rows + b.rows,
        "summary": summary,
        "histograms": {"bins": bins, "models": [a.name, b.name], "metrics": histograms},
    }


def write_comparison(artifacts: dict, out_dir) -> list[str]:
    """Write per_sequence.csv, summary.json and histograms.json; returns
    the relative paths written."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "per_sequence.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in artifacts["rows"]:
            writer.writerow(row)
    (out / "summary.json").write_text(json.dumps(artifacts["summary"], indent=2) + "\n")
    (out / "histograms.json").write_text(json.dumps(artifacts["histograms"], indent=2) + "\n")
    return ["per_sequence.csv", "summary.json", "histograms.json"]
