"""Golden fixture builders written directly in the documented upstream
formats. Nothing here imports the upstream package; the files are built
byte by byte so these tests pin the renderer to the interface, not to any
implementation."""

import json

import numpy as np
from matplotlib import image as mpimg

METRICS = ("blob_count", "blob_size", "center_distance", "mask_length", "drop_ratio", "drop_difference")

# 16-entry binary mask with active runs at frames 4-8 and 14-15 (1-indexed)
REFERENCE_MASK = [0, 0, 0, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 1, 1, 0]


def write_pgm(path, img01):
    data = np.rint(np.clip(img01, 0.0, 1.0) * 255).astype(np.uint8)
    h, w = data.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode())
        fh.write(data.tobytes())


def golden_histograms(models=("conv3d", "convlstm")):
    rng = np.random.default_rng(5)
    metrics = {}
    for metric in METRICS:
        edges = np.linspace(0.0, 10.0, 9)
        series = {}
        outliers = {}
        for name in models:
            raw = rng.random(8)
            frac = raw / raw.sum() * 0.95  # bins + outliers sum to 1
            series[name] = [round(float(v), 6) for v in frac]
            outliers[name] = round(1.0 - sum(series[name]), 6)
        metrics[metric] = {
            "range": [0.0, 10.0],
            "edges": edges.tolist(),
            "series": series,
            "outlier_fraction": outliers,
        }
    return {"bins": 8, "models": list(models), "metrics": metrics}


def build_clip_dir(root, clip_id, mask, frames=None):
    n = len(mask)
    clip_dir = root / clip_id
    for sub in ("frames", "overlay", "perturbed", "saliency"):
        (clip_dir / sub).mkdir(parents=True)
    rng = np.random.default_rng(11)
    for i in range(n if frames is None else frames):
        img = rng.random((20, 20))
        write_pgm(clip_dir / "frames" / f"f{i:02d}.pgm", img)
        write_pgm(clip_dir / "perturbed" / f"f{i:02d}.pgm", img * 0.5)
        write_pgm(clip_dir / "saliency" / f"t{i:02d}.pgm", img * 0.3)
        rgb = np.stack([img, img * 0.4, np.zeros_like(img)], axis=-1)
        mpimg.imsave(clip_dir / "overlay" / f"f{i:02d}.png", rgb)
    record = {
        "clip_id": clip_id,
        "true_class_name": "collide",
        "os": 0.994,
        "fs": 0.083,
        "rs": 0.856,
        "mask": [0.9 if v else 0.02 for v in mask],
        "thresholded": [bool(v) for v in mask],
        "loss_trace": [1.0, 0.8],
        "target_class": 6,
        "predicted_class": 6,
        "true_class": 6,
        "event_window": [9, 11],
        "frame_coverage": [[i] for i in range(n)],
    }
    (clip_dir / "record.json").write_text(json.dumps(record, indent=2))
    return clip_dir
