"""Readers for the upstream pipeline's file formats."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np


def read_histograms(compare_dir) -> dict:
    path = Path(compare_dir) / "histograms.json"
    if not path.exists():
        raise FileNotFoundError(f"no histogram data at {path}")
    return json.loads(path.read_text())


def read_record(clip_dir) -> dict:
    path = Path(clip_dir) / "record.json"
    if not path.exists():
        raise FileNotFoundError(f"no explanation record at {path}")
    return json.loads(path.read_text())


def read_pgm(path) -> np.ndarray:
    """Binary (P5) 8-bit PGM to float image in [0, 1]."""
    blob = Path(path).read_bytes()
    if not blob.startswith(b"P5"):
        raise ValueError(f"{path}: not a binary PGM")
    fields: list[bytes] = []
    pos = 2
    while len(fields) < 3:
        while pos < len(blob) and blob[pos : pos + 1].isspace():
            pos += 1
        if blob[pos : pos + 1] == b"#":  # comment line
            while pos < len(blob) and blob[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos : pos + 1].isspace():
            pos += 1
        fields.append(blob[start:pos])
    width, height, maxval = (int(f) for f in fields)
    pos += 1  # single whitespace after maxval
    if maxval > 255:
        raise ValueError(f"{path}: only 8-bit PGMs are produced upstream")
    data = np.frombuffer(blob, dtype=np.uint8, count=width * height, offset=pos)
    return data.reshape(height, width).astype(np.float64) / maxval


def sorted_images(directory, suffix: str) -> list[Path]:
    return sorted(Path(directory).glob(f"*{suffix}"))


def list_clip_dirs(explain_dir) -> list[Path]:
    """Clip subdirectories of an explain output, in manifest order."""
    root = Path(explain_dir)
    manifest_path = root / "manifest.json"
    if not manifest_path.exists():
        raise FileNotFoundError(f"no explanation manifest at {manifest_path}")
    manifest = json.loads(manifest_path.read_text())
    return [root / cid for cid in manifest["explain"]["clips"]]
