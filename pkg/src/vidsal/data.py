"""Procedural video clips whose classes are defined by motion, not appearance.

Eight classes of anti-aliased square/disc sprites moving over a static
noisy background:

* ``move_left`` / ``move_right`` / ``move_up`` / ``move_down``: one sprite
  crossing the frame.
* ``approach`` / ``retreat``: two sprites converge to a gap and hold, or
  the time mirror of that.
* ``collide``: two sprites meet mid-clip, squash together briefly and
  bounce apart; the contact frames are returned as the event window.
* ``pass_each_other``: two sprites cross on nearly the same lane; the
  crossing frames are the event window.

Each mirrored class (``move_left``, ``move_up``, ``retreat``) is generated
as the exact frame-by-frame time reversal of its canonical twin with the
same seed, so reversing a clip of one class yields a pixel-identical clip
of the other. Every pixel is a pure function of the clip spec.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .tensor import read_vten, write_vten

CLASSES = (
    "move_left",
    "move_right",
    "move_up",
    "move_down",
    "approach",
    "retreat",
    "collide",
    "pass_each_other",
)

# mirrored class -> canonical twin whose time reversal it is
_CANONICAL_TWIN = {"move_left": "move_right", "move_up": "move_down", "retreat": "approach"}

MIRROR_PAIRS = (("move_left", "move_right"), ("move_up", "move_down"), ("approach", "retreat"))
MIRROR = {a: b for a, b in MIRROR_PAIRS} | {b: a for a, b in MIRROR_PAIRS}

EVENT_CLASSES = ("collide", "pass_each_other")

_TWO_OBJECT = {"approach", "retreat", "collide", "pass_each_other"}

_COLLIDE_DEPTH = 2.5  # peak core penetration in pixels


@dataclass(frozen=True)
class ObjectSpec:
    shape: str  # "square" or "disc"
    half: float  # half extent in pixels
    intensity: float


@dataclass(frozen=True)
class ClipSpec:
    label: str
    length: int
    size: int = 32
    objects: tuple[ObjectSpec, ...] | None = None
    trajectory: dict | None = None
    noise: float = 0.05
    seed: int = 0


@dataclass(frozen=True)
class EventWindow:
    """Inclusive frame range of the planted discriminative event."""

    start: int
    end: int

    def __post_init__(self):
        if not 0 <= self.start <= self.end:
            raise ValueError(f"invalid event window [{self.start}, {self.end}]")

    def frames(self) -> range:
        return range(self.start, self.end + 1)


def mirror_spec(spec: ClipSpec) -> ClipSpec:
    """Spec of the time-mirror class with identical seed and parameters."""
    if spec.label not in MIRROR:
        raise ValueError(f"{spec.label} has no mirror class")
    return replace(spec, label=MIRROR[spec.label])


def _streams(seed: int):
    obj_ss, traj_ss, bg_ss = np.random.SeedSequence(seed).spawn(3)
    return (
        np.random.default_rng(obj_ss),
        np.random.default_rng(traj_ss),
        np.random.default_rng(bg_ss),
    )


def _draw_objects(label: str, rng) -> tuple[ObjectSpec, ...]:
    count = 2 if label in _TWO_OBJECT else 1
    objs = []
    for _ in range(count):
        shape = "square" if rng.random() < 0.5 else "disc"
        half = float(rng.uniform(2.0, 3.5))
        intensity = float(rng.uniform(0.55, 1.0))
        objs.append(ObjectSpec(shape, half, intensity))
    return tuple(objs)


def _lane(rng, half: float, size: int) -> float:
    return float(rng.uniform(half + 1.0, size - 2.0 - half))


def _draw_params(canon: str, objects, length: int, size: int, rng) -> dict:
    last = length - 1
    if canon in ("move_right", "move_down"):
        h = objects[0].half
        return {
            "lane": _lane(rng, h, size),
            "p0": float(rng.uniform(h + 1.0, h + 3.0)),
            "p1": float(rng.uniform(size - 2.0 - h - 2.0, size - 2.0 - h)),
        }
    ha, hb = objects[0].half, objects[1].half
    hm = max(ha, hb)
    if canon == "approach":
        gap = float(rng.uniform(3.0, 6.0))
        center = size / 2.0 + float(rng.uniform(-2.0, 2.0))
        return {
            "lane": _lane(rng, hm, size),
            "xa0": float(rng.uniform(ha + 1.0, ha + 2.5)),
            "xb0": float(rng.uniform(size - 2.0 - hb - 1.5, size - 2.0 - hb)),
            "xa1": center - gap / 2.0 - ha,
            "xb1": center + gap / 2.0 + hb,
            "stop": int(round(rng.uniform(0.6, 0.8) * last)),
        }
    if canon == "collide":
        return {
            "lane": _lane(rng, hm, size),
            "xa0": float(rng.uniform(ha + 1.0, ha + 2.5)),
            "xb0": float(rng.uniform(size - 2.0 - hb - 1.5, size - 2.0 - hb)),
            "meet": size / 2.0 + float(rng.uniform(-2.0, 2.0)),
            "contact": int(round(rng.uniform(0.45, 0.65) * last)),
            "keep_a": float(rng.uniform(0.7, 1.0)),
            "keep_b": float(rng.uniform(0.7, 1.0)),
        }
    if canon == "pass_each_other":
        ya = _lane(rng, hm, size)
        dy = float(rng.uniform(-1.0, 1.0))
        return {
            "lane_a": ya,
            "lane_b": float(np.clip(ya + dy, hb + 1.0, size - 2.0 - hb)),
            "xa0": float(rng.uniform(ha + 1.0, ha + 2.5)),
            "xa1": float(rng.uniform(size - 2.0 - ha - 1.5, size - 2.0 - ha)),
            "xb0": float(rng.uniform(size - 2.0 - hb - 1.5, size - 2.0 - hb)),
            "xb1": float(rng.uniform(hb + 1.0, hb + 2.5)),
        }
    raise ValueError(f"unknown canonical class {canon!r}")


def _piecewise(length: int, times, values) -> np.ndarray:
    return np.interp(np.arange(length, dtype=np.float64), times, values)


def _tracks(canon: str, params: dict, length: int, objects) -> list[np.ndarray]:
    """Per-object arrays of (x, y) positions, one row per frame."""
    last = length - 1
    const = np.full(length, 0.0)
    if canon == "move_right":
        x = _piecewise(length, [0, last], [params["p0"], params["p1"]])
        y = const + params["lane"]
        return [np.stack([x, y], axis=1)]
    if canon == "move_down":
        y = _piecewise(length, [0, last], [params["p0"], params["p1"]])
        x = const + params["lane"]
        return [np.stack([x, y], axis=1)]
    if canon == "approach":
        ts = params["stop"]
        xa = _piecewise(length, [0, ts], [params["xa0"], params["xa1"]])
        xb = _piecewise(length, [0, ts], [params["xb0"], params["xb1"]])
        lane = const + params["lane"]
        return [np.stack([xa, lane], axis=1), np.stack([xb, lane], axis=1)]
    if canon == "collide":
        ha, hb = objects[0].half, objects[1].half
        tc = params["contact"]
        xa_peak = params["meet"] - ha + _COLLIDE_DEPTH / 2.0
        xb_peak = params["meet"] + hb - _COLLIDE_DEPTH / 2.0
        va_out = params["keep_a"] * (xa_peak - params["xa0"]) / tc
        vb_out = params["keep_b"] * (params["xb0"] - xb_peak) / tc
        va_out = min(va_out, (xa_peak - (ha + 1.0)) / (last - tc))
        vb_out = min(vb_out, ((params["xb0"]) - xb_peak) / (last - tc))
        xa = _piecewise(length, [0, tc, last], [params["xa0"], xa_peak, xa_peak - va_out * (last - tc)])
        xb = _piecewise(length, [0, tc, last], [params["xb0"], xb_peak, xb_peak + vb_out * (last - tc)])
        lane = const + params["lane"]
        return [np.stack([xa, lane], axis=1), np.stack([xb, lane], axis=1)]
    if canon == "pass_each_other":
        xa = _piecewise(length, [0, last], [params["xa0"], params["xa1"]])
        xb = _piecewise(length, [0, last], [params["xb0"], params["xb1"]])
        return [
            np.stack([xa, const + params["lane_a"]], axis=1),
            np.stack([xb, const + params["lane_b"]], axis=1),
        ]
    raise ValueError(f"unknown canonical class {canon!r}")


def _coverage(obj: ObjectSpec, x: float, y: float, size: int) -> np.ndarray:
    cols = np.arange(size, dtype=np.float64)
    rows = np.arange(size, dtype=np.float64)
    if obj.shape == "square":
        ox = np.clip(np.minimum(cols + 0.5, x + obj.half) - np.maximum(cols - 0.5, x - obj.half), 0.0, 1.0)
        oy = np.clip(np.minimum(rows + 0.5, y + obj.half) - np.maximum(rows - 0.5, y - obj.half), 0.0, 1.0)
        return oy[:, None] * ox[None, :]
    dist = np.hypot(cols[None, :] - x, rows[:, None] - y)
    return np.clip(obj.half + 0.5 - dist, 0.0, 1.0)


def generate_clip(spec: ClipSpec) -> tuple[np.ndarray, EventWindow | None]:
    """Render a clip at its raw length.

    Returns the [T, H, W, 1] float32 clip and, for collide/pass clips, the
    raw-frame event window measured from the rendered sprite cores (pixels
    with coverage >= 0.5). Trajectory parameters of a mirrored class
    describe its canonical twin; the twin is rendered and flipped in time.
    """
    if spec.label not in CLASSES:
        raise ValueError(f"unknown class {spec.label!r} (known: {CLASSES})")
    if spec.length < 2:
        raise ValueError(f"clip length must be >= 2, got {spec.length}")
    canon = _CANONICAL_TWIN.get(spec.label, spec.label)
    rng_obj, rng_traj, rng_bg = _streams(spec.seed)
    objects = spec.objects if spec.objects is not None else _draw_objects(canon, rng_obj)
    for obj in objects:
        if 2.0 * obj.half >= spec.size:
            raise ValueError(
                f"object larger than frame: extent {2 * obj.half} vs frame size {spec.size}"
            )
    params = dict(spec.trajectory) if spec.trajectory is not None else _draw_params(
        canon, objects, spec.length, spec.size, rng_traj
    )
    tracks = _tracks(canon, params, spec.length, objects)
    background = rng_bg.uniform(0.0, spec.noise, size=(spec.size, spec.size))

    frames = np.empty((spec.length, spec.size, spec.size), dtype=np.float64)
    cores = [np.empty((spec.length, spec.size, spec.size), dtype=bool) for _ in objects]
    for t in range(spec.length):
        img = background.copy()
        for k, (obj, track) in enumerate(zip(objects, tracks)):
            cov = _coverage(obj, track[t, 0], track[t, 1], spec.size)
            cores[k][t] = cov >= 0.5
            img = img * (1.0 - cov) + obj.intensity * cov
        frames[t] = np.clip(img, 0.0, 1.0)

    window = None
    if canon in EVENT_CLASSES:
        touching = np.flatnonzero((cores[0] & cores[1]).any(axis=(1, 2)))
        if touching.size == 0:
            raise ValueError(f"{canon} clip produced no contact frames (seed {spec.seed})")
        window = EventWindow(int(touching.min()), int(touching.max()))

    if spec.label != canon:
        frames = frames[::-1]

    return np.ascontiguousarray(frames[..., None], dtype=np.float32), window


def subsample_indices(raw_length: int, target: int) -> np.ndarray:
    """Evenly spaced source indices: floor(i * raw / target), i = 0..target-1."""
    if not 1 <= target <= raw_length:
        raise ValueError(f"cannot subsample {raw_length} frames to {target}")
    i = np.arange(target, dtype=np.int64)
    return (i * raw_length) // target


def subsample(clip: np.ndarray, target: int) -> np.ndarray:
    """Reduce a clip to ``target`` frames covering the whole sequence."""
    return clip[subsample_indices(clip.shape[0], target)].copy()


def map_window_to_subsample(window: EventWindow, raw_length: int, target: int) -> EventWindow | None:
    """Event window in subsampled coordinates, or None if no index lands inside."""
    idx = subsample_indices(raw_length, target)
    inside = np.flatnonzero((idx >= window.start) & (idx <= window.end))
    if inside.size == 0:
        return None
    return EventWindow(int(inside.min()), int(inside.max()))


@dataclass
class ClipRecord:
    clip_id: str
    label: str
    label_index: int
    clip: np.ndarray  # [T, H, W, 1] float32, already subsampled
    event_window: EventWindow | None
    clip_seed: int
    raw_length: int


@dataclass
class Dataset:
    classes: tuple[str, ...]
    target_frames: int
    size: int
    seed: int
    train: list[ClipRecord] = field(default_factory=list)
    val: list[ClipRecord] = field(default_factory=list)

    def label_index(self, label: str) -> int:
        return self.classes.index(label)


def make_dataset(
    classes=CLASSES,
    clips_per_class: int = 40,
    split_ratio: float = 0.8,
    seed: int = 0,
    target_frames: int = 16,
    size: int = 32,
    raw_lengths=(32, 48, 64),
    noise: float = 0.05,
) -> Dataset:
    """Seeded, stratified train/val dataset of subsampled clips."""
    if not 0.0 < split_ratio < 1.0:
        raise ValueError(f"split ratio must lie in (0, 1), got {split_ratio}")
    if clips_per_class < 2:
        raise ValueError(f"need at least 2 clips per class, got {clips_per_class}")
    classes = tuple(classes)
    rng = np.random.default_rng(seed)
    ds = Dataset(classes=classes, target_frames=target_frames, size=size, seed=seed)
    for label in classes:
        records = []
        for k in range(clips_per_class):
            clip_seed = int(rng.integers(0, 2**31 - 1))
            raw_length = int(rng.choice(raw_lengths))
            spec = ClipSpec(label, length=raw_length, size=size, noise=noise, seed=clip_seed)
            raw, window = generate_clip(spec)
            sub = subsample(raw, target_frames)
            sub_window = (
                map_window_to_subsample(window, raw_length, target_frames) if window else None
            )
            records.append(
                ClipRecord(
                    clip_id=f"{label}-{k:04d}",
                    label=label,
                    label_index=classes.index(label),
                    clip=sub,
                    event_window=sub_window,
                    clip_seed=clip_seed,
                    raw_length=raw_length,
                )
            )
        order = rng.permutation(clips_per_class)
        n_train = int(split_ratio * clips_per_class)
        for pos in order[:n_train]:
            ds.train.append(records[pos])
        for pos in order[n_train:]:
            ds.val.append(records[pos])
    return ds


def save_dataset(dataset: Dataset, out_dir) -> None:
    out = Path(out_dir)
    (out / "clips").mkdir(parents=True, exist_ok=True)
    entries = []
    for split_name in ("train", "val"):
        for rec in getattr(dataset, split_name):
            rel = f"clips/{rec.clip_id}.vten"
            write_vten(out / rel, rec.clip)
            entries.append(
                {
                    "id": rec.clip_id,
                    "class": rec.label,
                    "split": split_name,
                    "seed": rec.clip_seed,
                    "raw_length": rec.raw_length,
                    "event_window": list((rec.event_window.start, rec.event_window.end))
                    if rec.event_window
                    else None,
                    "file": rel,
                }
            )
    manifest = {
        "classes": list(dataset.classes),
        "target_frames": dataset.target_frames,
        "size": dataset.size,
        "seed": dataset.seed,
        "clips": entries,
    }
    (out / "dataset.json").write_text(json.dumps(manifest, indent=2) + "\n")


def load_dataset(in_dir) -> Dataset:
    root = Path(in_dir)
    manifest_path = root / "dataset.json"
    if not manifest_path.exists():
        raise FileNotFoundError(f"no dataset manifest at {manifest_path}")
    manifest = json.loads(manifest_path.read_text())
    classes = tuple(manifest["classes"])
    ds = Dataset(
        classes=classes,
        target_frames=manifest["target_frames"],
        size=manifest["size"],
        seed=manifest["seed"],
    )
    for entry in manifest["clips"]:
        window = entry["event_window"]
        rec = ClipRecord(
            clip_id=entry["id"],
            label=entry["class"],
            label_index=classes.index(entry["class"]),
            clip=read_vten(root / entry["file"]),
            event_window=EventWindow(*window) if window else None,
            clip_seed=entry["seed"],
            raw_length=entry["raw_length"],
        )
        getattr(ds, entry["split"]).append(rec)
    return ds
