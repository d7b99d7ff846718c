"""Command-line pipeline: generate data, train models, explain clips,
compare two explanation runs.

Every command writes its outputs plus a ``manifest.json`` naming the
command, the effective configuration, the seeds and every produced file.
Configuration comes from an INI-style file with sections ``[data]``,
``[train.conv3d]``, ``[train.convlstm]``, ``[mask]`` and ``[compare]``;
command-line flags override file values. Failures are reported as one
machine-parsable line on stderr and partial output directories are
removed. Relative ``--out`` paths land under $VIDSAL_OUT_ROOT when set.
"""

from __future__ import annotations

import argparse
import configparser
import json
import os
import shutil
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .comparison import build_comparison, load_explanation_run, write_comparison
from .data import CLASSES, load_dataset, make_dataset, save_dataset
from .gradcam import gradcam, upsample
from .imgio import write_overlay_png, write_pgm
from .maskopt import MaskOptConfig, optimize_mask
from .models import ModelCheckpoint
from .perturb import apply_freeze
from .tensor import write_vten
from .train import TrainConfig, default_train_config, train

OUT_ROOT_ENV = "VIDSAL_OUT_ROOT"


class CliError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


def _resolve_out(path_str: str) -> Path:
    path = Path(path_str)
    root = os.environ.get(OUT_ROOT_ENV)
    if root and not path.is_absolute():
        return Path(root) / path
    return path


def _require_exists(path: Path, what: str) -> Path:
    if not path.exists():
        raise CliError("missing_input", f"{what} not found: {path}")
    return path


def _load_config(path_str: str | None) -> configparser.ConfigParser:
    parser = configparser.ConfigParser()
    if path_str:
        path = _require_exists(Path(path_str), "config file")
        try:
            parser.read(path)
        except configparser.Error as exc:
            raise CliError("bad_config", f"cannot parse {path}: {exc}") from exc
    return parser


def _section(cfg: configparser.ConfigParser, name: str) -> dict:
    return dict(cfg[name]) if cfg.has_section(name) else {}


def _write_manifest(out: Path, command: str, config: dict, seed, inputs: list, t0: float) -> None:
    outputs = sorted(
        str(p.relative_to(out)) for p in out.rglob("*") if p.is_file() and p.name != "manifest.json"
    )
    manifest = {
        "command": command,
        "tool_version": __version__,
        "seed": seed,
        "config": config,
        "inputs": [str(p) for p in inputs],
        "outputs": outputs,
        "wall_clock_seconds": round(time.perf_counter() - t0, 3),
        "created_utc": datetime.now(timezone.utc).isoformat(),
    }
    if command == "explain":
        manifest["explain"] = config.pop("_explain_manifest")
        manifest["config"] = config
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


# ---------------------------------------------------------------------------
# generate


def cmd_generate(args) -> int:
    t0 = time.perf_counter()
    cfg = _load_config(args.config)
    data_cfg = _section(cfg, "data")
    seed = args.seed if args.seed is not None else int(data_cfg.get("seed", 0))
    params = {
        "classes": tuple(data_cfg.get("classes", ",".join(CLASSES)).split(",")),
        "clips_per_class": args.clips_per_class or int(data_cfg.get("clips_per_class", 40)),
        "split_ratio": float(data_cfg.get("split_ratio", 0.8)),
        "target_frames": int(data_cfg.get("target_frames", 16)),
        "size": int(data_cfg.get("size", 32)),
        "raw_lengths": tuple(int(v) for v in data_cfg.get("raw_lengths", "32,48,64").split(",")),
        "noise": float(data_cfg.get("noise", 0.05)),
    }
    out = _prepare_out(_resolve_out(args.out))
    try:
        dataset = make_dataset(seed=seed, **params)
        save_dataset(dataset, out)
        snapshot = dict(params)
        snapshot["classes"] = list(params["classes"])
        snapshot["raw_lengths"] = list(params["raw_lengths"])
        _write_manifest(out, "generate", snapshot, seed, [], t0)
    except Exception:
        shutil.rmtree(out, ignore_errors=True)
        raise
    return 0


# ---------------------------------------------------------------------------
# train


def cmd_train(args) -> int:
    t0 = time.perf_counter()
    cfg = _load_config(args.config)
    section = _section(cfg, f"train.{args.model}")
    base = default_train_config(args.model)
    train_cfg = TrainConfig(
        epochs=args.epochs or int(section.get("epochs", base.epochs)),
        learning_rate=float(section.get("learning_rate", base.learning_rate)),
        optimizer=section.get("optimizer", base.optimizer),
        momentum=float(section.get("momentum", base.momentum)),
        clip_norm=float(section.get("clip_norm", base.clip_norm)),
        seed=args.seed if args.seed is not None else int(section.get("seed", 0)),
    )
    dataset = load_dataset(_require_exists(Path(args.data), "dataset directory"))
    out = _prepare_out(_resolve_out(args.out))
    try:
        net, report = train(args.model, dataset, train_cfg)
        metrics = {
            "val_accuracy": report.val_accuracy,
            "final_train_loss": report.final_train_loss,
            "epochs": report.epochs,
        }
        ModelCheckpoint.save(net, seed=train_cfg.seed, metrics=metrics, out_dir=out)
        snapshot = {
            "model": args.model,
            "epochs": train_cfg.epochs,
            "learning_rate": train_cfg.learning_rate,
            "optimizer": train_cfg.optimizer,
            "momentum": train_cfg.momentum,
            "clip_norm": train_cfg.clip_norm,
            "metrics": metrics,
        }
        _write_manifest(out, "train", snapshot, train_cfg.seed, [args.data], t0)
    except Exception:
        shutil.rmtree(out, ignore_errors=True)
        raise
    print(f"val_accuracy={report.val_accuracy:.4f}")
    return 0


# ---------------------------------------------------------------------------
# explain

_WORKER = {}


def _mask_config(cfg: configparser.ConfigParser, args) -> MaskOptConfig:
    section = _section(cfg, "mask")
    base = MaskOptConfig()
    return MaskOptConfig(
        lambda1=float(section.get("lambda1", base.lambda1)),
        lambda2=float(section.get("lambda2", base.lambda2)),
        beta=float(section.get("beta", base.beta)),
        learning_rate=float(section.get("learning_rate", base.learning_rate)),
        iterations=args.iterations or int(section.get("iterations", base.iterations)),
        threshold=float(section.get("threshold", base.threshold)),
        init_high=float(section.get("init_high", base.init_high)),
        init_low=float(section.get("init_low", base.init_low)),
    )


def _select_records(dataset, args) -> list:
    records = {"train": dataset.train, "val": dataset.val}[args.split]
    if args.clip_ids:
        wanted = args.clip_ids.split(",")
        by_id = {rec.clip_id: rec for rec in dataset.train + dataset.val}
        missing = [cid for cid in wanted if cid not in by_id]
        if missing:
            raise CliError("missing_input", f"unknown clip ids: {','.join(missing)}")
        return [by_id[cid] for cid in wanted]
    if args.classes:
        keep = set(args.classes.split(","))
        unknown = keep - set(dataset.classes)
        if unknown:
            raise CliError("missing_input", f"unknown classes: {','.join(sorted(unknown))}")
        records = [rec for rec in records if rec.label in keep]
    records = sorted(records, key=lambda rec: rec.clip_id)
    if args.per_class:
        chosen = []
        seen: dict[str, int] = {}
        for rec in records:
            if seen.get(rec.label, 0) < args.per_class:
                seen[rec.label] = seen.get(rec.label, 0) + 1
                chosen.append(rec)
        records = chosen
    if args.limit:
        records = records[: args.limit]
    if not records:
        raise CliError("missing_input", "clip selection is empty")
    return records


def _explain_one(clip_id: str) -> float:
    """Worker body: explain one clip into <out>/<clip_id> atomically.
    Returns the CPU seconds spent on the mask optimization."""
    state = _WORKER
    net = state["net"]
    rec = state["records"][clip_id]
    mask_cfg: MaskOptConfig = state["mask_cfg"]
    out: Path = state["out"]
    with_crop: bool = state["with_crop"]

    cpu0 = time.process_time()
    result = optimize_mask(net, rec.clip, config=mask_cfg, true_class=rec.label_index)
    mask_cpu = time.process_time() - cpu0
    volume = upsample(gradcam(net, rec.clip, result.target_class), rec.clip.shape[1], rec.clip.shape[2])

    tmp = out / f"{clip_id}.tmp"
    shutil.rmtree(tmp, ignore_errors=True)
    for sub in ("frames", "perturbed", "saliency", "overlay"):
        (tmp / sub).mkdir(parents=True)

    record = result.to_dict()
    record["clip_id"] = clip_id
    record["true_class_name"] = rec.label
    record["event_window"] = [rec.event_window.start, rec.event_window.end] if rec.event_window else None
    record["frame_coverage"] = [list(g) for g in volume.frame_coverage]

    write_vten(tmp / "saliency.vten", volume.maps)
    frames = rec.clip[..., 0]
    perturbed = apply_freeze(rec.clip, result.mask)[..., 0]
    normalized = volume.normalized()
    frame_to_timestep = {}
    for t_idx, group in enumerate(volume.frame_coverage):
        for f_idx in group:
            frame_to_timestep[f_idx] = t_idx
    for f_idx in range(frames.shape[0]):
        write_pgm(tmp / "frames" / f"f{f_idx:02d}.pgm", frames[f_idx])
        write_pgm(tmp / "perturbed" / f"f{f_idx:02d}.pgm", perturbed[f_idx])
        write_overlay_png(
            tmp / "overlay" / f"f{f_idx:02d}.png", frames[f_idx], normalized[frame_to_timestep[f_idx]]
        )
    for t_idx in range(normalized.shape[0]):
        write_pgm(tmp / "saliency" / f"t{t_idx:02d}.pgm", normalized[t_idx])
    if with_crop:
        from .croporacle import exhaustive_crop_search

        crop = exhaustive_crop_search(net, rec.clip, result.target_class)
        (tmp / "crop.json").write_text(
            json.dumps(
                {
                    "class_index": crop.class_index,
                    "best": list(crop.best),
                    "scores": [[a, b, s] for a, b, s in crop.scores],
                },
                indent=2,
            )
            + "\n"
        )
    (tmp / "record.json").write_text(json.dumps(record, indent=2) + "\n")
    final = out / clip_id
    shutil.rmtree(final, ignore_errors=True)
    os.replace(tmp, final)
    return mask_cpu


def cmd_explain(args) -> int:
    t0 = time.perf_counter()
    cfg = _load_config(args.config)
    mask_cfg = _mask_config(cfg, args)
    net, ckpt = ModelCheckpoint.load(_require_exists(Path(args.checkpoint), "checkpoint directory"))
    dataset = load_dataset(_require_exists(Path(args.data), "dataset directory"))
    records = _select_records(dataset, args)
    out = _prepare_out(_resolve_out(args.out))
    try:
        _WORKER.update(
            {
                "net": net,
                "records": {rec.clip_id: rec for rec in records},
                "mask_cfg": mask_cfg,
                "out": out,
                "with_crop": args.crop,
            }
        )
        clip_ids = [rec.clip_id for rec in records]
        if args.jobs > 1:
            with ProcessPoolExecutor(max_workers=args.jobs) as pool:
                cpu_seconds = list(pool.map(_explain_one, clip_ids))
        else:
            cpu_seconds = [_explain_one(cid) for cid in clip_ids]
        snapshot = {
            "mask": {
                "lambda1": mask_cfg.lambda1,
                "lambda2": mask_cfg.lambda2,
                "beta": mask_cfg.beta,
                "learning_rate": mask_cfg.learning_rate,
                "iterations": mask_cfg.iterations,
                "threshold": mask_cfg.threshold,
                "init_high": mask_cfg.init_high,
                "init_low": mask_cfg.init_low,
            },
            "jobs": args.jobs,
            "_explain_manifest": {
                "model_name": args.name or net.architecture,
                "architecture": net.architecture,
                "checkpoint_seed": ckpt.seed,
                "classes": list(dataset.classes),
                "mask_threshold": mask_cfg.threshold,
                "clips": clip_ids,
                "mask_cpu_seconds": {cid: round(s, 3) for cid, s in zip(clip_ids, cpu_seconds)},
            },
        }
        _write_manifest(out, "explain", snapshot, ckpt.seed, [args.checkpoint, args.data], t0)
    except Exception:
        shutil.rmtree(out, ignore_errors=True)
        raise
    finally:
        _WORKER.clear()
    print(f"explained {len(records)} clips")
    return 0


# ---------------------------------------------------------------------------
# compare


def cmd_compare(args) -> int:
    t0 = time.perf_counter()
    cfg = _load_config(args.config)
    section = _section(cfg, "compare")
    bins = args.bins or int(section.get("bins", 16))
    epsilon = float(section.get("exclusion_epsilon", 0.001))
    run_a = load_explanation_run(_require_exists(Path(args.a), "explanation directory"))
    run_b = load_explanation_run(_require_exists(Path(args.b), "explanation directory"))
    out = _prepare_out(_resolve_out(args.out))
    try:
        artifacts = build_comparison(run_a, run_b, bins=bins, epsilon=epsilon)
        write_comparison(artifacts, out)
        _write_manifest(
            out, "compare", {"bins": bins, "exclusion_epsilon": epsilon}, None, [args.a, args.b], t0
        )
    except Exception:
        shutil.rmtree(out, ignore_errors=True)
        raise
    return 0


# ---------------------------------------------------------------------------


def _prepare_out(out: Path) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vidsal",
        description="Temporal saliency masks and Grad-CAM comparison for small video classifiers",
    )
    parser.add_argument("--version", action="version", version=f"vidsal {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="render a seeded synthetic dataset")
    p.add_argument("--config", help="INI config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--clips-per-class", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train one model on a dataset directory")
    p.add_argument("--model", choices=["conv3d", "convlstm"], required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--config", help="INI config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("explain", help="learn temporal masks and saliency volumes for clips")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--config", help="INI config file")
    p.add_argument("--split", choices=["train", "val"], default="val")
    p.add_argument("--clip-ids", help="comma-separated explicit clip ids")
    p.add_argument("--classes", help="comma-separated class filter")
    p.add_argument("--per-class", type=int, help="cap clips per class (id order)")
    p.add_argument("--limit", type=int, help="cap total clips")
    p.add_argument("--iterations", type=int, help="override mask iterations")
    p.add_argument("--crop", action="store_true", help="also run the exhaustive crop search")
    p.add_argument("--jobs", type=int, default=1, help="parallel clip workers")
    p.add_argument("--name", help="model label used in comparisons")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("compare", help="aggregate two explanation runs into tables and tests")
    p.add_argument("--a", required=True, help="first explanation directory")
    p.add_argument("--b", required=True, help="second explanation directory")
    p.add_argument("--config", help="INI config file")
    p.add_argument("--bins", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error code={exc.code} message={exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error code=missing_input message={exc}", file=sys.stderr)
        return 2
    except (ValueError, KeyError) as exc:
        print(f"error code=invalid_input message={exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
