"""Seeded single-clip training loops for both architectures.

Defaults follow the per-architecture optimizer choices (ADAM for the 3-D
net, momentum-0.2 SGD for the ConvLSTM); learning rates and epoch counts
are tuned for the synthetic motion task. Training is deterministic given
the seed: initialization, shuffling and every update are driven by one
generator, and parameters stay float32 throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import ops
from .data import Dataset
from .models import Conv3DNetConfig, ConvLSTMNetConfig, initialize_net
from .optim import Adam, MomentumSGD
from .tensor import Tape, Tensor, backward


def config_for_dataset(architecture: str, dataset: Dataset):
    """Architecture config sized to a dataset's clips and class count."""
    common = dict(
        frames=dataset.target_frames,
        height=dataset.size,
        width=dataset.size,
        channels=1,
        num_classes=len(dataset.classes),
    )
    if architecture == "conv3d":
        return Conv3DNetConfig(**common)
    if architecture == "convlstm":
        return ConvLSTMNetConfig(**common)
    raise ValueError(f"unknown architecture {architecture!r}")


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int, step: int, loss: float):
        super().__init__(f"non-finite loss {loss} at epoch {epoch}, step {step}")
        self.epoch = epoch
        self.step = step


@dataclass
class TrainConfig:
    epochs: int
    learning_rate: float
    optimizer: str  # "adam" or "sgd"
    momentum: float = 0.2
    clip_norm: float = 0.0  # 0 disables; recurrent training needs it
    seed: int = 0
    model_config: object = None  # architecture config override
    eval_each_epoch: bool = False


def default_train_config(architecture: str, seed: int = 0) -> TrainConfig:
    if architecture == "conv3d":
        return TrainConfig(epochs=15, learning_rate=2e-3, optimizer="adam", seed=seed)
    if architecture == "convlstm":
        return TrainConfig(
            epochs=14, learning_rate=0.02, optimizer="sgd", momentum=0.2, clip_norm=5.0, seed=seed
        )
    raise ValueError(f"unknown architecture {architecture!r}")


def clip_gradients(grads: dict[str, np.ndarray], max_norm: float) -> dict[str, np.ndarray]:
    """Scale the whole gradient set so its global L2 norm is <= max_norm."""
    total = math.sqrt(sum(float(np.sum(g.astype(np.float64) ** 2)) for g in grads.values()))
    if total <= max_norm or total == 0.0:
        return grads
    scale = max_norm / total
    return {name: g * g.dtype.type(scale) for name, g in grads.items()}


@dataclass
class TrainReport:
    val_accuracy: float
    final_train_loss: float
    epochs: int
    epoch_losses: list = field(default_factory=list)


def accuracy(net, records) -> float:
    if not records:
        return 0.0
    hits = sum(1 for rec in records if net.predict(rec.clip) == rec.label_index)
    return hits / len(records)


def train(architecture: str, dataset: Dataset, config: TrainConfig | None = None):
    """Train a fresh model; returns (net, TrainReport)."""
    config = config or default_train_config(architecture)
    if len(dataset.classes) < 2:
        raise ValueError("training needs at least 2 classes")
    if not dataset.train or not dataset.val:
        raise ValueError("training needs non-empty train and val splits")
    rng = np.random.default_rng(config.seed)
    model_config = config.model_config or config_for_dataset(architecture, dataset)
    net = initialize_net(architecture, model_config, seed=int(rng.integers(0, 2**31 - 1)))

    params = net.param_arrays()
    if config.optimizer == "adam":
        opt = Adam(params, config.learning_rate)
    elif config.optimizer == "sgd":
        opt = MomentumSGD(params, config.learning_rate, config.momentum)
    else:
        raise ValueError(f"unknown optimizer {config.optimizer!r}")

    report = TrainReport(val_accuracy=0.0, final_train_loss=float("nan"), epochs=config.epochs)
    n = len(dataset.train)
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for step, idx in enumerate(order):
            rec = dataset.train[idx]
            tape = Tape()
            result = net.forward(tape, Tensor(rec.clip), train=True)
            loss = ops.softmax_cross_entropy(tape, result.logits, rec.label_index)
            loss_val = float(loss.data)
            if not np.isfinite(loss_val):
                raise TrainingDiverged(epoch, step, loss_val)
            epoch_loss += loss_val
            grads = backward(tape, loss)
            named = {
                name: grads[tensor] for name, tensor in net.params.items() if tensor in grads
            }
            if config.clip_norm > 0.0:
                named = clip_gradients(named, config.clip_norm)
            opt.step(named)
        report.epoch_losses.append(epoch_loss / n)
        if config.eval_each_epoch:
            report.val_accuracy = accuracy(net, dataset.val)
    report.final_train_loss = report.epoch_losses[-1] if report.epoch_losses else float("nan")
    report.val_accuracy = accuracy(net, dataset.val)
    return net, report
