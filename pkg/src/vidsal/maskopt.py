"""Gradient-learned temporal masks.

The mask is a per-frame real vector pushed through a sigmoid into [0,1].
Its loss combines an L1 penalty on the activation (short masks), a
total-variation penalty |m[t+1] - m[t]|**beta (contiguous masks) and the
model's softmax score for the target class on the freeze-perturbed clip,
so gradient descent darkens exactly the frames whose motion props up the
class score. ADAM runs a fixed number of iterations on the pre-sigmoid
vector; the converged activation is thresholded for reporting and for the
reverse perturbation.

Initialization puts an active plateau on the central third of the frames
and an inactive floor elsewhere. The floor sits close below the activation
threshold on the sigmoid axis: with the default step budget (300
iterations at learning rate 1e-3, so roughly +-0.3 of total pre-sigmoid
movement) frames outside the seed can still cross the threshold when the
class score consistently favors them, which is what lets the mask grow
toward off-center events.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import ops
from .models import _VideoNet
from .optim import Adam
from .perturb import apply_freeze, apply_reverse, freeze_on_tape
from .tensor import Tape, Tensor, backward


class MaskOptDiverged(RuntimeError):
    def __init__(self, iteration: int):
        super().__init__(f"non-finite mask loss at iteration {iteration}")
        self.iteration = iteration


@dataclass(frozen=True)
class MaskOptConfig:
    lambda1: float = 0.01  # L1 weight
    lambda2: float = 0.02  # total-variation weight
    beta: float = 3.0  # total-variation exponent
    learning_rate: float = 0.001
    iterations: int = 300
    threshold: float = 0.1  # shared by reporting and the reverse operator
    init_high: float = 1.5  # pre-sigmoid seed on the central third
    init_low: float = -2.4  # pre-sigmoid seed elsewhere

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("penalty weights must be >= 0")
        if self.beta < 1:
            raise ValueError("total-variation exponent must be >= 1")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if not 0.0 < self.threshold < 1.0:
            raise ValueError("threshold must lie in (0, 1)")


@dataclass
class MaskResult:
    mask: np.ndarray  # converged activation in [0,1], length T
    thresholded: np.ndarray  # boolean, mask > threshold
    original_score: float  # OS: clean-clip score of the target class
    freeze_score: float  # FS: score on the freeze-perturbed clip
    reverse_score: float  # RS: score on the reverse-perturbed clip
    loss_trace: list = field(default_factory=list)
    target_class: int = 0
    predicted_class: int = 0
    true_class: int | None = None

    def to_dict(self) -> dict:
        return {
            "mask": [float(v) for v in self.mask],
            "thresholded": [bool(v) for v in self.thresholded],
            "os": self.original_score,
            "fs": self.freeze_score,
            "rs": self.reverse_score,
            "loss_trace": [float(v) for v in self.loss_trace],
            "target_class": self.target_class,
            "predicted_class": self.predicted_class,
            "true_class": self.true_class,
        }

    @staticmethod
    def from_dict(raw: dict) -> "MaskResult":
        return MaskResult(
            mask=np.asarray(raw["mask"], dtype=np.float32),
            thresholded=np.asarray(raw["thresholded"], dtype=bool),
            original_score=raw["os"],
            freeze_score=raw["fs"],
            reverse_score=raw["rs"],
            loss_trace=list(raw["loss_trace"]),
            target_class=raw["target_class"],
            predicted_class=raw["predicted_class"],
            true_class=raw.get("true_class"),
        )


def threshold_mask(mask_activation: np.ndarray, threshold: float = 0.1) -> np.ndarray:
    """Boolean active-frame vector: activation strictly above threshold."""
    return np.asarray(mask_activation) > threshold


def initial_pre_sigmoid(frames: int, config: MaskOptConfig, dtype=np.float32) -> np.ndarray:
    third = frames // 3
    pre = np.full(frames, config.init_low, dtype=dtype)
    pre[third : frames - third] = config.init_high
    return pre


def mask_loss(
    tape: Tape | None,
    mask_activation: Tensor,
    clip: Tensor,
    net: _VideoNet,
    class_index: int,
    config: MaskOptConfig,
) -> Tensor:
    """lambda1 * sum|m| + lambda2 * sum|m[t+1]-m[t]|**beta + score_c(freeze(clip, m))."""
    t_frames = mask_activation.shape[0]
    l1 = ops.sum_(tape, ops.absolute(tape, mask_activation))
    diffs = ops.sub(
        tape,
        ops.slice_axis(tape, mask_activation, 0, 1, t_frames),
        ops.slice_axis(tape, mask_activation, 0, 0, t_frames - 1),
    )
    tv = ops.sum_(tape, ops.pow_scalar(tape, ops.absolute(tape, diffs), config.beta))
    frozen = freeze_on_tape(tape, clip, mask_activation)
    scores = net.forward(tape, frozen).scores
    score_c = ops.pick(tape, scores, class_index)
    penalties = ops.add(
        tape, ops.mul_scalar(tape, l1, config.lambda1), ops.mul_scalar(tape, tv, config.lambda2)
    )
    return ops.add(tape, penalties, score_c)


def optimize_mask(
    net: _VideoNet,
    clip: np.ndarray,
    class_index: int | None = None,
    config: MaskOptConfig | None = None,
    true_class: int | None = None,
) -> MaskResult:
    """Learn a temporal mask for one clip.

    The target class defaults to the model's prediction on the clean clip.
    OS is the clean score, FS the score under the continuous converged
    freeze mask, RS the score under the thresholded reverse perturbation.
    Fully deterministic for a given net, clip and config.
    """
    config = config or MaskOptConfig()
    if clip.shape[0] < 2:
        raise ValueError("mask optimization needs at least 2 frames")
    clean_scores = net.scores(clip)
    predicted = int(np.argmax(clean_scores))
    target = predicted if class_index is None else int(class_index)
    if not 0 <= target < net.num_classes:
        raise ValueError(f"class index {target} out of range for {net.num_classes} classes")

    frozen_net = net.frozen_view()
    pre = initial_pre_sigmoid(clip.shape[0], config, dtype=net.param_dtype)
    opt = Adam({"pre": pre}, config.learning_rate)
    clip_t = Tensor(clip, dtype=net.param_dtype)
    trace: list[float] = []
    for iteration in range(config.iterations):
        tape = Tape()
        pre_t = Tensor(pre, requires_grad=True)
        activation = ops.sigmoid(tape, pre_t)
        loss = mask_loss(tape, activation, clip_t, frozen_net, target, config)
        loss_val = float(loss.data)
        if not np.isfinite(loss_val):
            raise MaskOptDiverged(iteration)
        trace.append(loss_val)
        grads = backward(tape, loss)
        opt.step({"pre": grads[pre_t]})

    mask = ops.sigmoid(None, Tensor(pre, dtype=pre.dtype)).data
    active = threshold_mask(mask, config.threshold)
    freeze_score = float(net.scores(apply_freeze(clip, mask))[target])
    reverse_score = float(net.scores(apply_reverse(clip, mask, config.threshold))[target])
    return MaskResult(
        mask=mask,
        thresholded=active,
        original_score=float(clean_scores[target]),
        freeze_score=freeze_score,
        reverse_score=reverse_score,
        loss_trace=trace,
        target_class=target,
        predicted_class=predicted,
        true_class=true_class,
    )
