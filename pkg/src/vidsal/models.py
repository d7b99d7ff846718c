"""Two small video classifiers exposing class scores, saliency-target
activations and input gradients.

* ``Conv3DNet``: stacked strided 3-D convolutions with ReLU, global average
  pooling and a dense softmax head. Temporal strides are chosen so the last
  conv layer keeps at least half the input frames, which is what makes its
  activations usable as a per-timestep saliency target.
* ``ConvLSTMNet``: stacked convolutional LSTM layers (gates are strided
  convolutions over the input plus same-size convolutions over the hidden
  map), each followed by per-channel normalization and spatial max pooling.
  The final layer's full hidden sequence is the saliency target; the
  classification head reads the last hidden state.

Checkpoints are a JSON manifest plus one VTEN file per parameter and
buffer, and round-trip bit-exactly.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import ops
from .tensor import ShapeError, Tape, Tensor, read_vten, write_vten


def _conv_extent(size: int, kernel: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - kernel) // stride + 1


@dataclass(frozen=True)
class Conv3DNetConfig:
    frames: int = 16
    height: int = 32
    width: int = 32
    channels: int = 1
    num_classes: int = 8
    kernels: tuple = ((3, 5, 5), (3, 3, 3), (3, 3, 3))
    filters: tuple = (8, 16, 32)
    strides: tuple = ((1, 2, 2), (1, 2, 2), (2, 1, 1))
    paddings: tuple = ((1, 2, 2), (1, 1, 1), (1, 1, 1))
    pools: tuple = (None, None, None)  # optional maxpool window per layer

    def layer_shapes(self) -> list[tuple[int, int, int]]:
        """(T, H, W) after each conv (+ optional pool) layer."""
        t, h, w = self.frames, self.height, self.width
        shapes = []
        for k, s, p, pool in zip(self.kernels, self.strides, self.paddings, self.pools):
            t = _conv_extent(t, k[0], s[0], p[0])
            h = _conv_extent(h, k[1], s[1], p[1])
            w = _conv_extent(w, k[2], s[2], p[2])
            if pool is not None:
                t, h, w = (t // pool[0], h // pool[1], w // pool[2])
            shapes.append((t, h, w))
        return shapes

    @property
    def activation_frames(self) -> int:
        return self.layer_shapes()[-1][0]


@dataclass(frozen=True)
class ConvLSTMNetConfig:
    frames: int = 16
    height: int = 32
    width: int = 32
    channels: int = 1
    num_classes: int = 8
    filters: tuple = (16, 16)
    kernel: int = 5
    stride: int = 2
    pool: int = 2
    bn_momentum: float = 0.9
    bn_eps: float = 1e-5

    def layer_shapes(self) -> list[tuple[int, int]]:
        """(H, W) of each layer's hidden maps (before its pooling)."""
        h, w = self.height, self.width
        pad = self.kernel // 2
        shapes = []
        for _ in self.filters:
            h = _conv_extent(h, self.kernel, self.stride, pad)
            w = _conv_extent(w, self.kernel, self.stride, pad)
            shapes.append((h, w))
            h, w = h // self.pool, w // self.pool
        return shapes


@dataclass
class ForwardResult:
    scores: Tensor  # softmax over classes
    logits: Tensor
    activations: Tensor  # saliency target, [T', H', W', K]


@dataclass
class ConvLSTMState:
    """Hidden and cell maps of one layer, both [H', W', F]."""

    hidden: Tensor
    cell: Tensor


def _gates_to_state(tape, pre_gates: Tensor, state: ConvLSTMState, filters: int) -> ConvLSTMState:
    """Shared gate arithmetic: pre_gates is the [H',W',4F] pre-activation,
    packed (input, forget, candidate, output) along the channel axis."""
    cell = ops.lstm_cell_update(tape, pre_gates, state.cell)
    hidden = ops.lstm_hidden_out(tape, pre_gates, cell)
    return ConvLSTMState(hidden=hidden, cell=cell)


def convlstm_step(
    tape,
    x: Tensor,
    state: ConvLSTMState,
    w_x: Tensor,
    w_h: Tensor,
    bias: Tensor,
    stride: int = 2,
) -> ConvLSTMState:
    """One recurrent step: gates = conv(x) + conv(h) + bias.

    ``w_x`` is [k,k,Cin,4F] applied with the layer stride; ``w_h`` is
    [k,k,F,4F] applied stride 1 with same padding so the hidden extent is
    preserved.
    """
    filters = state.hidden.shape[-1]
    if w_h.shape[-1] != 4 * filters or w_x.shape[-1] != 4 * filters:
        raise ShapeError(f"gate kernels must pack 4*{filters} channels, got {w_x.shape} / {w_h.shape}")
    pad = w_x.shape[0] // 2
    from_x = ops.conv2d(tape, x, w_x, stride=(stride, stride), padding=(pad, pad))
    if from_x.shape[:2] != state.hidden.shape[:2]:
        raise ShapeError(
            f"input {x.shape} maps to {from_x.shape[:2]} under stride {stride}, "
            f"but state extent is {state.hidden.shape[:2]}"
        )
    from_h = ops.conv2d(tape, state.hidden, w_h, stride=(1, 1), padding=(w_h.shape[0] // 2,) * 2)
    pre = ops.add(tape, ops.add(tape, from_x, from_h), bias)
    return _gates_to_state(tape, pre, state, filters)


def _batchnorm(tape, x: Tensor, gamma: Tensor, beta: Tensor, mean_buf: np.ndarray,
               var_buf: np.ndarray, train: bool, momentum: float, eps: float) -> Tensor:
    """Per-channel normalization over all leading axes of [..., C]."""
    axes = tuple(range(x.data.ndim - 1))
    if train:
        mu = ops.mean(tape, x, axis=axes)
        centered = ops.sub(tape, x, mu)
        var = ops.mean(tape, ops.mul(tape, centered, centered), axis=axes)
        mean_buf *= momentum
        mean_buf += (1.0 - momentum) * mu.data
        var_buf *= momentum
        var_buf += (1.0 - momentum) * var.data
    else:
        centered = ops.sub(tape, x, Tensor(mean_buf, dtype=x.dtype))
        var = Tensor(var_buf, dtype=x.dtype)
    std = ops.sqrt(tape, ops.add_scalar(tape, var, eps))
    return ops.add(tape, ops.mul(tape, ops.div(tape, centered, std), gamma), beta)


class _VideoNet:
    """Shared surface of the two classifiers."""

    architecture = ""

    def __init__(self, config, params: dict[str, Tensor], buffers: dict[str, np.ndarray] | None = None):
        self.config = config
        self.params = params
        self.buffers = buffers or {}

    @property
    def num_classes(self) -> int:
        return self.config.num_classes

    def _check_clip(self, clip: Tensor) -> None:
        cfg = self.config
        expect = (cfg.frames, cfg.height, cfg.width, cfg.channels)
        if clip.shape != expect:
            raise ShapeError(f"clip shape {clip.shape} does not match configured {expect}")

    def forward(self, tape, clip: Tensor, train: bool = False) -> ForwardResult:
        raise NotImplementedError

    @property
    def param_dtype(self):
        return next(iter(self.params.values())).data.dtype

    def scores(self, clip: np.ndarray) -> np.ndarray:
        """Softmax class scores of a raw clip, no gradient tracking."""
        return self.forward(None, Tensor(clip, dtype=self.param_dtype)).scores.data

    def predict(self, clip: np.ndarray) -> int:
        return int(np.argmax(self.scores(clip)))

    def param_arrays(self) -> dict[str, np.ndarray]:
        return {name: t.data for name, t in self.params.items()}

    def frame_coverage(self) -> tuple[tuple[int, ...], ...]:
        """Input frames covered by each saliency timestep; a partition of
        the input frames in order."""
        t_in = self.config.frames
        t_act = self.activation_frames
        cover = [[] for _ in range(t_act)]
        for t in range(t_in):
            cover[min(t * t_act // t_in, t_act - 1)].append(t)
        return tuple(tuple(c) for c in cover)

    def astype(self, dtype) -> "_VideoNet":
        """Copy with parameters and buffers cast (float64 for grad checks)."""
        params = {
            k: Tensor(v.data.astype(dtype), requires_grad=v.requires_grad, dtype=dtype)
            for k, v in self.params.items()
        }
        buffers = {k: v.astype(dtype) for k, v in self.buffers.items()}
        return type(self)(self.config, params, buffers)

    def frozen_view(self) -> "_VideoNet":
        """Same arrays with gradient tracking off for every parameter.

        Input-gradient consumers (the mask optimizer) use this so backward
        skips all parameter-gradient work.
        """
        params = {k: Tensor._wrap(v.data, False) for k, v in self.params.items()}
        return type(self)(self.config, params, self.buffers)


class Conv3DNet(_VideoNet):
    architecture = "conv3d"

    @property
    def activation_frames(self) -> int:
        return self.config.activation_frames

    @classmethod
    def initialize(cls, config: Conv3DNetConfig, seed: int = 0) -> "Conv3DNet":
        rng = np.random.default_rng(seed)
        params: dict[str, Tensor] = {}
        cin = config.channels
        for i, (k, cout) in enumerate(zip(config.kernels, config.filters)):
            fan_in = k[0] * k[1] * k[2] * cin
            kernel = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(*k, cin, cout))
            params[f"conv{i}.kernel"] = Tensor(kernel, requires_grad=True)
            params[f"conv{i}.bias"] = Tensor(np.zeros(cout), requires_grad=True)
            cin = cout
        feat = config.filters[-1]
        head = rng.normal(0.0, np.sqrt(1.0 / feat), size=(feat, config.num_classes))
        params["head.weight"] = Tensor(head, requires_grad=True)
        params["head.bias"] = Tensor(np.zeros(config.num_classes), requires_grad=True)
        return cls(config, params)

    def forward(self, tape, clip: Tensor, train: bool = False) -> ForwardResult:
        self._check_clip(clip)
        cfg = self.config
        x = clip
        for i in range(len(cfg.kernels)):
            x = ops.conv3d(tape, x, self.params[f"conv{i}.kernel"], cfg.strides[i], cfg.paddings[i])
            x = ops.add(tape, x, self.params[f"conv{i}.bias"])
            x = ops.relu(tape, x)
            if cfg.pools[i] is not None:
                x = ops.maxpool3d(tape, x, cfg.pools[i])
        activations = x
        pooled = ops.mean(tape, x, axis=(0, 1, 2))  # [filters]
        row = ops.reshape(tape, pooled, (1, x.shape[-1]))
        logits2d = ops.add(tape, ops.matmul(tape, row, self.params["head.weight"]), self.params["head.bias"])
        logits = ops.reshape(tape, logits2d, (cfg.num_classes,))
        return ForwardResult(scores=ops.softmax(tape, logits), logits=logits, activations=activations)


class ConvLSTMNet(_VideoNet):
    architecture = "convlstm"

    @property
    def activation_frames(self) -> int:
        return self.config.frames

    @classmethod
    def initialize(cls, config: ConvLSTMNetConfig, seed: int = 0) -> "ConvLSTMNet":
        rng = np.random.default_rng(seed)
        params: dict[str, Tensor] = {}
        buffers: dict[str, np.ndarray] = {}
        k = config.kernel
        cin = config.channels
        for i, f in enumerate(config.filters):
            w_x = rng.normal(0.0, np.sqrt(2.0 / (k * k * cin)), size=(k, k, cin, 4 * f))
            w_h = rng.normal(0.0, np.sqrt(2.0 / (k * k * f)), size=(k, k, f, 4 * f))
            bias = np.zeros(4 * f)
            bias[f : 2 * f] = 1.0  # open forget gates at the start of training
            params[f"lstm{i}.w_x"] = Tensor(w_x, requires_grad=True)
            params[f"lstm{i}.w_h"] = Tensor(w_h, requires_grad=True)
            params[f"lstm{i}.bias"] = Tensor(bias, requires_grad=True)
            params[f"norm{i}.gamma"] = Tensor(np.ones(f), requires_grad=True)
            params[f"norm{i}.beta"] = Tensor(np.zeros(f), requires_grad=True)
            buffers[f"norm{i}.mean"] = np.zeros(f, dtype=np.float32)
            buffers[f"norm{i}.var"] = np.ones(f, dtype=np.float32)
            cin = f
        h, w = config.layer_shapes()[-1]
        h, w = h // config.pool, w // config.pool
        flat = h * w * config.filters[-1]
        head = rng.normal(0.0, np.sqrt(1.0 / flat), size=(flat, config.num_classes))
        params["head.weight"] = Tensor(head, requires_grad=True)
        params["head.bias"] = Tensor(np.zeros(config.num_classes), requires_grad=True)
        return cls(config, params, buffers)

    def forward(self, tape, clip: Tensor, train: bool = False) -> ForwardResult:
        self._check_clip(clip)
        cfg = self.config
        t_frames = cfg.frames
        pad = cfg.kernel // 2
        seq = clip
        activations = None
        for i, f in enumerate(cfg.filters):
            w_x = self.params[f"lstm{i}.w_x"]
            w_h = self.params[f"lstm{i}.w_h"]
            bias = self.params[f"lstm{i}.bias"]
            # input contributions for every timestep in one strided conv
            k5 = ops.reshape(tape, w_x, (1,) + w_x.shape)
            from_x = ops.conv3d(tape, seq, k5, stride=(1, cfg.stride, cfg.stride), padding=(0, pad, pad))
            hh, ww = from_x.shape[1], from_x.shape[2]
            state = ConvLSTMState(
                hidden=Tensor(np.zeros((hh, ww, f)), dtype=clip.dtype),
                cell=Tensor(np.zeros((hh, ww, f)), dtype=clip.dtype),
            )
            steps = []
            for t in range(t_frames):
                x_t = ops.reshape(tape, ops.slice_axis(tape, from_x, 0, t, t + 1), (hh, ww, 4 * f))
                from_h = ops.conv2d(tape, state.hidden, w_h, stride=(1, 1), padding=(pad, pad))
                pre = ops.add(tape, ops.add(tape, x_t, from_h), bias)
                state = _gates_to_state(tape, pre, state, f)
                steps.append(state.hidden)
            hseq = ops.stack(tape, steps, axis=0)  # [T, hh, ww, f]
            if i == len(cfg.filters) - 1:
                activations = hseq
            normed = _batchnorm(
                tape,
                hseq,
                self.params[f"norm{i}.gamma"],
                self.params[f"norm{i}.beta"],
                self.buffers[f"norm{i}.mean"],
                self.buffers[f"norm{i}.var"],
                train,
                cfg.bn_momentum,
                cfg.bn_eps,
            )
            seq = ops.maxpool3d(tape, normed, (1, cfg.pool, cfg.pool))
        last = ops.slice_axis(tape, seq, 0, t_frames - 1, t_frames)
        flat = int(np.prod(last.shape))
        row = ops.reshape(tape, last, (1, flat))
        logits2d = ops.add(tape, ops.matmul(tape, row, self.params["head.weight"]), self.params["head.bias"])
        logits = ops.reshape(tape, logits2d, (cfg.num_classes,))
        return ForwardResult(scores=ops.softmax(tape, logits), logits=logits, activations=activations)


_ARCHITECTURES = {
    "conv3d": (Conv3DNetConfig, Conv3DNet),
    "convlstm": (ConvLSTMNetConfig, ConvLSTMNet),
}


def _tuplify(value):
    if isinstance(value, list):
        return tuple(_tuplify(v) for v in value)
    return value


def config_from_dict(architecture: str, raw: dict):
    cls = _ARCHITECTURES[architecture][0]
    return cls(**{k: _tuplify(v) for k, v in raw.items()})


def build_net(architecture: str, config, params: dict[str, Tensor], buffers=None):
    return _ARCHITECTURES[architecture][1](config, params, buffers)


def initialize_net(architecture: str, config=None, seed: int = 0):
    cfg_cls, net_cls = _ARCHITECTURES[architecture]
    return net_cls.initialize(config or cfg_cls(), seed=seed)


@dataclass
class ModelCheckpoint:
    architecture: str
    config: dict
    seed: int
    metrics: dict

    @staticmethod
    def save(net: _VideoNet, seed: int, metrics: dict, out_dir) -> None:
        out = Path(out_dir)
        (out / "params").mkdir(parents=True, exist_ok=True)
        param_files = {}
        for name, tensor in net.params.items():
            rel = f"params/{name}.vten"
            write_vten(out / rel, tensor.data)
            param_files[name] = rel
        buffer_files = {}
        for name, arr in net.buffers.items():
            rel = f"params/{name}.buf.vten"
            write_vten(out / rel, arr)
            buffer_files[name] = rel
        manifest = {
            "architecture": net.architecture,
            "config": asdict(net.config),
            "seed": seed,
            "metrics": metrics,
            "params": param_files,
            "buffers": buffer_files,
        }
        (out / "checkpoint.json").write_text(json.dumps(manifest, indent=2) + "\n")

    @staticmethod
    def load(in_dir) -> tuple["_VideoNet", "ModelCheckpoint"]:
        root = Path(in_dir)
        manifest_path = root / "checkpoint.json"
        if not manifest_path.exists():
            raise FileNotFoundError(f"no checkpoint manifest at {manifest_path}")
        manifest = json.loads(manifest_path.read_text())
        arch = manifest["architecture"]
        if arch not in _ARCHITECTURES:
            raise ValueError(f"unknown architecture {arch!r}")
        config = config_from_dict(arch, manifest["config"])
        params = {
            name: Tensor(read_vten(root / rel), requires_grad=True)
            for name, rel in manifest["params"].items()
        }
        buffers = {name: read_vten(root / rel) for name, rel in manifest["buffers"].items()}
        net = build_net(arch, config, params, buffers)
        ckpt = ModelCheckpoint(
            architecture=arch, config=manifest["config"], seed=manifest["seed"], metrics=manifest["metrics"]
        )
        return net, ckpt
