"""Dense float tensors plus a recorded-operation tape for reverse-mode gradients.

The engine is deliberately small: tensors wrap a numpy array, every
differentiable operation appends one record to a tape during the forward
pass, and ``backward`` walks the tape once in reverse. Tapes are rebuilt
per forward pass; there is no graph reuse and no broadcasting beyond the
trailing-axis case the ops module allows.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

DEFAULT_DTYPE = np.float32

VTEN_MAGIC = b"VTEN"
_VTEN_MAX_RANK = 8


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible with an operation."""


class Tensor:
    """A dense float array, optionally tracked for gradients.

    ``data`` is stored row-major. Tensors are treated as immutable once
    created; ops allocate fresh outputs instead of writing in place.
    """

    __slots__ = ("data", "requires_grad")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=DEFAULT_DTYPE if dtype is None else dtype)
        if not np.all(np.isfinite(arr)):
            raise ValueError("tensor contains non-finite values")
        self.data = arr
        self.requires_grad = bool(requires_grad)

    @classmethod
    def _wrap(cls, data: np.ndarray, requires_grad: bool) -> "Tensor":
        """Internal fast path for op outputs; ops guarantee finiteness on
        finite inputs (covered by property tests), so the constructor's
        finite check is skipped."""
        out = object.__new__(cls)
        out.data = data
        out.requires_grad = requires_grad
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype.name}, requires_grad={self.requires_grad})"


@dataclass
class _Record:
    __slots__ = ("inputs", "output", "backward_fn")
    inputs: tuple
    output: Tensor
    backward_fn: Callable[[np.ndarray], Sequence]


class Tape:
    """Ordered log of executed operations.

    Records are appended in execution order, so every record's inputs were
    produced by earlier records (or are leaves); a single reverse sweep
    therefore visits each node exactly once.
    """

    def __init__(self):
        self._records: list[_Record] = []

    def record(self, inputs: tuple, output: Tensor, backward_fn) -> None:
        self._records.append(_Record(inputs, output, backward_fn))

    def __len__(self) -> int:
        return len(self._records)


class GradientStore(dict):
    """Map from tensor to its gradient array. A missing entry means zero."""

    def wrt(self, tensor: Tensor):
        return self.get(tensor)


def backward(tape: Tape, output: Tensor) -> GradientStore:
    """Accumulate gradients of a scalar ``output`` with respect to every
    requires_grad tensor reachable from it on ``tape``.

    The sweep is a plain reverse iteration over the tape, which is valid
    because records are stored in topological (execution) order. Running
    it twice on the same tape gives bit-identical results; nothing is
    mutated.
    """
    if output.data.size != 1:
        raise ShapeError(f"backward requires a scalar output, got shape {output.data.shape}")
    grads: dict[Tensor, np.ndarray] = {output: np.ones(output.data.shape, dtype=output.data.dtype)}
    for rec in reversed(tape._records):
        g_out = grads.get(rec.output)
        if g_out is None:
            continue
        in_grads = rec.backward_fn(g_out)
        for tensor, grad in zip(rec.inputs, in_grads):
            if grad is None:
                continue
            acc = grads.get(tensor)
            if acc is None:
                grads[tensor] = grad
            else:
                grads[tensor] = acc + grad
    return GradientStore((t, g) for t, g in grads.items() if t.requires_grad)


def write_vten(path, array: np.ndarray) -> None:
    """Write an array as a VTEN file.

    Layout: magic ``VTEN``, u8 rank, rank little-endian u32 extents, then
    the float32 little-endian payload in row-major order.
    """
    arr = np.ascontiguousarray(array, dtype=np.float32)
    if arr.ndim > _VTEN_MAX_RANK:
        raise ValueError(f"rank {arr.ndim} exceeds VTEN maximum {_VTEN_MAX_RANK}")
    with open(path, "wb") as fh:
        fh.write(VTEN_MAGIC)
        fh.write(struct.pack("<B", arr.ndim))
        for extent in arr.shape:
            fh.write(struct.pack("<I", extent))
        fh.write(arr.astype("<f4", copy=False).tobytes())


def read_vten(path) -> np.ndarray:
    """Read a VTEN file back into a float32 array."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != VTEN_MAGIC:
        raise ValueError(f"{path}: bad magic {blob[:4]!r}, expected {VTEN_MAGIC!r}")
    if len(blob) < 5:
        raise ValueError(f"{path}: truncated header")
    rank = blob[4]
    if rank > _VTEN_MAX_RANK:
        raise ValueError(f"{path}: rank {rank} exceeds maximum {_VTEN_MAX_RANK}")
    header_end = 5 + 4 * rank
    if len(blob) < header_end:
        raise ValueError(f"{path}: truncated extent table")
    shape = struct.unpack(f"<{rank}I", blob[5:header_end]) if rank else ()
    count = int(np.prod(shape, dtype=np.int64)) if rank else 1
    payload = blob[header_end:]
    if len(payload) != 4 * count:
        raise ValueError(f"{path}: payload holds {len(payload) // 4} floats, shape {shape} needs {count}")
    return np.frombuffer(payload, dtype="<f4").reshape(shape).astype(np.float32)
