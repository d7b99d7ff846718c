"""Differentiable operations over :class:`~vidsal.tensor.Tensor`.

Every op takes the active tape as its first argument (``None`` disables
recording for pure inference), computes the forward value eagerly and, if
any input is tracked, registers a backward rule on the tape.

Conventions baked in here:

* convolution is cross-correlation (no kernel flip),
* reductions accumulate in float64 and cast back to the storage dtype,
* maxpool ties go to the first element in row-major window order,
* broadcasting is limited to a trailing-shape operand (bias-style) or a
  scalar operand; anything else is a shape error.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import as_strided

from .tensor import ShapeError, Tape, Tensor


def _result(tape: Tape | None, inputs: tuple, data: np.ndarray, backward_fn) -> Tensor:
    out = Tensor._wrap(np.asarray(data), any(t.requires_grad for t in inputs))
    if tape is not None and out.requires_grad:
        tape.record(inputs, out, backward_fn)
    return out


def _check_dtypes(*tensors: Tensor) -> None:
    dtypes = {t.data.dtype for t in tensors}
    if len(dtypes) > 1:
        raise ShapeError(f"mixed dtypes {sorted(d.name for d in dtypes)}")


def _check_trailing(a: Tensor, b: Tensor, op: str) -> None:
    """Allow equal shapes, a scalar second operand, or b == trailing shape of a."""
    if a.shape == b.shape or b.data.ndim == 0:
        return
    if b.data.ndim <= a.data.ndim and a.shape[a.data.ndim - b.data.ndim:] == b.shape:
        return
    raise ShapeError(f"{op}: shape {b.shape} does not align with trailing axes of {a.shape}")


def _reduce_to(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to the operand's shape."""
    if grad.shape == shape:
        return grad
    lead = grad.ndim - len(shape)
    return grad.sum(axis=tuple(range(lead)), dtype=np.float64).astype(grad.dtype)


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(tape, a: Tensor, b: Tensor) -> Tensor:
    _check_dtypes(a, b)
    _check_trailing(a, b, "add")
    data = a.data + b.data

    def backward_fn(g):
        return g, _reduce_to(g, b.data.shape)

    return _result(tape, (a, b), data, backward_fn)


def neg(tape, a: Tensor) -> Tensor:
    return _result(tape, (a,), -a.data, lambda g: (-g,))


def sub(tape, a: Tensor, b: Tensor) -> Tensor:
    return add(tape, a, neg(tape, b))


def mul(tape, a: Tensor, b: Tensor) -> Tensor:
    _check_dtypes(a, b)
    _check_trailing(a, b, "mul")
    ad, bd = a.data, b.data
    data = ad * bd

    def backward_fn(g):
        return g * bd, _reduce_to(g * ad, bd.shape)

    return _result(tape, (a, b), data, backward_fn)


def div(tape, a: Tensor, b: Tensor) -> Tensor:
    _check_dtypes(a, b)
    _check_trailing(a, b, "div")
    ad, bd = a.data, b.data
    data = ad / bd

    def backward_fn(g):
        return g / bd, _reduce_to(-g * ad / (bd * bd), bd.shape)

    return _result(tape, (a, b), data, backward_fn)


def add_scalar(tape, a: Tensor, value: float) -> Tensor:
    data = a.data + a.data.dtype.type(value)
    return _result(tape, (a,), data, lambda g: (g,))


def mul_scalar(tape, a: Tensor, value: float) -> Tensor:
    c = a.data.dtype.type(value)
    data = a.data * c
    return _result(tape, (a,), data, lambda g: (g * c,))


# ---------------------------------------------------------------------------
# nonlinearities


def sigmoid(tape, a: Tensor) -> Tensor:
    # sigmoid(x) = (tanh(x/2) + 1) / 2: one overflow-free ufunc pass
    x = a.data
    out = np.tanh(x * x.dtype.type(0.5))
    out += 1.0
    out *= 0.5

    def backward_fn(g):
        return (g * out * (1.0 - out),)

    return _result(tape, (a,), out, backward_fn)


def tanh(tape, a: Tensor) -> Tensor:
    out = np.tanh(a.data)

    def backward_fn(g):
        return (g * (1.0 - out * out),)

    return _result(tape, (a,), out, backward_fn)


def relu(tape, a: Tensor) -> Tensor:
    x = a.data
    out = np.maximum(x, 0)

    def backward_fn(g):
        return (g * (x > 0),)

    return _result(tape, (a,), out, backward_fn)


def sqrt(tape, a: Tensor) -> Tensor:
    out = np.sqrt(a.data)

    def backward_fn(g):
        return (g * (0.5 / out),)

    return _result(tape, (a,), out, backward_fn)


def absolute(tape, a: Tensor) -> Tensor:
    x = a.data
    out = np.abs(x)

    def backward_fn(g):
        return (g * np.sign(x),)

    return _result(tape, (a,), out, backward_fn)


def pow_scalar(tape, a: Tensor, exponent: float) -> Tensor:
    """Elementwise power with a fixed exponent >= 1, defined for x >= 0.

    The gradient at x == 0 is taken as 0 for exponent > 1 (the one-sided
    derivative), which keeps total-variation terms well behaved.
    """
    if exponent < 1:
        raise ValueError(f"exponent must be >= 1, got {exponent}")
    x = a.data
    if np.any(x < 0):
        raise ValueError("pow_scalar requires non-negative inputs")
    out = np.power(x, x.dtype.type(exponent))

    def backward_fn(g):
        if exponent == 1:
            return (g.copy(),)
        d = exponent * np.power(x, x.dtype.type(exponent - 1))
        return (g * d,)

    return _result(tape, (a,), out, backward_fn)


# ---------------------------------------------------------------------------
# reductions


def _as_axis_tuple(axis, ndim) -> tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        return (axis % ndim,)
    return tuple(ax % ndim for ax in axis)


def sum_(tape, a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _as_axis_tuple(axis, a.data.ndim)
    data = a.data.sum(axis=axes, dtype=np.float64, keepdims=keepdims).astype(a.data.dtype)
    shape = a.data.shape
    kept = tuple(1 if i in axes else n for i, n in enumerate(shape))

    def backward_fn(g):
        return (np.broadcast_to(g.reshape(kept), shape).astype(g.dtype, copy=True),)

    return _result(tape, (a,), data, backward_fn)


def mean(tape, a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _as_axis_tuple(axis, a.data.ndim)
    count = int(np.prod([a.data.shape[i] for i in axes]))
    data = (a.data.sum(axis=axes, dtype=np.float64, keepdims=keepdims) / count).astype(a.data.dtype)
    shape = a.data.shape
    kept = tuple(1 if i in axes else n for i, n in enumerate(shape))

    def backward_fn(g):
        return (np.broadcast_to((g / g.dtype.type(count)).reshape(kept), shape).astype(g.dtype, copy=True),)

    return _result(tape, (a,), data, backward_fn)


# ---------------------------------------------------------------------------
# structure


def reshape(tape, a: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    old = a.data.shape
    data = a.data.reshape(shape)

    def backward_fn(g):
        return (g.reshape(old),)

    return _result(tape, (a,), data, backward_fn)


def slice_axis(tape, a: Tensor, axis: int, start: int, stop: int) -> Tensor:
    axis = axis % a.data.ndim
    sl = tuple(slice(start, stop) if i == axis else slice(None) for i in range(a.data.ndim))
    data = a.data[sl].copy()
    shape = a.data.shape

    def backward_fn(g):
        full = np.zeros(shape, dtype=g.dtype)
        full[sl] = g
        return (full,)

    return _result(tape, (a,), data, backward_fn)


def stack(tape, tensors: list[Tensor], axis: int = 0) -> Tensor:
    _check_dtypes(*tensors)
    data = np.stack([t.data for t in tensors], axis=axis)

    def backward_fn(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    return _result(tape, tuple(tensors), data, backward_fn)


def pick(tape, a: Tensor, index: int) -> Tensor:
    """Select one element of a vector as a scalar tensor."""
    if a.data.ndim != 1:
        raise ShapeError(f"pick expects a vector, got shape {a.shape}")
    if not 0 <= index < a.data.shape[0]:
        raise IndexError(f"pick index {index} out of range for length {a.data.shape[0]}")
    data = np.asarray(a.data[index], dtype=a.data.dtype)
    n = a.data.shape[0]

    def backward_fn(g):
        full = np.zeros(n, dtype=g.dtype)
        full[index] = g
        return (full,)

    return _result(tape, (a,), data, backward_fn)


def matmul(tape, a: Tensor, b: Tensor) -> Tensor:
    _check_dtypes(a, b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data
    data = ad @ bd
    need_a, need_b = a.requires_grad, b.requires_grad

    def backward_fn(g):
        return (g @ bd.T if need_a else None), (ad.T @ g if need_b else None)

    return _result(tape, (a, b), data, backward_fn)


# ---------------------------------------------------------------------------
# convolution and pooling


def _windows3d(arr: np.ndarray, window, stride) -> np.ndarray:
    """Read-only strided view [To,Ho,Wo,C,wt,wh,ww] over the first three axes."""
    wt, wh, ww = window
    st, sh, sw = stride
    t, h, w, c = arr.shape
    to = (t - wt) // st + 1
    ho = (h - wh) // sh + 1
    wo = (w - ww) // sw + 1
    s0, s1, s2, s3 = arr.strides
    return as_strided(
        arr,
        shape=(to, ho, wo, c, wt, wh, ww),
        strides=(s0 * st, s1 * sh, s2 * sw, s3, s0, s1, s2),
        writeable=False,
    )


def _conv3d_check(x: Tensor, kernel: Tensor, stride, padding) -> None:
    if x.data.ndim != 4:
        raise ShapeError(f"conv3d input must be [T,H,W,Cin], got {x.shape}")
    if kernel.data.ndim != 5:
        raise ShapeError(f"conv3d kernel must be [kt,kh,kw,Cin,Cout], got {kernel.shape}")
    if any(s < 1 for s in stride):
        raise ShapeError(f"conv3d strides must be >= 1, got {stride}")
    if any(p < 0 for p in padding):
        raise ShapeError(f"conv3d padding must be >= 0, got {padding}")
    if kernel.shape[3] != x.shape[3]:
        raise ShapeError(
            f"conv3d channel mismatch: input {x.shape} has {x.shape[3]} channels, "
            f"kernel {kernel.shape} expects {kernel.shape[3]}"
        )
    for ax in range(3):
        padded = x.shape[ax] + 2 * padding[ax]
        if kernel.shape[ax] > padded:
            raise ShapeError(
                f"conv3d kernel extent {kernel.shape[ax]} exceeds padded input extent "
                f"{padded} on axis {ax} (input {x.shape}, kernel {kernel.shape}, "
                f"stride {tuple(stride)}, padding {tuple(padding)})"
            )


def conv3d(tape, x: Tensor, kernel: Tensor, stride=(1, 1, 1), padding=(0, 0, 0)) -> Tensor:
    """Strided 3-D cross-correlation over [T,H,W,Cin] with a
    [kt,kh,kw,Cin,Cout] kernel. Output extent per axis is
    floor((in + 2*pad - k) / stride) + 1.
    """
    _check_dtypes(x, kernel)
    stride = tuple(int(s) for s in stride)
    padding = tuple(int(p) for p in padding)
    _conv3d_check(x, kernel, stride, padding)

    kt, kh, kw, cin, cout = kernel.shape
    st, sh, sw = stride
    if padding != (0, 0, 0):
        xp = np.pad(x.data, ((padding[0],) * 2, (padding[1],) * 2, (padding[2],) * 2, (0, 0)))
    else:
        xp = x.data
    win = _windows3d(xp, (kt, kh, kw), stride)  # [To,Ho,Wo,Cin,kt,kh,kw]
    out = np.tensordot(win, kernel.data, axes=((4, 5, 6, 3), (0, 1, 2, 3)))
    to, ho, wo = out.shape[:3]
    kdata = kernel.data
    in_shape = x.data.shape
    pad_shape = xp.shape
    need_x, need_k = x.requires_grad, kernel.requires_grad

    def backward_fn(g):
        g_kernel = None
        if need_k:
            g_kernel = np.tensordot(win, g, axes=((0, 1, 2), (0, 1, 2)))  # [Cin,kt,kh,kw,Cout]
            g_kernel = np.ascontiguousarray(np.moveaxis(g_kernel, 0, 3))  # [kt,kh,kw,Cin,Cout]
        g_x = None
        if need_x:
            g_col = np.tensordot(g, kdata, axes=((3,), (4,)))  # [To,Ho,Wo,kt,kh,kw,Cin]
            g_pad = np.zeros(pad_shape, dtype=g.dtype)
            for dt in range(kt):
                for dh in range(kh):
                    for dw in range(kw):
                        g_pad[
                            dt : dt + st * (to - 1) + 1 : st,
                            dh : dh + sh * (ho - 1) + 1 : sh,
                            dw : dw + sw * (wo - 1) + 1 : sw,
                        ] += g_col[:, :, :, dt, dh, dw, :]
            pt, ph, pw = padding
            g_x = np.ascontiguousarray(
                g_pad[pt : pt + in_shape[0], ph : ph + in_shape[1], pw : pw + in_shape[2]]
            )
        return g_x, g_kernel

    return _result(tape, (x, kernel), out, backward_fn)


def conv2d(tape, x: Tensor, kernel: Tensor, stride=(1, 1), padding=(0, 0)) -> Tensor:
    """2-D cross-correlation over [H,W,Cin] with a [kh,kw,Cin,Cout] kernel."""
    _check_dtypes(x, kernel)
    if x.data.ndim != 3 or kernel.data.ndim != 4:
        raise ShapeError(f"conv2d expects x [H,W,Cin] and kernel [kh,kw,Cin,Cout], got {x.shape}, {kernel.shape}")
    stride = tuple(int(s) for s in stride)
    padding = tuple(int(p) for p in padding)
    kh, kw, cin, cout = kernel.shape
    if cin != x.shape[2]:
        raise ShapeError(f"conv2d channel mismatch: input {x.shape} vs kernel {kernel.shape}")
    sh, sw = stride
    if padding != (0, 0):
        xp = np.pad(x.data, ((padding[0],) * 2, (padding[1],) * 2, (0, 0)))
    else:
        xp = x.data
    if kh > xp.shape[0] or kw > xp.shape[1]:
        raise ShapeError(
            f"conv2d kernel {kernel.shape} exceeds padded input {xp.shape} "
            f"(stride {stride}, padding {padding})"
        )
    ho = (xp.shape[0] - kh) // sh + 1
    wo = (xp.shape[1] - kw) // sw + 1
    s0, s1, s2 = xp.strides
    win = as_strided(
        xp,
        shape=(ho, wo, cin, kh, kw),
        strides=(s0 * sh, s1 * sw, s2, s0, s1),
        writeable=False,
    )
    out = np.tensordot(win, kernel.data, axes=((3, 4, 2), (0, 1, 2)))
    kdata = kernel.data
    in_shape = x.data.shape
    pad_shape = xp.shape
    need_x, need_k = x.requires_grad, kernel.requires_grad

    def backward_fn(g):
        g_kernel = None
        if need_k:
            g_kernel = np.tensordot(win, g, axes=((0, 1), (0, 1)))  # [Cin,kh,kw,Cout]
            g_kernel = np.ascontiguousarray(np.moveaxis(g_kernel, 0, 2))
        g_x = None
        if need_x:
            g_col = np.tensordot(g, kdata, axes=((2,), (3,)))  # [Ho,Wo,kh,kw,Cin]
            g_pad = np.zeros(pad_shape, dtype=g.dtype)
            for dh in range(kh):
                for dw in range(kw):
                    g_pad[dh : dh + sh * (ho - 1) + 1 : sh, dw : dw + sw * (wo - 1) + 1 : sw] += g_col[:, :, dh, dw, :]
            ph, pw = padding
            g_x = np.ascontiguousarray(g_pad[ph : ph + in_shape[0], pw : pw + in_shape[1]])
        return g_x, g_kernel

    return _result(tape, (x, kernel), out, backward_fn)


def maxpool3d(tape, x: Tensor, window, stride=None) -> Tensor:
    """Max pooling over (T,H,W) windows, channels kept separate.

    Gradient is routed to the window's argmax element; ties resolve to the
    first occurrence in row-major window order.
    """
    if x.data.ndim != 4:
        raise ShapeError(f"maxpool3d input must be [T,H,W,C], got {x.shape}")
    window = tuple(int(w) for w in window)
    stride = window if stride is None else tuple(int(s) for s in stride)
    for ax in range(3):
        if window[ax] > x.shape[ax]:
            raise ShapeError(f"maxpool window {window} exceeds input extent {x.shape[:3]} on axis {ax}")
        if window[ax] < 1 or stride[ax] < 1:
            raise ShapeError(f"maxpool window/stride must be >= 1, got {window}, {stride}")

    wt, wh, ww = window
    st, sh, sw = stride
    win = _windows3d(x.data, window, stride)
    to, ho, wo, c = win.shape[:4]
    flat = win.reshape(to, ho, wo, c, wt * wh * ww)
    arg = flat.argmax(axis=4)
    out = np.take_along_axis(flat, arg[..., None], axis=4)[..., 0]
    in_shape = x.data.shape

    def backward_fn(g):
        dt, rem = np.divmod(arg, wh * ww)
        dh, dw = np.divmod(rem, ww)
        ti = (np.arange(to) * st)[:, None, None, None]
        hi = (np.arange(ho) * sh)[None, :, None, None]
        wi = (np.arange(wo) * sw)[None, None, :, None]
        ci = np.arange(c)[None, None, None, :]
        flat_idx = (((ti + dt) * in_shape[1] + (hi + dh)) * in_shape[2] + (wi + dw)) * in_shape[3] + ci
        g_x = np.bincount(
            flat_idx.ravel(), weights=g.ravel().astype(np.float64), minlength=int(np.prod(in_shape))
        )
        return (g_x.reshape(in_shape).astype(g.dtype),)

    return _result(tape, (x,), out, backward_fn)


# ---------------------------------------------------------------------------
# fused recurrent-gate kernels

# The recurrent cell update is the hot loop of the ConvLSTM, so its gate
# arithmetic is fused into two records instead of a dozen primitive ones.
# Both carry hand-derived backward rules that the finite-difference suite
# validates like any other op. Gate packing along the last axis is
# (input, forget, candidate, output), each of width F.


def _split_gates(pre: np.ndarray):
    f = pre.shape[-1] // 4
    return pre[..., 0:f], pre[..., f : 2 * f], pre[..., 2 * f : 3 * f], pre[..., 3 * f : 4 * f]


def _sigmoid_arr(x: np.ndarray) -> np.ndarray:
    out = np.tanh(x * x.dtype.type(0.5))
    out += 1.0
    out *= 0.5
    return out


def lstm_cell_update(tape, pre_gates: Tensor, cell: Tensor) -> Tensor:
    """c' = sigmoid(f_pre) * c + sigmoid(i_pre) * tanh(g_pre).

    ``pre_gates`` is [..., 4F]; its output-gate quarter is untouched here
    and receives zero gradient from this op.
    """
    if pre_gates.shape[-1] != 4 * cell.shape[-1] or pre_gates.shape[:-1] != cell.shape[:-1]:
        raise ShapeError(f"gate block {pre_gates.shape} does not match cell {cell.shape}")
    p_i, p_f, p_g, _ = _split_gates(pre_gates.data)
    gate_i = _sigmoid_arr(p_i)
    gate_f = _sigmoid_arr(p_f)
    cand = np.tanh(p_g)
    out = gate_f * cell.data + gate_i * cand
    c_data = cell.data

    def backward_fn(g):
        g_pre = np.empty_like(pre_gates.data)
        gi, gf, gg, go = _split_gates(g_pre)
        np.multiply(g * cand, gate_i * (1.0 - gate_i), out=gi)
        np.multiply(g * c_data, gate_f * (1.0 - gate_f), out=gf)
        np.multiply(g * gate_i, 1.0 - cand * cand, out=gg)
        go[...] = 0.0
        return g_pre, g * gate_f

    return _result(tape, (pre_gates, cell), out, backward_fn)


def lstm_hidden_out(tape, pre_gates: Tensor, cell: Tensor) -> Tensor:
    """h = sigmoid(o_pre) * tanh(c'); gradient reaches only the output-gate
    quarter of ``pre_gates`` plus the cell."""
    if pre_gates.shape[-1] != 4 * cell.shape[-1] or pre_gates.shape[:-1] != cell.shape[:-1]:
        raise ShapeError(f"gate block {pre_gates.shape} does not match cell {cell.shape}")
    p_o = pre_gates.data[..., 3 * cell.shape[-1] :]
    gate_o = _sigmoid_arr(p_o)
    tc = np.tanh(cell.data)
    out = gate_o * tc

    def backward_fn(g):
        g_pre = np.zeros_like(pre_gates.data)
        g_pre[..., 3 * cell.shape[-1] :] = g * tc * gate_o * (1.0 - gate_o)
        return g_pre, g * gate_o * (1.0 - tc * tc)

    return _result(tape, (pre_gates, cell), out, backward_fn)


# ---------------------------------------------------------------------------
# classification heads


def softmax(tape, a: Tensor) -> Tensor:
    """Numerically stable softmax over a logit vector."""
    if a.data.ndim != 1:
        raise ShapeError(f"softmax expects a vector, got shape {a.shape}")
    z = a.data - a.data.max()
    e = np.exp(z)
    out = e / e.sum(dtype=np.float64).astype(a.data.dtype)

    def backward_fn(g):
        inner = np.dot(g.astype(np.float64), out.astype(np.float64))
        return (out * (g - out.dtype.type(inner)),)

    return _result(tape, (a,), out, backward_fn)


def softmax_cross_entropy(tape, logits: Tensor, label: int) -> Tensor:
    """Scalar negative log-likelihood of ``label`` under softmax(logits)."""
    if logits.data.ndim != 1:
        raise ShapeError(f"softmax_cross_entropy expects a logit vector, got {logits.shape}")
    n = logits.data.shape[0]
    if not 0 <= label < n:
        raise IndexError(f"label {label} out of range for {n} classes")
    z = logits.data - logits.data.max()
    lse = np.log(np.exp(z).sum(dtype=np.float64))
    probs = np.exp(z - lse.astype(z.dtype))
    loss = np.asarray(lse.astype(z.dtype) - z[label], dtype=logits.data.dtype)

    def backward_fn(g):
        grad = probs.copy()
        grad[label] -= 1.0
        return (grad * g,)

    return _result(tape, (logits,), loss, backward_fn)
