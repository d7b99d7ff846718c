"""Finite-difference validation of every backward rule.

Single ops are checked densely at eps 1e-3 in float64 over 20 fixed seeds;
inputs for kinked ops (relu, abs, maxpool) are sampled away from their
kinks so the central difference is exact up to truncation error.
"""

import numpy as np
import pytest

from vidsal import Tape, Tensor, backward
from vidsal import ops

from _oracles import finite_difference, max_rel_err

SEEDS = range(20)
EPS = 1e-3
TOL = 1e-3


def check_input_grad(build, x, eps=EPS, coords=None, tol=TOL):
    """build(tape, Tensor) -> scalar Tensor; compares tape grad to FD."""
    xt = Tensor(x, requires_grad=True, dtype=np.float64)
    tape = Tape()
    out = build(tape, xt)
    analytic = backward(tape, out)[xt]

    def f(arr):
        return float(build(None, Tensor(arr, dtype=np.float64)).data)

    numeric = finite_difference(f, x, coords=coords, eps=eps)
    if coords is not None:
        analytic = analytic.reshape(-1)[list(coords)]
    assert max_rel_err(analytic, numeric) < tol


def away_from_zero(rng, shape, low=0.2, high=1.5):
    mag = rng.uniform(low, high, size=shape)
    sign = np.where(rng.random(shape) < 0.5, -1.0, 1.0)
    return mag * sign


@pytest.mark.parametrize("seed", SEEDS)
def test_sigmoid_tanh_sqrt_grads(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(3, 5))
    check_input_grad(lambda t, v: ops.sum_(t, ops.sigmoid(t, v)), x)
    check_input_grad(lambda t, v: ops.sum_(t, ops.tanh(t, v)), x)
    check_input_grad(lambda t, v: ops.sum_(t, ops.sqrt(t, v)), rng.uniform(0.5, 2.0, size=(4,)))


@pytest.mark.parametrize("seed", SEEDS)
def test_relu_abs_pow_grads(seed):
    rng = np.random.default_rng(seed)
    x = away_from_zero(rng, (4, 4))
    check_input_grad(lambda t, v: ops.sum_(t, ops.relu(t, v)), x)
    check_input_grad(lambda t, v: ops.sum_(t, ops.absolute(t, v)), x)
    pos = rng.uniform(0.1, 1.0, size=(6,))
    check_input_grad(lambda t, v: ops.sum_(t, ops.pow_scalar(t, v, 3.0)), pos)
    check_input_grad(lambda t, v: ops.sum_(t, ops.pow_scalar(t, v, 1.5)), pos)


@pytest.mark.parametrize("seed", SEEDS)
def test_arithmetic_grads(seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(3, 4))
    b = rng.normal(size=(3, 4)) + 2.5  # keep divisor away from zero
    bias = rng.normal(size=(4,))

    def with_other(op, other, other_first=False):
        def build(t, v):
            o = Tensor(other, dtype=np.float64)
            return ops.sum_(t, op(t, o, v) if other_first else op(t, v, o))
        return build

    check_input_grad(with_other(ops.add, b), a)
    check_input_grad(with_other(ops.mul, b), a)
    check_input_grad(with_other(ops.div, b), a)
    check_input_grad(with_other(ops.div, a, other_first=True), b)
    check_input_grad(lambda t, v: ops.sum_(t, ops.add(t, Tensor(a, dtype=np.float64), v)), bias)
    check_input_grad(lambda t, v: ops.sum_(t, ops.mul(t, Tensor(a, dtype=np.float64), v)), bias)
    check_input_grad(lambda t, v: ops.sum_(t, ops.neg(t, v)), a)
    check_input_grad(lambda t, v: ops.mul_scalar(t, ops.sum_(t, ops.add_scalar(t, v, 1.7)), -0.3), a)


@pytest.mark.parametrize("seed", SEEDS)
def test_reduction_and_structure_grads(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(3, 4, 2))
    check_input_grad(lambda t, v: ops.sum_(t, ops.mean(t, v, axis=(0, 2)) if True else v), x)
    check_input_grad(lambda t, v: ops.mean(t, ops.mul(t, v, v)), x)
    check_input_grad(lambda t, v: ops.sum_(t, ops.reshape(t, v, (6, 4))), x)
    check_input_grad(lambda t, v: ops.sum_(t, ops.slice_axis(t, v, 1, 1, 3)), x)
    vec = rng.normal(size=(7,))
    check_input_grad(lambda t, v: ops.pick(t, v, 3), vec)
    stack_w = rng.normal(size=(2, 3))
    check_input_grad(
        lambda t, v: ops.sum_(
            t,
            ops.mul(
                t,
                ops.stack(t, [ops.slice_axis(t, v, 0, 0, 3), ops.slice_axis(t, v, 0, 4, 7)], axis=0),
                Tensor(stack_w, dtype=np.float64),
            ),
        ),
        vec,
    )


@pytest.mark.parametrize("seed", SEEDS)
def test_matmul_grads(seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(3, 4))
    b = rng.normal(size=(4, 2))
    w = rng.normal(size=(3, 2))

    def weighted(t, left, right):
        return ops.sum_(t, ops.mul(t, ops.matmul(t, left, right), Tensor(w, dtype=np.float64)))

    check_input_grad(lambda t, v: weighted(t, v, Tensor(b, dtype=np.float64)), a)
    check_input_grad(lambda t, v: weighted(t, Tensor(a, dtype=np.float64), v), b)


@pytest.mark.parametrize("seed", SEEDS)
def test_conv3d_grads_both_operands(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(4, 6, 6, 1))
    k = rng.normal(size=(2, 3, 3, 1, 2))
    w = rng.normal(size=(3, 3, 3, 2))  # weights make the scalar non-degenerate

    def as_scalar(t, xt, kt):
        y = ops.conv3d(t, xt, kt, stride=(1, 2, 2), padding=(0, 1, 1))
        return ops.sum_(t, ops.mul(t, y, Tensor(w, dtype=np.float64)))

    check_input_grad(lambda t, v: as_scalar(t, v, Tensor(k, dtype=np.float64)), x)
    check_input_grad(lambda t, v: as_scalar(t, Tensor(x, dtype=np.float64), v), k)


@pytest.mark.parametrize("seed", SEEDS)
def test_conv2d_grads_both_operands(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(6, 7, 2))
    k = rng.normal(size=(3, 3, 2, 4))
    w = rng.normal(size=(3, 4, 4))

    def as_scalar(t, xt, kt):
        y = ops.conv2d(t, xt, kt, stride=(2, 2), padding=(1, 1))
        return ops.sum_(t, ops.mul(t, y, Tensor(w, dtype=np.float64)))

    check_input_grad(lambda t, v: as_scalar(t, v, Tensor(k, dtype=np.float64)), x)
    check_input_grad(lambda t, v: as_scalar(t, Tensor(x, dtype=np.float64), v), k)


@pytest.mark.parametrize("seed", SEEDS)
def test_fused_lstm_gate_grads(seed):
    rng = np.random.default_rng(seed)
    pre = rng.normal(size=(3, 3, 8))
    cell = rng.normal(size=(3, 3, 2))
    w1 = rng.normal(size=(3, 3, 2))
    w2 = rng.normal(size=(3, 3, 2))

    def cell_then_hidden(t, pre_t, cell_t):
        c2 = ops.lstm_cell_update(t, pre_t, cell_t)
        h = ops.lstm_hidden_out(t, pre_t, c2)
        return ops.add(
            t,
            ops.sum_(t, ops.mul(t, c2, Tensor(w1, dtype=np.float64))),
            ops.sum_(t, ops.mul(t, h, Tensor(w2, dtype=np.float64))),
        )

    check_input_grad(lambda t, v: cell_then_hidden(t, v, Tensor(cell, dtype=np.float64)), pre)
    check_input_grad(lambda t, v: cell_then_hidden(t, Tensor(pre, dtype=np.float64), v), cell)


@pytest.mark.parametrize("seed", SEEDS)
def test_maxpool_grads(seed):
    rng = np.random.default_rng(seed)
    # distinct values keep the argmax stable under the FD perturbation
    x = rng.permutation(np.linspace(-2.0, 2.0, 2 * 4 * 4 * 2)).reshape(2, 4, 4, 2)
    w = rng.normal(size=(1, 2, 2, 2))
    check_input_grad(
        lambda t, v: ops.sum_(t, ops.mul(t, ops.maxpool3d(t, v, (2, 2, 2)), Tensor(w, dtype=np.float64))),
        x,
    )


@pytest.mark.parametrize("seed", SEEDS)
def test_softmax_and_cross_entropy_grads(seed):
    rng = np.random.default_rng(seed)
    logits = rng.normal(size=(6,))
    w = rng.normal(size=(6,))
    check_input_grad(
        lambda t, v: ops.sum_(t, ops.mul(t, ops.softmax(t, v), Tensor(w, dtype=np.float64))), logits
    )
    label = int(rng.integers(0, 6))
    check_input_grad(lambda t, v: ops.softmax_cross_entropy(t, v, label), logits)
