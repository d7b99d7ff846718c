"""Freeze/reverse operator identities and gradient behavior."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vidsal import Tape, Tensor, backward
from vidsal import ops
from vidsal.perturb import SubMaskRange, apply_freeze, apply_reverse, extract_submasks, freeze_on_tape

from _oracles import finite_difference, max_rel_err, submask_runs_bruteforce

# 16-entry binary reference mask with two active segments
REFERENCE_MASK = np.array([0, 0, 0, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 1, 1, 0], dtype=np.float64)


def random_clip(seed, t=6, h=3, w=3):
    return np.random.default_rng(seed).random((t, h, w, 1)).astype(np.float32)


def test_freeze_zero_mask_is_identity():
    clip = random_clip(0)
    out = apply_freeze(clip, np.zeros(6))
    assert np.array_equal(out, clip)


def test_freeze_full_mask_collapses_to_first_frame():
    clip = random_clip(1)
    out = apply_freeze(clip, np.ones(6))
    for i in range(6):
        assert np.array_equal(out[i], clip[0])


def test_freeze_hand_recurrence():
    clip = np.array([0.0, 10.0, 20.0]).reshape(3, 1, 1, 1)
    out = apply_freeze(clip, [0.0, 1.0, 0.5])
    assert np.allclose(out.reshape(-1), [0.0, 0.0, 10.0])


def test_freeze_rejects_length_mismatch():
    with pytest.raises(ValueError):
        apply_freeze(random_clip(2), np.zeros(5))


@given(st.integers(0, 2**31 - 1))
@settings(max_examples=30, deadline=None)
def test_freeze_output_within_input_range(seed):
    rng = np.random.default_rng(seed)
    clip = rng.random((5, 2, 2, 1)).astype(np.float32)
    mask = rng.random(5)
    out = apply_freeze(clip, mask)
    assert out.min() >= clip.min() - 1e-6
    assert out.max() <= clip.max() + 1e-6


def test_freeze_on_tape_matches_numpy_and_finite_differences():
    rng = np.random.default_rng(7)
    clip = rng.random((5, 2, 2, 1))
    mask = rng.uniform(0.1, 0.9, size=5)

    clip_t = Tensor(clip, dtype=np.float64)
    mask_t = Tensor(mask, requires_grad=True, dtype=np.float64)
    tape = Tape()
    frozen = freeze_on_tape(tape, clip_t, mask_t)
    assert np.allclose(frozen.data, apply_freeze(clip, mask))

    w = rng.normal(size=frozen.shape)
    loss = ops.sum_(tape, ops.mul(tape, frozen, Tensor(w, dtype=np.float64)))
    analytic = backward(tape, loss)[mask_t]

    def f(m):
        return float(np.sum(apply_freeze(clip, m) * w))

    numeric = finite_difference(f, mask, eps=1e-5)
    assert max_rel_err(analytic, numeric) < 1e-3
    assert analytic[0] == 0.0  # frame 0 is never perturbed


def test_freeze_gradient_reaches_clip():
    rng = np.random.default_rng(11)
    clip_t = Tensor(rng.random((4, 2, 2, 1)), requires_grad=True, dtype=np.float64)
    mask_t = Tensor(rng.random(4), dtype=np.float64)
    tape = Tape()
    loss = ops.sum_(tape, freeze_on_tape(tape, clip_t, mask_t))
    g = backward(tape, loss).wrt(clip_t)
    assert g is not None and g.shape == clip_t.shape


def test_extract_submasks_reference_mask():
    runs = extract_submasks(REFERENCE_MASK, 0.1)
    assert runs == [SubMaskRange(3, 7), SubMaskRange(13, 14)]


def test_extract_submasks_edge_cases():
    assert extract_submasks(np.full(8, 0.05), 0.1) == []
    assert extract_submasks(np.full(8, 0.9), 0.1) == [SubMaskRange(0, 7)]
    with pytest.raises(ValueError):
        extract_submasks(np.zeros(4), 0.0)


@given(st.integers(0, 2**31 - 1), st.integers(1, 24))
@settings(max_examples=60, deadline=None)
def test_extract_submasks_matches_bruteforce(seed, n):
    mask = np.random.default_rng(seed).random(n)
    got = [(r.start, r.end) for r in extract_submasks(mask, 0.5)]
    assert got == submask_runs_bruteforce(mask, 0.5)


def test_reverse_reference_mask_frame_order():
    # frames labeled 1..16 so the permutation is directly readable
    clip = np.arange(1, 17, dtype=np.float32).reshape(16, 1, 1, 1)
    out = apply_reverse(clip, REFERENCE_MASK, 0.1)
    order = out.reshape(-1).astype(int).tolist()
    assert order == [1, 2, 3, 8, 7, 6, 5, 4, 9, 10, 11, 12, 13, 15, 14, 16]


def test_reverse_full_mask_reverses_clip():
    clip = random_clip(3)
    out = apply_reverse(clip, np.ones(6), 0.1)
    assert np.array_equal(out, clip[::-1])


@given(st.integers(0, 2**31 - 1), st.integers(1, 20))
@settings(max_examples=60, deadline=None)
def test_reverse_is_permutation_and_involution(seed, n):
    rng = np.random.default_rng(seed)
    clip = np.arange(n, dtype=np.float32).reshape(n, 1, 1, 1)
    mask = rng.random(n)
    out = apply_reverse(clip, mask, 0.1)
    assert sorted(out.reshape(-1).tolist()) == list(range(n))
    again = apply_reverse(out, mask, 0.1)
    assert np.array_equal(again, clip)
