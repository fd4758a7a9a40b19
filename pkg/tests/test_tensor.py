"""Tensor core: forward oracles, shape errors, and gradient checks."""

import numpy as np
import pytest

import commentmatch.tensor as T
from commentmatch.tensor import ShapeError, Tape, Tensor

from helpers import check_gradients


def test_matmul_shape_rule():
    a = Tensor(np.ones((2, 3)))
    b = Tensor(np.ones((3, 2)))
    assert (a @ b).shape == (2, 2)


def test_matmul_shape_mismatch_names_op_and_shapes():
    with pytest.raises(ShapeError) as exc:
        Tensor(np.ones((2, 3))) @ Tensor(np.ones((2, 3)))
    assert "matmul" in str(exc.value)
    assert "(2, 3)" in str(exc.value)


def test_reduce_max_axis0():
    x = Tensor([[1.0, 5.0], [3.0, 2.0]])
    assert np.array_equal(x.max(axis=0).data, [3.0, 5.0])


def test_l2_norm_345():
    assert T.l2_norm(Tensor([3.0, 4.0])).item() == pytest.approx(5.0, abs=0)


def test_sum_gradient_is_ones():
    x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
    with Tape() as tape:
        loss = x.sum()
    tape.backward(loss)
    assert np.array_equal(x.grad, [1.0, 1.0, 1.0])


def test_square_sum_gradient():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with Tape() as tape:
        loss = (x * x).sum()
    tape.backward(loss)
    assert np.array_equal(x.grad, [2.0, 4.0])


def test_backward_rejects_nonscalar_loss():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with Tape() as tape:
        y = x * 2.0
    with pytest.raises(ShapeError):
        tape.backward(y)


def test_repeated_backward_accumulates():
    x = Tensor([1.0, 1.0, 1.0], requires_grad=True)
    with Tape() as tape:
        loss = (x * x).sum()
    tape.backward(loss)
    tape.backward(loss)
    assert np.array_equal(x.grad, [4.0, 4.0, 4.0])


def test_no_tape_means_no_graph():
    x = Tensor([1.0, 2.0], requires_grad=True)
    y = (x * x).sum()
    assert not y.requires_grad and y.grad is None


def test_intermediates_receive_grads():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with Tape() as tape:
        y = x * 3.0
        loss = y.sum()
    tape.backward(loss)
    assert y.grad is not None and y.grad.shape == y.shape


def test_determinism_same_seed_bitwise():
    def run():
        rng = np.random.default_rng(7)
        a = Tensor(rng.standard_normal((4, 3)), requires_grad=True)
        b = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
        with Tape() as tape:
            loss = T.l2_norm(a @ b, axis=1).sum()
        tape.backward(loss)
        return loss.item(), a.grad.copy(), b.grad.copy()

    l1, ga1, gb1 = run()
    l2, ga2, gb2 = run()
    assert l1 == l2
    assert np.array_equal(ga1, ga2) and np.array_equal(gb1, gb2)


def _rand(rng, shape):
    return Tensor(rng.standard_normal(shape), requires_grad=True)


KERNEL_CASES = []


def kernel_case(fn):
    KERNEL_CASES.append(fn)
    return fn


@kernel_case
def _case_add(rng):
    a, b = _rand(rng, (3, 4)), _rand(rng, (3, 4))
    return lambda: (T.add(a, b) * T.add(a, b)).sum(), [a, b]


@kernel_case
def _case_add_broadcast(rng):
    a, b = _rand(rng, (3, 4)), _rand(rng, (1, 4))
    return lambda: (a + b).sum(), [a, b]


@kernel_case
def _case_sub(rng):
    a, b = _rand(rng, (2, 5)), _rand(rng, (2, 5))
    return lambda: ((a - b) * (a - b)).sum(), [a, b]


@kernel_case
def _case_mul(rng):
    a, b = _rand(rng, (4, 3)), _rand(rng, (4, 1))
    return lambda: (a * b).sum(), [a, b]


@kernel_case
def _case_div(rng):
    a = _rand(rng, (3, 3))
    b = Tensor(rng.standard_normal((3, 3)) + 3.0, requires_grad=True)
    return lambda: (a / b).sum(), [a, b]


@kernel_case
def _case_neg(rng):
    a = _rand(rng, (4,))
    return lambda: (T.neg(a) * a).sum(), [a]


@kernel_case
def _case_matmul(rng):
    a, b = _rand(rng, (3, 4)), _rand(rng, (4, 2))
    return lambda: ((a @ b) * (a @ b)).sum(), [a, b]


@kernel_case
def _case_transpose(rng):
    a = _rand(rng, (3, 4))
    return lambda: (a.T @ a).sum(), [a]


@kernel_case
def _case_reshape(rng):
    a = _rand(rng, (2, 6))
    return lambda: (a.reshape((3, 4)) * 2.0).sum(), [a]


@kernel_case
def _case_exp(rng):
    a = _rand(rng, (3, 3))
    return lambda: T.exp(a).sum(), [a]


@kernel_case
def _case_sigmoid(rng):
    a = _rand(rng, (5,))
    return lambda: (T.sigmoid(a) * a).sum(), [a]


@kernel_case
def _case_maximum(rng):
    a = Tensor(rng.standard_normal(8) * 2.0, requires_grad=True)
    return lambda: T.maximum(a, 0.3).sum(), [a]


@kernel_case
def _case_sum_axis(rng):
    a = _rand(rng, (3, 4))
    return lambda: (a.sum(axis=0) * a.sum(axis=0)).sum(), [a]


@kernel_case
def _case_mean_axis(rng):
    a = _rand(rng, (4, 3))
    return lambda: (a.mean(axis=1, keepdims=True) * a).sum(), [a]


@kernel_case
def _case_max_axis(rng):
    a = _rand(rng, (4, 5))
    return lambda: a.max(axis=1).sum(), [a]


@kernel_case
def _case_max_global(rng):
    a = _rand(rng, (4, 5))
    return lambda: a.max() * a.max(), [a]


@kernel_case
def _case_norm(rng):
    a = _rand(rng, (4, 3))
    return lambda: T.l2_norm(a, axis=1).sum(), [a]


@kernel_case
def _case_concat(rng):
    a, b = _rand(rng, (2, 3)), _rand(rng, (4, 3))
    return lambda: (T.concat([a, b], axis=0) * T.concat([a, b], axis=0)).sum(), [a, b]


@kernel_case
def _case_stack(rng):
    a, b, c = _rand(rng, (3,)), _rand(rng, (3,)), _rand(rng, (3,))
    return lambda: (T.stack([a, b, c]) * T.stack([c, a, b])).sum(), [a, b, c]


@kernel_case
def _case_slice(rng):
    a = _rand(rng, (5, 4))
    return lambda: (a[1:4, :2] * a[2:5, 1:3]).sum(), [a]


@kernel_case
def _case_dot_rows(rng):
    a, b = _rand(rng, (4, 6)), _rand(rng, (4, 6))
    return lambda: (T.dot_rows(a, b) * T.dot_rows(a, b)).sum(), [a, b]


@kernel_case
def _case_add_n(rng):
    parts = [_rand(rng, (2, 3)) for _ in range(4)]
    return lambda: (T.add_n(parts) * parts[0]).sum(), parts


@kernel_case
def _case_embedding_lookup(rng):
    table = _rand(rng, (7, 3))
    ids = [0, 3, 3, 6, 1]
    return lambda: (T.embedding_lookup(table, ids) * 1.5).sum(), [table]


@pytest.mark.parametrize("case", KERNEL_CASES, ids=lambda c: c.__name__.strip("_"))
def test_kernel_gradients_match_finite_differences(case):
    rng = np.random.default_rng(hash(case.__name__) % 2**31)
    build, params = case(rng)
    check_gradients(build, params)


def test_composite_graph_gradient():
    rng = np.random.default_rng(42)
    a = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
    b = Tensor(rng.standard_normal((4, 3)), requires_grad=True)
    c = Tensor(rng.standard_normal((3, 3)), requires_grad=True)

    def build():
        h = T.sigmoid(a @ b) + c
        return (T.l2_norm(h, axis=1) * T.exp(h.mean(axis=1))).sum()

    check_gradients(build, [a, b, c])
