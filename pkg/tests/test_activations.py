"""Activation family: frozen oracles, invariants, and gradient checks."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import commentmatch.activations as act
from commentmatch.activations import (
    AlphaParameter,
    ParameterDomainError,
    entmax,
    softmax,
    sparsemax,
    uniformity_experiment,
    verify_expsum_expectation,
)
from commentmatch.tensor import Tensor

from helpers import check_gradients
from reference import oracle_entmax_vec, oracle_softmax_vec, oracle_sparsemax_vec

finite_rows = st.lists(
    st.floats(min_value=-30.0, max_value=30.0, allow_nan=False), min_size=2, max_size=24
)


def test_softmax_symmetry():
    p = softmax(Tensor([0.0, 0.0, 0.0, 0.0])).data
    assert np.allclose(p, 0.25, atol=1e-15)


def test_softmax_shift_invariance():
    z = np.array([0.3, -1.2, 2.5])
    a = softmax(Tensor(z)).data
    b = softmax(Tensor(z + 7.5)).data
    assert np.allclose(a, b, atol=1e-14)


def test_softmax_matches_direct_formula():
    z = np.array([1.0, 2.0, 3.0])
    assert np.allclose(softmax(Tensor(z)).data, oracle_softmax_vec(z), atol=1e-15)


def test_softmax_full_support_and_sum():
    rng = np.random.default_rng(0)
    z = rng.standard_normal(40)
    p = softmax(Tensor(z)).data
    assert np.all(p > 0.0)
    assert abs(p.sum() - 1.0) < 1e-12


def test_sparsemax_symmetry():
    assert np.array_equal(sparsemax(Tensor([0.0, 0.0])).data, [0.5, 0.5])


def test_sparsemax_hand_cases():
    # sort-threshold walkthroughs: support 1 with tau 1, support 2 with tau -0.25
    assert np.array_equal(sparsemax(Tensor([2.0, 0.0])).data, [1.0, 0.0])
    assert np.array_equal(sparsemax(Tensor([0.5, 0.0])).data, [0.75, 0.25])


def test_sparsemax_matches_scalar_loop_oracle():
    rng = np.random.default_rng(11)
    for _ in range(50):
        z = rng.standard_normal(rng.integers(2, 30)) * rng.uniform(0.1, 5.0)
        assert np.allclose(sparsemax(Tensor(z)).data, oracle_sparsemax_vec(z), atol=1e-12)


def test_entmax_alpha2_equals_sparsemax():
    rng = np.random.default_rng(3)
    for _ in range(100):
        z = rng.standard_normal(rng.integers(2, 64))
        diff = np.abs(entmax(Tensor(z), 2.0).data - sparsemax(Tensor(z)).data).max()
        assert diff < 1e-10


def test_entmax_near_one_approaches_softmax():
    # cosine-range scores: the limiting-case gap is first order in alpha - 1
    # and only stays under 1e-3 for bounded score spreads
    rng = np.random.default_rng(4)
    for _ in range(50):
        z = rng.uniform(-1.0, 1.0, rng.integers(2, 32))
        diff = np.abs(entmax(Tensor(z), 1.001).data - softmax(Tensor(z)).data).max()
        assert diff < 1e-3


def test_entmax_matches_brentq_oracle():
    z = np.array([1.0, 2.0, 3.0])
    p = entmax(Tensor(z), 1.5).data
    assert abs(p.sum() - 1.0) < 1e-12
    assert np.allclose(p, oracle_entmax_vec(z, 1.5), atol=1e-10)


def test_entmax_matches_brentq_oracle_randomized():
    rng = np.random.default_rng(5)
    for alpha in (1.2, 1.5, 1.8, 2.0):
        for _ in range(25):
            z = rng.standard_normal(rng.integers(2, 40)) * 2.0
            assert np.allclose(
                entmax(Tensor(z), alpha).data, oracle_entmax_vec(z, alpha), atol=1e-10
            )


def test_entmax_rejects_alpha_outside_domain():
    for bad in (0.5, 1.0, 2.2):
        with pytest.raises(ParameterDomainError):
            entmax(Tensor([1.0, 2.0]), bad)


def test_rowwise_application_matches_per_row():
    rng = np.random.default_rng(6)
    Z = rng.standard_normal((5, 7))
    for fn, oracle in ((sparsemax, oracle_sparsemax_vec), (softmax, oracle_softmax_vec)):
        P = fn(Tensor(Z)).data
        for i in range(5):
            assert np.allclose(P[i], oracle(Z[i]), atol=1e-12)
    P = entmax(Tensor(Z), 1.5).data
    for i in range(5):
        assert np.allclose(P[i], oracle_entmax_vec(Z[i], 1.5), atol=1e-10)


@settings(max_examples=60, deadline=None)
@given(finite_rows)
def test_normalization_property(row):
    z = Tensor(np.array(row))
    for p in (softmax(z).data, sparsemax(z).data, entmax(z, 1.5).data):
        assert p.min() >= 0.0
        assert abs(p.sum() - 1.0) < 1e-9


def test_normalization_across_lengths():
    rng = np.random.default_rng(12)
    for n in (2, 3, 17, 128, 512):
        z = Tensor(rng.standard_normal(n) * 3.0)
        for p in (softmax(z).data, sparsemax(z).data, entmax(z, 1.3).data):
            assert p.min() >= 0.0 and abs(p.sum() - 1.0) < 1e-9


@settings(max_examples=40, deadline=None)
@given(finite_rows, st.randoms(use_true_random=False))
def test_permutation_equivariance(row, rnd):
    z = np.array(row)
    perm = list(range(len(z)))
    rnd.shuffle(perm)
    for fn in (softmax, sparsemax, lambda t: entmax(t, 1.5)):
        direct = fn(Tensor(z[perm])).data
        permuted = fn(Tensor(z)).data[perm]
        assert np.allclose(direct, permuted, atol=1e-9)


@settings(max_examples=40, deadline=None)
@given(finite_rows, st.floats(min_value=-20.0, max_value=20.0, allow_nan=False))
def test_shift_invariance(row, c):
    z = np.array(row)
    for fn, tol in ((softmax, 1e-10), (sparsemax, 1e-10), (lambda t: entmax(t, 1.5), 1e-8)):
        assert np.allclose(fn(Tensor(z + c)).data, fn(Tensor(z)).data, atol=tol)


def test_sparsity_monotone_in_alpha():
    rng = np.random.default_rng(8)
    for _ in range(100):
        z = Tensor(rng.standard_normal(16) * 2.0)
        s20 = int((entmax(z, 2.0).data > 0).sum())
        s15 = int((entmax(z, 1.5).data > 0).sum())
        full = int((softmax(z).data > 0).sum())
        assert s20 <= s15 <= full == 16


def test_rejects_nonfinite_scores():
    with pytest.raises(ValueError):
        softmax(Tensor([1.0, np.nan]))
    with pytest.raises(ValueError):
        sparsemax(Tensor([np.inf, 0.0]))


def away_from_support_boundary(z: np.ndarray, alpha: float, margin: float = 1e-3) -> bool:
    """Reject inputs near a support change, where the Jacobian jumps."""
    p = act._entmax_forward(z[None, :], alpha)[0]
    beta = alpha - 1.0
    # recover tau from any support entry
    supp = p > 0
    tau = (beta * z[supp] - p[supp] ** beta).max()
    return bool(np.all(np.abs(beta * z - tau) > margin))


def _boundary_safe_instance(rng, alpha, n=8):
    while True:
        z = rng.standard_normal(n) * 1.5
        if away_from_support_boundary(z, alpha):
            return z


def test_softmax_gradient():
    rng = np.random.default_rng(21)
    for _ in range(20):
        z = Tensor(rng.standard_normal(7), requires_grad=True)
        r = rng.standard_normal(7)
        check_gradients(lambda: (softmax(z) * r).sum(), [z])


def test_sparsemax_gradient_off_boundary():
    rng = np.random.default_rng(22)
    for _ in range(20):
        z = Tensor(_boundary_safe_instance(rng, 2.0), requires_grad=True)
        r = rng.standard_normal(8)
        check_gradients(lambda: (sparsemax(z) * r).sum(), [z])


@pytest.mark.parametrize("alpha", [1.3, 1.5, 1.9])
def test_entmax_gradient_wrt_scores(alpha):
    rng = np.random.default_rng(int(alpha * 100))
    for _ in range(20):
        z = Tensor(_boundary_safe_instance(rng, alpha), requires_grad=True)
        r = rng.standard_normal(8)
        check_gradients(lambda: (entmax(z, alpha) * r).sum(), [z])


def test_entmax_gradient_wrt_alpha_raw():
    rng = np.random.default_rng(31)
    for _ in range(20):
        ap = AlphaParameter.create(init=float(rng.uniform(1.2, 1.8)))
        z_vals = _boundary_safe_instance(rng, ap.value)
        z = Tensor(z_vals, requires_grad=True)
        r = rng.standard_normal(8)
        check_gradients(lambda: (entmax(z, ap.tensor()) * r).sum(), [z, ap.raw])


def test_alpha_parameter_domain():
    with pytest.raises(ParameterDomainError):
        AlphaParameter.create(init=2.0)
    ap = AlphaParameter.create(init=1.5)
    assert ap.value == pytest.approx(1.5, abs=1e-12)
    assert float(ap.raw.data) == pytest.approx(0.0, abs=1e-12)


def test_expsum_analytic_values():
    one = verify_expsum_expectation(1, 1, seed=0)
    assert round(one.analytic, 4) == 1.1752
    s25 = verify_expsum_expectation(25, 1, seed=0)
    assert s25.analytic == pytest.approx(25 * (math.e**2 - 1) / (2 * math.e), rel=1e-15)
    assert s25.analytic == pytest.approx(29.380, abs=5e-4)


def test_expsum_monte_carlo_close():
    check = verify_expsum_expectation(5, 1_000_000, seed=123)
    assert check.relative_deviation < 0.005


def test_uniformity_sums_to_one():
    for name in ("softmax", "sparsemax"):
        res = uniformity_experiment(25, 64, seed=9, activation=name)
        assert np.allclose(res.weights.sum(axis=1), 1.0, atol=1e-9)


def test_uniformity_longer_sequences_flatten_softmax():
    max5 = [uniformity_experiment(5, 64, s, "softmax").max_weight for s in range(40)]
    max25 = [uniformity_experiment(25, 64, s, "softmax").max_weight for s in range(40)]
    assert np.mean(max25) < np.mean(max5)


def test_uniformity_sparsemax_produces_zeros():
    sup = [uniformity_experiment(25, 64, s, "sparsemax").support_size for s in range(40)]
    assert np.mean(sup) < 25.0
