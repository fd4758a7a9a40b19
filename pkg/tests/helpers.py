"""Shared test utilities: finite-difference gradient checks.

The checker is deliberately independent of the tape: it evaluates the
forward function outside any tape context and perturbs parameter data in
place, so the only thing being trusted is plain float64 arithmetic.
"""

from __future__ import annotations

import numpy as np

from commentmatch.tensor import Tape, Tensor

FD_STEP = 1e-5
FD_TOL = 1e-4


def finite_difference(f, param: Tensor, step: float = FD_STEP) -> np.ndarray:
    """Central finite differences of scalar f() w.r.t. every entry of param."""
    grad = np.zeros_like(param.data)
    flat = param.data.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        hi = f()
        flat[i] = orig - step
        lo = f()
        flat[i] = orig
        gflat[i] = (hi - lo) / (2.0 * step)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Max elementwise error relative to gradient scale, floored at 1."""
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1.0)
    return float(np.max(np.abs(analytic - numeric) / denom))


def check_gradients(build_loss, params: list[Tensor], step: float = FD_STEP,
                    tol: float = FD_TOL) -> float:
    """Compare tape gradients of build_loss() against central differences.

    build_loss must construct the graph from scratch on each call and
    return a scalar Tensor. Returns the worst relative error seen.
    """
    for p in params:
        p.zero_grad()
    with Tape() as tape:
        loss = build_loss()
    tape.backward(loss)

    def f() -> float:
        return float(build_loss().data)

    worst = 0.0
    for p in params:
        assert p.grad is not None, "parameter received no gradient"
        fd = finite_difference(f, p, step=step)
        err = relative_error(p.grad, fd)
        worst = max(worst, err)
        assert err < tol, f"gradient mismatch: rel error {err:.3e} >= {tol}"
    return worst
