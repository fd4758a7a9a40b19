"""Normalizing activations with controllable sparsity, plus their gradients.

Three members of one family over the last axis of the input:

* ``softmax``: full support, every weight strictly positive.
* ``sparsemax``: Euclidean projection onto the probability simplex via the
  sort-and-threshold construction; produces exact zeros.
* ``entmax``: the interpolating family with exponent parameter alpha in
  (1, 2]; alpha -> 1 approaches softmax and alpha = 2 recovers sparsemax.
  The threshold is found by bisection (50 halvings, bracketed from the row
  maximum), and the backward pass differentiates the root condition, for
  gradients w.r.t. both the scores and alpha.

All three are registered as single tape primitives so their Jacobians are
exact rather than composed from elementwise pieces.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .tensor import Tensor, _accumulate, _as_tensor, _make, sigmoid

BISECT_ITERATIONS = 50
# Score entries at or below this sentinel are treated as absent candidates:
# they receive exactly zero weight under all three activations.
MASK_SCORE = -1e30


class ParameterDomainError(ValueError):
    """Raised when an activation parameter is outside its legal domain."""


def _check_finite(name: str, x: np.ndarray) -> None:
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name}: scores must be finite")


def softmax(z) -> Tensor:
    """Exponential normalization over the last axis; full support."""
    z = _as_tensor(z)
    _check_finite("softmax", z.data)
    shifted = z.data - z.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    p = e / e.sum(axis=-1, keepdims=True)

    def backward(g, pending):
        inner = (g * p).sum(axis=-1, keepdims=True)
        _accumulate(pending, z, p * (g - inner))

    return _make(p, (z,), backward)


def _sparsemax_forward(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Sort-and-threshold simplex projection; returns (p, support_size)."""
    srt = -np.sort(-x, axis=-1)
    cumulative = np.cumsum(srt, axis=-1) - 1.0
    ranks = np.arange(1, x.shape[-1] + 1, dtype=np.float64)
    support = ranks * srt > cumulative
    k = support.sum(axis=-1, keepdims=True)
    tau = np.take_along_axis(cumulative, k.astype(np.int64) - 1, axis=-1) / k
    return np.maximum(x - tau, 0.0), k


def sparsemax(z) -> Tensor:
    """Euclidean projection of each row onto the probability simplex."""
    z = _as_tensor(z)
    _check_finite("sparsemax", np.where(z.data <= MASK_SCORE, 0.0, z.data))
    p, k = _sparsemax_forward(z.data)

    def backward(g, pending):
        supp = p > 0.0
        vhat = (g * supp).sum(axis=-1, keepdims=True) / k
        _accumulate(pending, z, np.where(supp, g - vhat, 0.0))

    return _make(p, (z,), backward)


def _entmax_forward(x: np.ndarray, alpha: float) -> np.ndarray:
    """Bisection on the threshold tau so the row weights sum to one."""
    beta = alpha - 1.0
    inv_beta = 1.0 / beta
    y = beta * x
    lo = y.max(axis=-1, keepdims=True) - 1.0
    hi = lo + 1.0
    work = np.empty_like(y)
    for _ in range(BISECT_ITERATIONS):
        mid = 0.5 * (lo + hi)
        np.subtract(y, mid, out=work)
        np.maximum(work, 0.0, out=work)
        if inv_beta != 1.0:
            np.power(work, inv_beta, out=work)
        above = work.sum(axis=-1, keepdims=True) >= 1.0
        lo = np.where(above, mid, lo)
        hi = np.where(above, hi, mid)
    tau = 0.5 * (lo + hi)
    p = np.maximum(y - tau, 0.0) ** inv_beta
    return p / p.sum(axis=-1, keepdims=True)


def entmax(z, alpha) -> Tensor:
    """Controllably sparse normalization with exponent parameter alpha.

    alpha may be a float or a scalar Tensor; in the latter case gradients
    flow to alpha through the implicit differentiation of the threshold's
    defining equation.
    """
    z = _as_tensor(z)
    alpha_t = alpha if isinstance(alpha, Tensor) else None
    a = float(alpha_t.data) if alpha_t is not None else float(alpha)
    if not 1.0 < a <= 2.0:
        raise ParameterDomainError(f"entmax: alpha must lie in (1, 2], got {a}")
    _check_finite("entmax", np.where(z.data <= MASK_SCORE, 0.0, z.data))
    beta = a - 1.0
    p = _entmax_forward(z.data, a)

    def backward(g, pending):
        supp = p > 0.0
        s = np.where(supp, p ** (2.0 - a), 0.0)
        s_sum = s.sum(axis=-1, keepdims=True)
        gs = (g * s).sum(axis=-1, keepdims=True)
        _accumulate(pending, z, s * g - (gs / s_sum) * s)
        if alpha_t is not None and alpha_t.requires_grad:
            plogp = np.where(supp, p * np.log(np.where(supp, p, 1.0)), 0.0)
            sz = np.where(supp, s * z.data, 0.0)
            tau_dot = (sz.sum(axis=-1, keepdims=True) - plogp.sum(axis=-1, keepdims=True)) / s_sum
            dp_da = (-plogp + np.where(supp, s * (z.data - tau_dot), 0.0)) / beta
            _accumulate(pending, alpha_t, np.full_like(alpha_t.data, (g * dp_da).sum()))

    parents = (z,) if alpha_t is None else (z, alpha_t)
    return _make(p, parents, backward)


@dataclass
class AlphaParameter:
    """Per-head sparsity exponent, constrained to (1, 2) by construction.

    The trainable scalar is the raw logit; the exponent used by entmax is
    1 + sigmoid(raw), which keeps it inside the open interval regardless of
    optimizer updates.
    """

    raw: Tensor
    trainable: bool = True

    @classmethod
    def create(cls, init: float = 1.5, trainable: bool = True) -> "AlphaParameter":
        if not 1.0 < init < 2.0:
            raise ParameterDomainError(f"alpha init must lie in (1, 2), got {init}")
        logit = math.log((init - 1.0) / (2.0 - init))
        return cls(raw=Tensor(np.float64(logit), requires_grad=trainable), trainable=trainable)

    def tensor(self) -> Tensor:
        """Tape-connected exponent value."""
        return sigmoid(self.raw) + 1.0

    @property
    def value(self) -> float:
        return float(1.0 / (1.0 + np.exp(-self.raw.data)) + 1.0)


EXPSUM_PER_TERM = (math.e**2 - 1.0) / (2.0 * math.e)


@dataclass
class ExpSumCheck:
    sequence_length: int
    n_samples: int
    estimate: float
    analytic: float

    @property
    def relative_deviation(self) -> float:
        return abs(self.estimate - self.analytic) / self.analytic


def verify_expsum_expectation(S: int, n_samples: int, seed: int) -> ExpSumCheck:
    """Monte Carlo check of E[sum_j exp(z_j)] for z_j ~ Uniform(-1, 1).

    The analytic value is S * (e^2 - 1) / (2e), about 1.1752 per term.
    Each sample draws S uniforms and contributes one realization of the sum.
    """
    if S < 1 or n_samples < 1:
        raise ValueError("verify_expsum_expectation: S and n_samples must be >= 1")
    rng = np.random.default_rng(seed)
    chunk = max(1, min(n_samples, 4_000_000 // S))
    total = 0.0
    remaining = n_samples
    while remaining > 0:
        m = min(chunk, remaining)
        z = rng.uniform(-1.0, 1.0, size=(m, S))
        total += float(np.exp(z).sum())
        remaining -= m
    return ExpSumCheck(S, n_samples, total / n_samples, S * EXPSUM_PER_TERM)


@dataclass
class UniformityResult:
    """Self-attention weight statistics for one random sequence.

    The scalar statistics are averaged over the S query rows of the S x S
    weight matrix.
    """

    activation: str
    sequence_length: int
    seed: int
    weights: np.ndarray
    max_weight: float
    normalized_entropy: float
    support_size: float


def uniformity_experiment(S: int, dim: int, seed: int, activation: str) -> UniformityResult:
    """Single-head cosine self-attention over S random embeddings.

    Embedding entries are standard normal; the activation is applied row
    by row to the S x S cosine score matrix.
    """
    if S < 2:
        raise ValueError("uniformity_experiment: S must be >= 2")
    fn = {"softmax": softmax, "sparsemax": sparsemax}.get(activation)
    if fn is None:
        raise ValueError(f"uniformity_experiment: unknown activation {activation!r}")
    rng = np.random.default_rng(seed)
    emb = rng.standard_normal((S, dim))
    norms = np.linalg.norm(emb, axis=1, keepdims=True) + 1e-12
    unit = emb / norms
    weights = fn(Tensor(unit @ unit.T)).data

    max_weight = float(weights.max(axis=1).mean())
    with np.errstate(divide="ignore", invalid="ignore"):
        plogp = np.where(weights > 0.0, weights * np.log(weights), 0.0)
    normalized_entropy = float((-plogp.sum(axis=1) / math.log(S)).mean())
    support = float((weights > 0.0).sum(axis=1).mean())
    return UniformityResult(activation, S, seed, weights, max_weight, normalized_entropy, support)
