"""Cosine-scored attention and its adaptively sparse multi-head extension.

Each head owns projection matrices and, when the activation family is
entmax, its own trainable sparsity exponent. The default score is the
cosine of projected query and key rows (bounded in [-1, 1]); scaled dot
product is available for ablations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import tensor as tt
from .activations import AlphaParameter, entmax, softmax
from .tensor import ShapeError, Tensor

COSINE_EPS = 1e-12

SCORE_FNS = ("cosine", "scaled_dot")
ACTIVATIONS = ("entmax", "softmax")


class ConfigError(ValueError):
    """Raised when a configuration violates its documented domain."""


@dataclass
class MultiHeadConfig:
    model_dim: int
    n_heads: int
    score_fn: str = "cosine"
    activation: str = "entmax"
    alpha_init: float = 1.5

    def __post_init__(self):
        if self.model_dim <= 0 or self.n_heads <= 0:
            raise ConfigError("model_dim and n_heads must be positive")
        if self.model_dim % self.n_heads != 0:
            raise ConfigError(
                f"model_dim {self.model_dim} is not divisible by n_heads {self.n_heads}"
            )
        if self.score_fn not in SCORE_FNS:
            raise ConfigError(f"score_fn must be one of {SCORE_FNS}, got {self.score_fn!r}")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"activation must be one of {ACTIVATIONS}, got {self.activation!r}")

    @property
    def head_dim(self) -> int:
        return self.model_dim // self.n_heads


def normalize_rows(m: Tensor) -> Tensor:
    """Rows scaled to unit length; zero rows stabilized by a 1e-12 epsilon."""
    return m / (tt.l2_norm(m, axis=1, keepdims=True) + COSINE_EPS)


def cosine_scores(Q: Tensor, K: Tensor) -> Tensor:
    """Pairwise cosines: entry (i, j) is the cosine of Q row i and K row j."""
    if Q.ndim != 2 or K.ndim != 2 or Q.shape[1] != K.shape[1]:
        raise ShapeError("cosine_scores", Q.shape, K.shape)
    return normalize_rows(Q) @ normalize_rows(K).T


def scaled_dot_scores(Q: Tensor, K: Tensor) -> Tensor:
    if Q.ndim != 2 or K.ndim != 2 or Q.shape[1] != K.shape[1]:
        raise ShapeError("scaled_dot_scores", Q.shape, K.shape)
    return (Q @ K.T) * (1.0 / math.sqrt(Q.shape[1]))


def attend(Q: Tensor, K: Tensor, V: Tensor, activation, score_fn: str = "cosine",
           return_weights: bool = False):
    """Score Q against K, normalize each score row, and mix rows of V.

    Every output row is a convex combination of V rows. ``activation`` is a
    callable mapping a score Tensor to row-normalized weights.
    """
    if K.shape[0] != V.shape[0]:
        raise ShapeError("attend: K and V row counts differ", K.shape, V.shape)
    scores = cosine_scores(Q, K) if score_fn == "cosine" else scaled_dot_scores(Q, K)
    weights = activation(scores)
    out = weights @ V
    return (out, weights) if return_weights else out


class MultiHeadAttention:
    """Per-head projections with per-head activations, concatenated back to D.

    Projection weights are initialized from Uniform(-1/sqrt(D), 1/sqrt(D)).
    With the entmax activation each head h applies entmax with its own
    trainable exponent alpha_h (initialized at the family midpoint).
    """

    def __init__(self, cfg: MultiHeadConfig, rng: np.random.Generator):
        self.cfg = cfg
        d, h, hd = cfg.model_dim, cfg.n_heads, cfg.head_dim
        bound = 1.0 / math.sqrt(d)
        self.wq = [Tensor(rng.uniform(-bound, bound, (d, hd)), requires_grad=True) for _ in range(h)]
        self.wk = [Tensor(rng.uniform(-bound, bound, (d, hd)), requires_grad=True) for _ in range(h)]
        self.wv = [Tensor(rng.uniform(-bound, bound, (d, hd)), requires_grad=True) for _ in range(h)]
        self.alphas: list[AlphaParameter] = []
        if cfg.activation == "entmax":
            self.alphas = [AlphaParameter.create(cfg.alpha_init) for _ in range(h)]

    def parameters(self) -> list[Tensor]:
        params = [*self.wq, *self.wk, *self.wv]
        params.extend(a.raw for a in self.alphas if a.trainable)
        return params

    def head_activation(self, h: int):
        if self.cfg.activation == "softmax":
            return softmax
        alpha = self.alphas[h].tensor()
        return lambda scores: entmax(scores, alpha)

    def fused_weights(self) -> tuple[Tensor, Tensor, Tensor]:
        """Head projections side by side as (D, D) matrices, for one matmul."""
        return (
            tt.concat(self.wq, axis=1),
            tt.concat(self.wk, axis=1),
            tt.concat(self.wv, axis=1),
        )

    def __call__(self, Q: Tensor, K: Tensor, V: Tensor) -> Tensor:
        return multi_head_attend(Q, K, V, self)


def multi_head_attend(Q: Tensor, K: Tensor, V: Tensor, mha: MultiHeadAttention) -> Tensor:
    """Project Q/K/V per head, attend per head, concatenate the outputs."""
    cfg = mha.cfg
    if Q.shape[1] != cfg.model_dim:
        raise ShapeError("multi_head_attend", Q.shape, (cfg.model_dim,))
    outs = []
    for h in range(cfg.n_heads):
        outs.append(
            attend(
                Q @ mha.wq[h], K @ mha.wk[h], V @ mha.wv[h],
                mha.head_activation(h), score_fn=cfg.score_fn,
            )
        )
    return tt.concat(outs, axis=1)


@dataclass
class AlphaReport:
    role: str
    head_index: int
    alpha: float


def report_alphas(encoder) -> list[AlphaReport]:
    """Learned sparsity exponents, one row per (role, head)."""
    rows = []
    for role, mha in (("ring", encoder.ring), ("star", encoder.star)):
        for i, a in enumerate(mha.alphas):
            rows.append(AlphaReport(role, i, a.value))
    return rows
