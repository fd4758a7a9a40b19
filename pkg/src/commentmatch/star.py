"""Star-topology sequence encoder: windowed ring updates plus a relay node.

Token states exchange messages inside a sliding window of radius c while a
relay node, initialized to the mean embedding, attends over the whole
sequence each iteration; this keeps the per-iteration cost linear in the
sequence length. The pooled representation is the elementwise max over
token states averaged with the relay.

The ring update is computed for all positions at once: for each window
offset the aligned score column is built by a row-wise dot of shifted
slices, and out-of-range positions receive a mask score low enough that
every activation in the family assigns them exactly zero weight. That
makes the vectorized path arithmetically identical to clipping the window
at the sequence boundary.

Two readings of the ring update's argument order are supported. The
default treats each token state as the query over its context rows (window
plus relay) as keys and values. The alternative "context_as_query" reading
uses the context as queries against the single token state and selects the
output row at the token's own slot; with one key/value row the attention
weights collapse to 1, so that reading degenerates to a per-token value
projection. It is kept behind a switch so the ambiguity stays testable.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import tensor as tt
from .activations import MASK_SCORE, softmax
from .attention import (
    ConfigError,
    MultiHeadAttention,
    MultiHeadConfig,
    attend,
    multi_head_attend,
    normalize_rows,
)
from .tensor import ShapeError, Tensor

CONTEXT_READINGS = ("context_as_keys", "context_as_query")
POST_UPDATES = ("none", "relu")
POSITION_MODES = ("none", "learned")


class EmptySequenceError(ValueError):
    """Raised when an empty token sequence reaches the encoder."""


@dataclass
class StarEncoderConfig:
    model_dim: int = 300
    window: int = 3
    iterations: int = 2
    ring: MultiHeadConfig = field(default_factory=lambda: MultiHeadConfig(300, 6))
    star: MultiHeadConfig = field(default_factory=lambda: MultiHeadConfig(300, 6))
    context_reading: str = "context_as_keys"
    post_update: str = "none"
    position_embedding: str = "none"
    max_positions: int = 512

    def __post_init__(self):
        if self.window < 0:
            raise ConfigError("window radius must be >= 0")
        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1")
        if self.ring.model_dim != self.model_dim or self.star.model_dim != self.model_dim:
            raise ConfigError("ring and star head configs must share model_dim")
        if self.context_reading not in CONTEXT_READINGS:
            raise ConfigError(f"context_reading must be one of {CONTEXT_READINGS}")
        if self.post_update not in POST_UPDATES:
            raise ConfigError(f"post_update must be one of {POST_UPDATES}")
        if self.position_embedding not in POSITION_MODES:
            raise ConfigError(f"position_embedding must be one of {POSITION_MODES}")


def default_config(model_dim: int = 300, ring_heads: int = 6, star_heads: int = 6,
                   **overrides) -> StarEncoderConfig:
    score_fn = overrides.pop("score_fn", "cosine")
    activation = overrides.pop("activation", "entmax")
    alpha_init = overrides.pop("alpha_init", 1.5)
    return StarEncoderConfig(
        model_dim=model_dim,
        ring=MultiHeadConfig(model_dim, ring_heads, score_fn, activation, alpha_init),
        star=MultiHeadConfig(model_dim, star_heads, score_fn, activation, alpha_init),
        **overrides,
    )


@dataclass
class EncodedSequence:
    states: Tensor   # (S, D) final token states
    relay: Tensor    # (1, D) final relay state
    pooled: Tensor   # (D,) fixed-length representation


@dataclass
class EncodeTrace:
    initial_relay: Tensor
    relay_per_iteration: list[Tensor]
    states_per_iteration: list[Tensor]


class StarEncoder:
    def __init__(self, config: StarEncoderConfig, rng: np.random.Generator):
        self.config = config
        self.ring = MultiHeadAttention(config.ring, rng)
        self.star = MultiHeadAttention(config.star, rng)
        self.positions: Tensor | None = None
        if config.position_embedding == "learned":
            bound = 1.0 / math.sqrt(config.model_dim)
            self.positions = Tensor(
                rng.uniform(-bound, bound, (config.max_positions, config.model_dim)),
                requires_grad=True,
            )

    def parameters(self) -> list[Tensor]:
        params = self.ring.parameters() + self.star.parameters()
        if self.positions is not None:
            params.append(self.positions)
        return params

    def encode(self, embeddings: Tensor, return_trace: bool = False):
        cfg = self.config
        if embeddings.ndim != 2 or embeddings.shape[1] != cfg.model_dim:
            raise ShapeError("encode", embeddings.shape, (-1, cfg.model_dim))
        S = embeddings.shape[0]
        if S == 0:
            raise EmptySequenceError("encode: cannot encode an empty sequence")
        if self.positions is not None:
            if S > cfg.max_positions:
                raise ShapeError("encode: sequence longer than position table",
                                 embeddings.shape, self.positions.shape)
            embeddings = embeddings + self.positions[:S]

        H = embeddings
        s = embeddings.mean(axis=0, keepdims=True)
        trace = EncodeTrace(initial_relay=s, relay_per_iteration=[], states_per_iteration=[])
        ring_update = (
            self._ring_update_windowed
            if cfg.context_reading == "context_as_keys"
            else self._ring_update_context_query
        )
        for _ in range(cfg.iterations):
            H = ring_update(H, s)
            s = self._relay_update(H, s)
            if cfg.post_update == "relu":
                H, s = tt.relu(H), tt.relu(s)
            trace.states_per_iteration.append(H)
            trace.relay_per_iteration.append(s)

        pooled = (H.max(axis=0) + s.reshape((cfg.model_dim,))) * 0.5
        enc = EncodedSequence(states=H, relay=s, pooled=pooled)
        return (enc, trace) if return_trace else enc

    def _ring_update_windowed(self, H: Tensor, s: Tensor) -> Tensor:
        """All positions at once: query h_i over its window rows plus relay."""
        cfg = self.config
        c = cfg.window
        S = H.shape[0]
        n_heads, hd = cfg.ring.n_heads, cfg.ring.head_dim
        cosine = cfg.ring.score_fn == "cosine"
        wq, wk, wv = self.ring.fused_weights()
        Hq, Hk, Hv = H @ wq, H @ wk, H @ wv
        sk, sv = s @ wk, s @ wv

        outs = []
        for h in range(n_heads):
            cols = slice(h * hd, (h + 1) * hd)
            q, k, v = Hq[:, cols], Hk[:, cols], Hv[:, cols]
            relay_k, relay_v = sk[:, cols], sv[:, cols]
            if cosine:
                q, k, relay_k = normalize_rows(q), normalize_rows(k), normalize_rows(relay_k)

            score_cols = []
            for delta in range(-c, c + 1):
                lo, hi = max(0, -delta), min(S, S - delta)
                if hi <= lo:
                    score_cols.append(Tensor(np.full((S, 1), MASK_SCORE)))
                    continue
                col = tt.dot_rows(q[lo:hi], k[lo + delta:hi + delta])
                parts: list[Tensor] = []
                if lo > 0:
                    parts.append(Tensor(np.full((lo, 1), MASK_SCORE)))
                parts.append(col)
                if S - hi > 0:
                    parts.append(Tensor(np.full((S - hi, 1), MASK_SCORE)))
                score_cols.append(tt.concat(parts, axis=0) if len(parts) > 1 else col)
            score_cols.append(q @ relay_k.T)
            scores = tt.concat(score_cols, axis=1)
            if not cosine:
                scores = scores * (1.0 / math.sqrt(hd))

            weights = self.ring.head_activation(h)(scores)

            pad = Tensor(np.zeros((c, hd))) if c > 0 else None
            v_padded = tt.concat([pad, v, pad], axis=0) if c > 0 else v
            contribs = []
            for j, delta in enumerate(range(-c, c + 1)):
                # out-of-range rows carry weight exactly 0, so the zero pad
                # rows contribute nothing
                contribs.append(weights[:, j:j + 1] * v_padded[c + delta:c + delta + S])
            contribs.append(weights[:, 2 * c + 1:2 * c + 2] @ relay_v)
            outs.append(tt.add_n(contribs))
        return tt.concat(outs, axis=1)

    def _ring_update_context_query(self, H: Tensor, s: Tensor) -> Tensor:
        """Literal alternative reading: context rows as queries, h_i as key/value.

        With a single key/value row every weight is forced to 1, so the
        selected row reduces to the value projection of h_i.
        """
        cfg = self.config
        c, S = cfg.window, H.shape[0]
        rows = []
        for i in range(S):
            lo, hi = max(0, i - c), min(S, i + c + 1)
            context = tt.concat([H[lo:hi], s], axis=0)
            h_i = H[i:i + 1]
            head_rows = []
            for h in range(cfg.ring.n_heads):
                out = attend(
                    context @ self.ring.wq[h],
                    h_i @ self.ring.wk[h],
                    h_i @ self.ring.wv[h],
                    self.ring.head_activation(h),
                    score_fn=cfg.ring.score_fn,
                )
                head_rows.append(out[i - lo:i - lo + 1])
            rows.append(tt.concat(head_rows, axis=1))
        return tt.concat(rows, axis=0)

    def _relay_update(self, H: Tensor, s: Tensor) -> Tensor:
        if self.config.context_reading == "context_as_keys":
            return multi_head_attend(s, H, H, self.star)
        out = multi_head_attend(H, s, s, self.star)
        return out[0:1]


@dataclass
class ScalingRow:
    sequence_length: int
    median_ms_star: float
    median_ms_full: float


def measure_scaling(S_values: list[int], cfg: StarEncoderConfig, repeats: int = 5,
                    seed: int = 0) -> list[ScalingRow]:
    """Forward-pass wall time per sequence length, star encoder vs one full
    attention pass over the S x S score matrix."""
    if sorted(S_values) != list(S_values):
        raise ValueError("measure_scaling: S_values must be sorted ascending")
    rng = np.random.default_rng(seed)
    encoder = StarEncoder(cfg, rng)
    rows = []
    for S in S_values:
        emb = Tensor(rng.standard_normal((S, cfg.model_dim)))
        star_times, full_times = [], []
        encoder.encode(emb)  # warm-up, excluded from timing
        attend(emb, emb, emb, softmax)
        for _ in range(repeats):
            t0 = time.perf_counter()
            encoder.encode(emb)
            star_times.append((time.perf_counter() - t0) * 1e3)
            t0 = time.perf_counter()
            attend(emb, emb, emb, softmax)
            full_times.append((time.perf_counter() - t0) * 1e3)
        rows.append(ScalingRow(S, float(np.median(star_times)), float(np.median(full_times))))
    return rows
