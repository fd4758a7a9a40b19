"""Retrieval scoring and evaluation metrics, computed from first principles.

Every (comment, article) cross pair is scored by the cosine of the two
pooled embeddings (each document encoded once). The global ranking is
sorted by score descending with a deterministic (comment_id, article_id)
tiebreak. Metrics depend only on the ordering and the gold labels; tied
scores use the mid-rank convention inside AUC only.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .config import DEFAULT_R_VALUES
from .siamese import TrainedModel, embed_tokens


class MetricError(ValueError):
    """Raised when a metric is undefined for the given input."""


@dataclass
class RetrievalEntry:
    comment_id: str
    article_id: str
    score: float
    relevant: bool


@dataclass
class RankedRetrieval:
    entries: list[RetrievalEntry]

    def __post_init__(self):
        scores = [e.score for e in self.entries]
        if any(a < b for a, b in zip(scores, scores[1:])):
            raise MetricError("entries must be sorted by score descending")

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def labels(self) -> np.ndarray:
        return np.array([e.relevant for e in self.entries], dtype=bool)

    @property
    def scores(self) -> np.ndarray:
        return np.array([e.score for e in self.entries], dtype=np.float64)

    @classmethod
    def from_scored_pairs(cls, scored: Iterable[tuple[str, str, float]],
                          gold: Iterable[tuple[str, str]]) -> "RankedRetrieval":
        gold_set = set(gold)
        entries = [
            RetrievalEntry(cid, aid, float(s), (cid, aid) in gold_set)
            for cid, aid, s in scored
        ]
        entries.sort(key=lambda e: (-e.score, e.comment_id, e.article_id))
        return cls(entries)


Document = tuple[str, Sequence[int]]


def score_all(model: TrainedModel, comments: list[Document], articles: list[Document],
              gold: Iterable[tuple[str, str]]) -> RankedRetrieval:
    """Cosine-score the full comment x article cross product.

    Embeddings are computed once per document, then combined; no gradient
    graph is built.
    """
    if not comments or not articles:
        raise MetricError("score_all needs at least one comment and one article")
    comment_vecs = np.stack([embed_tokens(list(ids), model).data for _, ids in comments])
    article_vecs = np.stack([embed_tokens(list(ids), model).data for _, ids in articles])
    cn = comment_vecs / (np.linalg.norm(comment_vecs, axis=1, keepdims=True) + 1e-12)
    an = article_vecs / (np.linalg.norm(article_vecs, axis=1, keepdims=True) + 1e-12)
    sim = cn @ an.T
    scored = [
        (comments[i][0], articles[j][0], float(sim[i, j]))
        for i in range(len(comments))
        for j in range(len(articles))
    ]
    return RankedRetrieval.from_scored_pairs(scored, gold)


def r_precision(ranked: RankedRetrieval, r: int) -> float:
    """Percentage of relevant pairs among the r highest scored."""
    if not 1 <= r <= len(ranked):
        raise MetricError(f"r must lie in [1, {len(ranked)}], got {r}")
    top = ranked.labels[:r]
    return 100.0 * float(top.sum()) / r


def mean_r_precision(ranked: RankedRetrieval, r_values: Sequence[int] = DEFAULT_R_VALUES) -> float:
    if not r_values:
        raise MetricError("r_values must be nonempty")
    return float(np.mean([r_precision(ranked, r) for r in r_values]))


def mean_average_precision(ranked: RankedRetrieval) -> float:
    """Average of precision-at-hit over the single global ranking, as %."""
    labels = ranked.labels
    if not labels.any():
        raise MetricError("mean_average_precision undefined without relevant pairs")
    hits = np.flatnonzero(labels)
    precisions = [(i + 1) / (pos + 1) for i, pos in enumerate(hits)]
    return 100.0 * float(np.mean(precisions))


def mean_average_precision_per_article(ranked: RankedRetrieval) -> float:
    """AP of each article's own comment ranking, averaged over articles
    that have at least one relevant pair."""
    groups: dict[str, list[bool]] = {}
    for e in ranked.entries:
        groups.setdefault(e.article_id, []).append(e.relevant)
    aps = []
    for article_id in sorted(groups):
        labels = np.array(groups[article_id], dtype=bool)
        if not labels.any():
            continue
        hits = np.flatnonzero(labels)
        aps.append(np.mean([(i + 1) / (pos + 1) for i, pos in enumerate(hits)]))
    if not aps:
        raise MetricError("per-article mean average precision undefined without relevant pairs")
    return 100.0 * float(np.mean(aps))


def auc_roc(ranked: RankedRetrieval) -> float:
    """Mann-Whitney statistic: P(relevant outscores irrelevant), ties 1/2."""
    labels = ranked.labels
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricError("auc_roc undefined with a single class")
    scores = ranked.scores
    order = np.argsort(scores, kind="stable")
    sorted_scores = scores[order]
    ranks = np.empty(len(scores), dtype=np.float64)
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0  # mid-rank, 1-based
        i = j + 1
    rank_sum_pos = float(ranks[labels].sum())
    return (rank_sum_pos - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


@dataclass
class ThresholdResult:
    tau: float
    retrieved: list[RetrievalEntry]
    tp: int
    fp: int
    fn: int
    tn: int

    def counts(self) -> dict[str, int]:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn}


def retrieve_by_threshold(ranked: RankedRetrieval, tau: float) -> ThresholdResult:
    """All pairs scoring at least tau, plus confusion counts against gold."""
    if not -1.0 <= tau <= 1.0:
        raise MetricError(f"tau must lie in [-1, 1], got {tau}")
    retrieved = [e for e in ranked.entries if e.score >= tau]
    tp = sum(1 for e in retrieved if e.relevant)
    fp = len(retrieved) - tp
    fn = sum(1 for e in ranked.entries if e.relevant) - tp
    tn = len(ranked) - tp - fp - fn
    return ThresholdResult(tau, retrieved, tp, fp, fn, tn)


@dataclass
class MetricsReport:
    r_precision: dict[int, float]
    mean_r_precision: float
    map_global: float
    map_per_article: float
    auc_roc: float
    n_pairs: int
    n_relevant: int

    def to_dict(self) -> dict:
        return {
            "r_precision": {str(r): v for r, v in self.r_precision.items()},
            "mean_r_precision": self.mean_r_precision,
            "map_global": self.map_global,
            "map_per_article": self.map_per_article,
            "auc_roc": self.auc_roc,
            "n_pairs": self.n_pairs,
            "n_relevant": self.n_relevant,
        }


def metrics_report(ranked: RankedRetrieval,
                   r_values: Sequence[int] = DEFAULT_R_VALUES) -> MetricsReport:
    usable = [r for r in r_values if r <= len(ranked)]
    if not usable:
        raise MetricError("no r value fits the ranking length")
    per_r = {r: r_precision(ranked, r) for r in usable}
    return MetricsReport(
        r_precision=per_r,
        mean_r_precision=float(np.mean(list(per_r.values()))),
        map_global=mean_average_precision(ranked),
        map_per_article=mean_average_precision_per_article(ranked),
        auc_roc=auc_roc(ranked),
        n_pairs=len(ranked),
        n_relevant=int(ranked.labels.sum()),
    )
