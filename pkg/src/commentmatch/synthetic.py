"""Synthetic article-comment corpora with known ground-truth relevance.

Articles draw tokens from a mixture of one to three topic word
distributions; each paired comment draws from exactly one of its article's
topics, so comments cover only part of what their article discusses. A
Zipfian background is blended into every distribution so common words
appear everywhere. On top of the topical signal, each article owns a few
reserved "entity" tokens that it mentions repeatedly and that its comments
usually mention once, mirroring how real comments share links and names
with the article they react to; this is what makes the generating pairing
itself recoverable rather than just the topic. Set
entity_tokens_per_article = 0 for the purely topical process.

Generation is deterministic per (spec, seed): every article derives its
own child seed, so articles could be generated independently.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import RunConfig
from .data import CorpusRecord


class CorpusSpecError(ValueError):
    """Raised when a generator spec violates its invariants."""


class CorpusSignalError(ValueError):
    """Raised when the generated corpus fails the learnability floor."""


@dataclass
class TopicModelSpec:
    n_topics: int = 20
    vocab_size: int = 5000
    article_length: tuple[int, int] = (200, 400)
    comment_length: tuple[int, int] = (8, 20)
    topics_per_article: tuple[int, int] = (1, 3)
    concentration: float = 0.04
    background_mix: float = 0.15
    zipf_exponent: float = 1.1
    entity_tokens_per_article: int = 2
    comment_entity_prob: float = 0.85
    article_entity_mentions: int = 8
    seed: int = 13

    def validate(self, n_articles: int) -> "TopicModelSpec":
        if self.n_topics < 1 or self.vocab_size < 2:
            raise CorpusSpecError("need at least one topic and two vocabulary words")
        if not self.comment_length[1] < self.article_length[0]:
            raise CorpusSpecError("comments must be strictly shorter than articles")
        if self.comment_length[0] < 1 or self.article_length[0] < 1:
            raise CorpusSpecError("lengths must be positive")
        if not 1 <= self.topics_per_article[0] <= self.topics_per_article[1] <= 3:
            raise CorpusSpecError("topics_per_article must lie inside [1, 3]")
        reserved = n_articles * self.entity_tokens_per_article
        if self.entity_tokens_per_article and self.vocab_size - reserved < 10 * self.n_topics:
            raise CorpusSpecError(
                "vocab too small for entity reservation: "
                f"{reserved} reserved of {self.vocab_size}"
            )
        return self


def spec_from_config(cfg: RunConfig) -> TopicModelSpec:
    from .config import seed_for

    return TopicModelSpec(
        n_topics=cfg.n_topics,
        vocab_size=cfg.vocab_size,
        article_length=tuple(cfg.article_length),
        comment_length=tuple(cfg.comment_length),
        topics_per_article=tuple(cfg.topics_per_article),
        concentration=cfg.concentration,
        background_mix=cfg.background_mix,
        zipf_exponent=cfg.zipf_exponent,
        entity_tokens_per_article=cfg.entity_tokens_per_article,
        comment_entity_prob=cfg.comment_entity_prob,
        article_entity_mentions=cfg.article_entity_mentions,
        seed=seed_for(cfg.seed, "corpus"),
    )


@dataclass
class SyntheticCorpus:
    records: list[CorpusRecord]
    gold: list[tuple[str, str]]
    n_articles: int
    n_comments: int
    signal_fraction: float = float("nan")
    stats: dict = field(default_factory=dict)


def _word(i: int, width: int) -> str:
    return f"w{i:0{width}d}"


def generate(spec: TopicModelSpec, n_articles: int, comments_per_article: int,
             check_signal: bool = True, signal_floor: float = 0.8) -> SyntheticCorpus:
    """Sample a corpus plus its gold pairing, deterministically per seed."""
    if n_articles < 2:
        raise CorpusSpecError("need at least two articles")
    if comments_per_article < 1:
        raise CorpusSpecError("need at least one comment per article")
    spec.validate(n_articles)

    V = spec.vocab_size
    width = len(str(V - 1))
    reserved = n_articles * spec.entity_tokens_per_article
    n_plain = V - reserved

    topic_rng = np.random.default_rng(np.random.SeedSequence((spec.seed, 100)))
    topics = topic_rng.dirichlet(np.full(n_plain, spec.concentration), size=spec.n_topics)
    background = 1.0 / np.arange(1, n_plain + 1) ** spec.zipf_exponent
    background /= background.sum()
    blended = (1.0 - spec.background_mix) * topics + spec.background_mix * background

    id_width = len(str(n_articles - 1))
    articles: list[CorpusRecord] = []
    comments: list[CorpusRecord] = []
    gold: list[tuple[str, str]] = []

    for a in range(n_articles):
        rng = np.random.default_rng(np.random.SeedSequence((spec.seed, 101, a)))
        article_id = f"a{a:0{id_width}d}"
        k = int(rng.integers(spec.topics_per_article[0], spec.topics_per_article[1] + 1))
        article_topics = rng.choice(spec.n_topics, size=k, replace=False)
        mixture = blended[article_topics].mean(axis=0)
        length = int(rng.integers(spec.article_length[0], spec.article_length[1] + 1))
        token_ids = rng.choice(n_plain, size=length, p=mixture)

        entity_ids = [n_plain + a * spec.entity_tokens_per_article + e
                      for e in range(spec.entity_tokens_per_article)]
        if entity_ids:
            mentions = min(length, spec.article_entity_mentions * len(entity_ids))
            slots = rng.choice(length, size=mentions, replace=False)
            for m, slot in enumerate(slots):
                token_ids[slot] = entity_ids[m % len(entity_ids)]
        articles.append(CorpusRecord(
            id=article_id,
            text=" ".join(_word(t, width) for t in token_ids),
            article_id=article_id,
            kind="article",
        ))

        for c in range(comments_per_article):
            comment_id = f"c{a:0{id_width}d}x{c}"
            topic = int(rng.choice(article_topics))
            clen = int(rng.integers(spec.comment_length[0], spec.comment_length[1] + 1))
            ctokens = rng.choice(n_plain, size=clen, p=blended[topic])
            if entity_ids and rng.random() < spec.comment_entity_prob:
                ctokens[int(rng.integers(clen))] = int(rng.choice(entity_ids))
            comments.append(CorpusRecord(
                id=comment_id,
                text=" ".join(_word(t, width) for t in ctokens),
                article_id=article_id,
                kind="comment",
            ))
            gold.append((comment_id, article_id))

    corpus = SyntheticCorpus(
        records=articles + comments,
        gold=gold,
        n_articles=n_articles,
        n_comments=len(comments),
    )
    corpus.signal_fraction = _topical_signal_fraction(corpus, V, width, spec.seed)
    corpus.stats = {
        "vocab_size": V,
        "reserved_entity_ids": reserved,
        "signal_fraction": corpus.signal_fraction,
        "chance_baseline_percent": chance_baseline(corpus),
    }
    if check_signal and corpus.signal_fraction < signal_floor:
        raise CorpusSignalError(
            f"bag-of-words signal {corpus.signal_fraction:.3f} below floor {signal_floor}"
        )
    return corpus


def _bow(text: str, vocab_size: int) -> np.ndarray:
    ids = [int(tok[1:]) for tok in text.split()]
    return np.bincount(ids, minlength=vocab_size).astype(np.float64)


def _topical_signal_fraction(corpus: SyntheticCorpus, vocab_size: int, width: int,
                             seed: int) -> float:
    """Fraction of comments closer (bag-of-words cosine) to their own
    article than to a random other article."""
    rng = np.random.default_rng(np.random.SeedSequence((seed, 102)))
    articles = [r for r in corpus.records if r.kind == "article"]
    by_id = {r.id: i for i, r in enumerate(articles)}
    art_vecs = np.stack([_bow(r.text, vocab_size) for r in articles])
    art_unit = art_vecs / (np.linalg.norm(art_vecs, axis=1, keepdims=True) + 1e-12)
    wins = 0
    comments = [r for r in corpus.records if r.kind == "comment"]
    for r in comments:
        v = _bow(r.text, vocab_size)
        v /= np.linalg.norm(v) + 1e-12
        own = by_id[r.article_id]
        other = int(rng.integers(len(articles) - 1))
        if other >= own:
            other += 1
        if v @ art_unit[own] > v @ art_unit[other]:
            wins += 1
    return wins / len(comments)


def chance_baseline(corpus: SyntheticCorpus) -> float:
    """Expected precision (%) of a uniformly random ranking at any depth:
    gold pairs over cross pairs."""
    if corpus.n_articles == 0 or corpus.n_comments == 0:
        raise CorpusSpecError("chance_baseline needs a nonempty corpus")
    return 100.0 * len(corpus.gold) / (corpus.n_comments * corpus.n_articles)
