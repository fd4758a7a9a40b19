"""Run configuration: every hyperparameter in one validated dataclass.

A config file is JSON holding any subset of the fields below; unknown keys
are rejected. All randomness derives from the single root seed through
fixed per-component offsets (SEED_OFFSETS), so a (config, seed) pair pins
every output bit.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields

DEFAULT_R_VALUES = (50, 100, 200, 500, 1000, 2000, 3000)

SEED_OFFSETS = {
    "corpus": 1,
    "model_init": 2,
    "batch_shuffle": 3,
    "uniformity": 4,
    "expsum": 5,
    "scaling": 6,
    "signal_check": 7,
}


def seed_for(root_seed: int, component: str) -> int:
    return int(root_seed) + SEED_OFFSETS[component]


class ConfigFileError(ValueError):
    """Raised for unknown keys or out-of-domain values in a config file."""


@dataclass
class RunConfig:
    # encoder
    model_dim: int = 300
    ring_heads: int = 6
    star_heads: int = 6
    window: int = 3
    iterations: int = 2
    alpha_init: float = 1.5
    score_fn: str = "cosine"
    activation: str = "entmax"
    context_reading: str = "context_as_keys"
    post_update: str = "none"
    position_embedding: str = "none"
    max_positions: int = 512
    # training
    margin: float = 0.2
    mining_epsilon: float = 0.1
    batch_size: int = 32
    epochs: int = 10
    learning_rate: float = 1e-3
    momentum: float = 0.9
    max_article_tokens: int = 512
    train_embeddings: bool | None = None  # None: trainable unless loaded from a file
    embedding_file: str | None = None
    # synthetic corpus
    n_topics: int = 20
    vocab_size: int = 5000
    n_articles: int = 200
    comments_per_article: int = 2
    article_length: list[int] = field(default_factory=lambda: [200, 400])
    comment_length: list[int] = field(default_factory=lambda: [8, 20])
    topics_per_article: list[int] = field(default_factory=lambda: [1, 3])
    concentration: float = 0.04
    background_mix: float = 0.15
    zipf_exponent: float = 1.1
    entity_tokens_per_article: int = 2
    comment_entity_prob: float = 0.85
    article_entity_mentions: int = 8
    # evaluation
    r_values: list[int] = field(default_factory=lambda: list(DEFAULT_R_VALUES))
    retrieval_threshold: float = 0.7
    # root seed for everything
    seed: int = 13

    def validate(self) -> "RunConfig":
        c = self
        checks = [
            (c.model_dim > 0, "model_dim must be positive"),
            (c.ring_heads > 0 and c.model_dim % c.ring_heads == 0,
             "ring_heads must divide model_dim"),
            (c.star_heads > 0 and c.model_dim % c.star_heads == 0,
             "star_heads must divide model_dim"),
            (c.window >= 0, "window must be >= 0"),
            (c.iterations >= 1, "iterations must be >= 1"),
            (1.0 < c.alpha_init < 2.0, "alpha_init must lie in (1, 2)"),
            (c.score_fn in ("cosine", "scaled_dot"), "score_fn must be cosine or scaled_dot"),
            (c.activation in ("entmax", "softmax"), "activation must be entmax or softmax"),
            (c.context_reading in ("context_as_keys", "context_as_query"),
             "context_reading must be context_as_keys or context_as_query"),
            (c.post_update in ("none", "relu"), "post_update must be none or relu"),
            (c.position_embedding in ("none", "learned"),
             "position_embedding must be none or learned"),
            (c.max_positions >= 1, "max_positions must be >= 1"),
            (c.margin >= 0.0, "margin must be >= 0"),
            (c.mining_epsilon >= 0.0, "mining_epsilon must be >= 0"),
            (c.batch_size >= 2, "batch_size must be >= 2"),
            (c.epochs >= 1, "epochs must be >= 1"),
            (c.learning_rate > 0.0, "learning_rate must be positive"),
            (0.0 <= c.momentum < 1.0, "momentum must lie in [0, 1)"),
            (c.max_article_tokens >= 1, "max_article_tokens must be >= 1"),
            (c.n_topics >= 1, "n_topics must be >= 1"),
            (c.vocab_size >= 2, "vocab_size must be >= 2"),
            (c.n_articles >= 2, "n_articles must be >= 2"),
            (c.comments_per_article >= 1, "comments_per_article must be >= 1"),
            (len(c.article_length) == 2 and 0 < c.article_length[0] <= c.article_length[1],
             "article_length must be an increasing positive pair"),
            (len(c.comment_length) == 2 and 0 < c.comment_length[0] <= c.comment_length[1],
             "comment_length must be an increasing positive pair"),
            (c.comment_length[1] < c.article_length[0] if len(c.comment_length) == 2
             and len(c.article_length) == 2 else False,
             "comments must be strictly shorter than articles"),
            (len(c.topics_per_article) == 2
             and 1 <= c.topics_per_article[0] <= c.topics_per_article[1] <= 3,
             "topics_per_article must be a pair inside [1, 3]"),
            (c.concentration > 0.0, "concentration must be positive"),
            (0.0 <= c.background_mix < 1.0, "background_mix must lie in [0, 1)"),
            (c.zipf_exponent > 0.0, "zipf_exponent must be positive"),
            (c.entity_tokens_per_article >= 0, "entity_tokens_per_article must be >= 0"),
            (0.0 <= c.comment_entity_prob <= 1.0, "comment_entity_prob must lie in [0, 1]"),
            (c.article_entity_mentions >= 1, "article_entity_mentions must be >= 1"),
            (len(c.r_values) >= 1 and all(r >= 1 for r in c.r_values),
             "r_values must be positive"),
            (-1.0 <= c.retrieval_threshold <= 1.0, "retrieval_threshold must lie in [-1, 1]"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigFileError(message)
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    def config_hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    @classmethod
    def from_dict(cls, obj: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ConfigFileError(f"unknown config keys: {sorted(unknown)}")
        return cls(**obj).validate()

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        with open(path, "r", encoding="utf-8") as fh:
            try:
                obj = json.load(fh)
            except json.JSONDecodeError as e:
                raise ConfigFileError(f"{path}: invalid JSON ({e.msg})") from None
        if not isinstance(obj, dict):
            raise ConfigFileError(f"{path}: config must be a JSON object")
        return cls.from_dict(obj)
