"""Siamese training: shared-encoder pair embedding, triplet loss, mining.

Both sides of every pair go through the same parameter set, so a comment
and an article land in one latent space. Training minimizes a hinge on the
gap between anchor-positive and anchor-negative squared distances, with
negatives mined per batch: a non-matching comment is admissible if its
similarity to the anchor exceeds the anchor's weakest positive similarity
minus epsilon, and each anchor takes its hardest admissible negative
(falling back to the globally most similar non-match).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from . import tensor as tt
from .attention import MultiHeadConfig
from .config import RunConfig, seed_for
from .data import CorpusRecord, Vocabulary, tokenize
from .star import StarEncoder, StarEncoderConfig
from .tensor import Tape, Tensor

MODEL_FORMAT_VERSION = 1


class MiningError(ValueError):
    """Raised when a batch admits no negatives (single-article batch)."""


class TrainingDataError(ValueError):
    """Raised when the corpus violates training preconditions."""


@dataclass
class DocumentPair:
    pair_id: str
    article_id: str
    comment_tokens: list[int]
    article_tokens: list[int]


@dataclass
class EmbeddingTable:
    vocab_size: int
    dim: int
    matrix: Tensor
    trainable: bool
    token_to_index: dict[str, int]
    oov_index: int = 0

    @classmethod
    def random(cls, vocab: Vocabulary, dim: int, rng: np.random.Generator,
               trainable: bool = True) -> "EmbeddingTable":
        matrix = Tensor(rng.uniform(-0.5, 0.5, (len(vocab), dim)), requires_grad=trainable)
        return cls(len(vocab), dim, matrix, trainable, dict(vocab.index), vocab.oov_index)

    @classmethod
    def from_word_vectors(cls, tokens: list[str], vectors: np.ndarray,
                          trainable: bool = False) -> "EmbeddingTable":
        """Pretrained vectors; an out-of-vocabulary row (the mean vector) is
        prepended so unknown tokens stay representable."""
        oov_row = vectors.mean(axis=0, keepdims=True)
        matrix = Tensor(np.vstack([oov_row, vectors]), requires_grad=trainable)
        index = {t: i + 1 for i, t in enumerate(tokens)}
        return cls(matrix.shape[0], matrix.shape[1], matrix, trainable, index, 0)

    def lookup(self, ids: list[int]) -> Tensor:
        if min(ids) < 0 or max(ids) >= self.vocab_size:
            raise TrainingDataError("token id outside vocabulary range")
        return tt.embedding_lookup(self.matrix, ids)

    def encode_tokens(self, tokens: list[str]) -> list[int]:
        return [self.token_to_index.get(t, self.oov_index) for t in tokens]


@dataclass
class TrainedModel:
    embedding: EmbeddingTable
    encoder: StarEncoder
    config: RunConfig
    metadata: dict = field(default_factory=dict)

    def parameters(self) -> list[Tensor]:
        params = self.encoder.parameters()
        if self.embedding.trainable:
            params.append(self.embedding.matrix)
        return params


def encoder_config_from(cfg: RunConfig) -> StarEncoderConfig:
    return StarEncoderConfig(
        model_dim=cfg.model_dim,
        window=cfg.window,
        iterations=cfg.iterations,
        ring=MultiHeadConfig(cfg.model_dim, cfg.ring_heads, cfg.score_fn, cfg.activation,
                             cfg.alpha_init),
        star=MultiHeadConfig(cfg.model_dim, cfg.star_heads, cfg.score_fn, cfg.activation,
                             cfg.alpha_init),
        context_reading=cfg.context_reading,
        post_update=cfg.post_update,
        position_embedding=cfg.position_embedding,
        max_positions=cfg.max_positions,
    )


def build_model(cfg: RunConfig, vocab: Vocabulary | None = None,
                pretrained: tuple[list[str], np.ndarray] | None = None) -> TrainedModel:
    rng = np.random.default_rng(seed_for(cfg.seed, "model_init"))
    encoder = StarEncoder(encoder_config_from(cfg), rng)
    if pretrained is not None:
        tokens, vectors = pretrained
        if vectors.shape[1] != cfg.model_dim:
            raise TrainingDataError(
                f"word vectors have dimension {vectors.shape[1]}, config wants {cfg.model_dim}"
            )
        trainable = bool(cfg.train_embeddings) if cfg.train_embeddings is not None else False
        table = EmbeddingTable.from_word_vectors(tokens, vectors, trainable)
    else:
        if vocab is None:
            raise TrainingDataError("either a vocabulary or pretrained vectors is required")
        trainable = True if cfg.train_embeddings is None else bool(cfg.train_embeddings)
        table = EmbeddingTable.random(vocab, cfg.model_dim, rng, trainable)
    return TrainedModel(embedding=table, encoder=encoder, config=cfg,
                        metadata={"seed": cfg.seed})


def pairs_from_records(records: list[CorpusRecord], table: EmbeddingTable,
                       max_article_tokens: int) -> list[DocumentPair]:
    """Tokenize and link comment/article records into training pairs.

    Articles are truncated to max_article_tokens; this is the documented
    desk-scale preprocessing step.
    """
    article_tokens: dict[str, list[int]] = {}
    for r in records:
        if r.kind == "article":
            ids = table.encode_tokens(tokenize(r.text))[:max_article_tokens]
            article_tokens[r.id] = ids
    pairs = []
    for r in records:
        if r.kind != "comment":
            continue
        comment_ids = table.encode_tokens(tokenize(r.text))
        art = article_tokens.get(r.article_id)
        if art is None:
            raise TrainingDataError(f"comment {r.id!r} references unknown article")
        if not comment_ids or not art:
            raise TrainingDataError(f"pair {r.id!r}: empty token sequence")
        pairs.append(DocumentPair(r.id, r.article_id, comment_ids, art))
    return pairs


def embed_tokens(token_ids: list[int], model: TrainedModel) -> Tensor:
    if not token_ids:
        raise TrainingDataError("cannot embed an empty token sequence")
    return model.encoder.encode(model.embedding.lookup(token_ids)).pooled


def embed_pair(pair: DocumentPair, model: TrainedModel) -> tuple[Tensor, Tensor]:
    """Pooled (comment, article) vectors from the shared encoder."""
    f_t = embed_tokens(pair.comment_tokens, model)
    f_a = embed_tokens(pair.article_tokens, model)
    return f_t, f_a


@dataclass
class TripletBatch:
    anchors: Tensor     # (n, D) article embeddings
    positives: Tensor   # (n, D) matched comment embeddings
    negatives: Tensor   # (n, D) mined non-matching comment embeddings
    margin: float
    negative_indices: list[int] = field(default_factory=list)

    def __post_init__(self):
        if not (self.anchors.shape == self.positives.shape == self.negatives.shape):
            raise tt.ShapeError("TripletBatch", self.anchors.shape, self.positives.shape,
                                self.negatives.shape)
        if self.margin < 0.0:
            raise ValueError("margin must be >= 0")


def triplet_loss(batch: TripletBatch) -> Tensor:
    """Mean hinge on squared-distance gaps: zero only when every negative
    sits at least margin farther from its anchor than the positive."""
    d_pos = tt.dot_rows(batch.anchors - batch.positives, batch.anchors - batch.positives)
    d_neg = tt.dot_rows(batch.anchors - batch.negatives, batch.anchors - batch.negatives)
    return tt.maximum(d_pos - d_neg + batch.margin, 0.0).mean()


def _unit_rows(m: np.ndarray) -> np.ndarray:
    return m / (np.linalg.norm(m, axis=1, keepdims=True) + 1e-12)


def mine_multisimilarity(anchors: Tensor, comments: Tensor, article_ids: list[str],
                         epsilon: float, margin: float) -> TripletBatch:
    """Pick one hard negative comment per (anchor, positive) pair.

    Selection runs on detached values; the returned batch references rows
    of the input tensors so gradients flow to every mined member.
    """
    ids = list(article_ids)
    n = len(ids)
    if anchors.shape[0] != n or comments.shape[0] != n:
        raise tt.ShapeError("mine_multisimilarity", anchors.shape, comments.shape, (n,))
    if len(set(ids)) < 2:
        raise MiningError("mining needs at least two distinct articles in the batch")
    sim = _unit_rows(anchors.data) @ _unit_rows(comments.data).T

    chosen: list[int] = []
    for i in range(n):
        own = [j for j in range(n) if ids[j] == ids[i]]
        others = [j for j in range(n) if ids[j] != ids[i]]
        weakest_positive = min(sim[i, j] for j in own)
        admissible = [j for j in others if sim[i, j] > weakest_positive - epsilon]
        pool = admissible if admissible else others
        chosen.append(max(pool, key=lambda j: (sim[i, j], -j)))

    negatives = tt.concat([comments[j:j + 1] for j in chosen], axis=0)
    return TripletBatch(anchors, comments, negatives, margin, negative_indices=chosen)


class MomentumSGD:
    """Plain gradient descent with momentum; updates happen between tapes."""

    def __init__(self, params: list[Tensor], learning_rate: float, momentum: float):
        self.params = params
        self.learning_rate = learning_rate
        self.momentum = momentum
        self._velocity = [np.zeros_like(p.data) for p in params]

    def step(self) -> None:
        for p, v in zip(self.params, self._velocity):
            if p.grad is None:
                continue
            v *= self.momentum
            v += p.grad
            p.data -= self.learning_rate * v

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None


@dataclass
class TrainingHistory:
    epoch_losses: list[float] = field(default_factory=list)


def train(corpus: list[DocumentPair], cfg: RunConfig, model: TrainedModel) -> TrainingHistory:
    """Shuffled-batch epochs: embed pairs, mine, hinge, momentum update."""
    if len({p.article_id for p in corpus}) < 2:
        raise TrainingDataError("training needs at least two distinct articles")
    for p in corpus:
        if not p.comment_tokens or not p.article_tokens:
            raise TrainingDataError(f"pair {p.pair_id!r}: empty token sequence")
        for ids in (p.comment_tokens, p.article_tokens):
            if min(ids) < 0 or max(ids) >= model.embedding.vocab_size:
                raise TrainingDataError(f"pair {p.pair_id!r}: token id out of range")

    shuffle_rng = np.random.default_rng(seed_for(cfg.seed, "batch_shuffle"))
    optimizer = MomentumSGD(model.parameters(), cfg.learning_rate, cfg.momentum)
    history = TrainingHistory()

    for _ in range(cfg.epochs):
        order = shuffle_rng.permutation(len(corpus))
        batches = [order[i:i + cfg.batch_size] for i in range(0, len(order), cfg.batch_size)]
        if len(batches) > 1 and len(batches[-1]) < 2:
            tail = batches.pop()
            batches[-1] = np.concatenate([batches[-1], tail])
        epoch_losses = []
        for batch in batches:
            pairs = [corpus[int(i)] for i in batch]
            with Tape() as tape:
                f_t, f_a = zip(*(embed_pair(p, model) for p in pairs))
                anchors = tt.stack(list(f_a), axis=0)
                comments = tt.stack(list(f_t), axis=0)
                triplets = mine_multisimilarity(
                    anchors, comments, [p.article_id for p in pairs],
                    cfg.mining_epsilon, cfg.margin,
                )
                loss = triplet_loss(triplets)
            tape.backward(loss)
            optimizer.step()
            optimizer.zero_grad()
            epoch_losses.append(loss.item())
        history.epoch_losses.append(float(np.mean(epoch_losses)))

    model.metadata.update({
        "epochs": cfg.epochs,
        "margin": cfg.margin,
        "epoch_losses": history.epoch_losses,
    })
    return history


def save_model(model: TrainedModel, path) -> None:
    """Single npz archive: a JSON header plus every parameter array."""
    enc = model.encoder
    vocab_tokens = [None] * model.embedding.vocab_size
    for tok, i in model.embedding.token_to_index.items():
        vocab_tokens[i] = tok
    if vocab_tokens[model.embedding.oov_index] is None:
        vocab_tokens[model.embedding.oov_index] = "<unk>"
    meta = {
        "format_version": MODEL_FORMAT_VERSION,
        "package_version": __version__,
        "config": model.config.to_dict(),
        "embedding": {
            "trainable": model.embedding.trainable,
            "oov_index": model.embedding.oov_index,
            "vocab": vocab_tokens,
        },
        "metadata": model.metadata,
    }
    arrays = {"embedding_matrix": model.embedding.matrix.data}
    for role, mha in (("ring", enc.ring), ("star", enc.star)):
        for name, mats in (("wq", mha.wq), ("wk", mha.wk), ("wv", mha.wv)):
            for h, w in enumerate(mats):
                arrays[f"{role}_{name}_{h}"] = w.data
        if mha.alphas:
            arrays[f"{role}_alpha_raw"] = np.array([float(a.raw.data) for a in mha.alphas])
    if enc.positions is not None:
        arrays["positions"] = enc.positions.data
    np.savez(path, __meta__=np.frombuffer(json.dumps(meta).encode("utf-8"), dtype=np.uint8),
             **arrays)


def load_model(path) -> TrainedModel:
    with np.load(path) as archive:
        meta = json.loads(bytes(archive["__meta__"]).decode("utf-8"))
        if meta.get("format_version") != MODEL_FORMAT_VERSION:
            raise ValueError(f"unsupported model format: {meta.get('format_version')!r}")
        cfg = RunConfig.from_dict(meta["config"])
        model = build_model(cfg, vocab=Vocabulary.from_tokens(meta["embedding"]["vocab"]))
        model.embedding.trainable = meta["embedding"]["trainable"]
        model.embedding.matrix = Tensor(archive["embedding_matrix"],
                                        requires_grad=model.embedding.trainable)
        model.embedding.oov_index = meta["embedding"]["oov_index"]
        enc = model.encoder
        for role, mha in (("ring", enc.ring), ("star", enc.star)):
            for name, mats in (("wq", mha.wq), ("wk", mha.wk), ("wv", mha.wv)):
                for h, w in enumerate(mats):
                    w.data[:] = archive[f"{role}_{name}_{h}"]
            if mha.alphas:
                raws = archive[f"{role}_alpha_raw"]
                for a, value in zip(mha.alphas, raws):
                    a.raw.data[...] = value
        if enc.positions is not None:
            enc.positions.data[:] = archive["positions"]
        model.metadata = meta["metadata"]
    return model
