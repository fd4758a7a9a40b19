"""Corpus file formats, tokenization, and vocabulary handling.

Corpora are JSONL, one record per line:
    {"id": str, "text": str, "article_id": str, "kind": "comment"|"article"}
Articles carry their own id in article_id; comments point at the article
they were paired with (the pairing is the gold relevance label). Gold
pairs are a two-column CSV (comment_id, article_id).
"""

from __future__ import annotations

import csv
import json
import re
import string
from dataclasses import dataclass
from pathlib import Path

import numpy as np

TOKENIZER_VERSION = 1
URL_TOKEN = "<url>"
_URL_RE = re.compile(r"(?i)^(?:https?://|www\.)\S+$")
_PUNCT_TABLE = str.maketrans("", "", string.punctuation)

KINDS = ("comment", "article")


class CorpusFormatError(ValueError):
    """Raised when a corpus or gold file violates its documented format."""


def tokenize(text: str) -> list[str]:
    """Lowercased whitespace tokens with punctuation stripped.

    URLs collapse to a single sentinel token, which also round-trips, so
    tokenize(" ".join(tokens)) == tokens for already-clean token lists.
    """
    tokens = []
    for piece in text.split():
        if piece == URL_TOKEN or _URL_RE.match(piece):
            tokens.append(URL_TOKEN)
            continue
        cleaned = piece.translate(_PUNCT_TABLE).lower()
        if cleaned:
            tokens.append(cleaned)
    return tokens


@dataclass
class CorpusRecord:
    id: str
    text: str
    article_id: str
    kind: str


def write_corpus_jsonl(records: list[CorpusRecord], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(
                {"id": r.id, "text": r.text, "article_id": r.article_id, "kind": r.kind},
                ensure_ascii=False, sort_keys=True,
            ))
            fh.write("\n")


def read_corpus_jsonl(path) -> list[CorpusRecord]:
    records = []
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise CorpusFormatError(f"{path}:{lineno}: invalid JSON ({e.msg})") from None
            missing = {"id", "text", "article_id", "kind"} - obj.keys()
            if missing:
                raise CorpusFormatError(f"{path}:{lineno}: missing fields {sorted(missing)}")
            if obj["kind"] not in KINDS:
                raise CorpusFormatError(f"{path}:{lineno}: kind must be one of {KINDS}")
            if obj["id"] in seen:
                raise CorpusFormatError(f"{path}:{lineno}: duplicate id {obj['id']!r}")
            seen.add(obj["id"])
            records.append(CorpusRecord(obj["id"], obj["text"], obj["article_id"], obj["kind"]))
    articles = {r.id for r in records if r.kind == "article"}
    for r in records:
        if r.kind == "article" and r.article_id != r.id:
            raise CorpusFormatError(f"article {r.id!r}: article_id must equal its own id")
        if r.kind == "comment" and r.article_id not in articles:
            raise CorpusFormatError(f"comment {r.id!r}: unresolved article_id {r.article_id!r}")
    return records


def write_gold_csv(pairs: list[tuple[str, str]], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["comment_id", "article_id"])
        writer.writerows(pairs)


def read_gold_csv(path) -> list[tuple[str, str]]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["comment_id", "article_id"]:
        raise CorpusFormatError(f"{path}: expected header comment_id,article_id")
    out = []
    for row in rows[1:]:
        if len(row) != 2:
            raise CorpusFormatError(f"{path}: malformed gold row {row!r}")
        out.append((row[0], row[1]))
    return out


UNKNOWN_TOKEN = "<unk>"


@dataclass
class Vocabulary:
    tokens: list[str]
    index: dict[str, int]
    oov_index: int = 0

    def __len__(self) -> int:
        return len(self.tokens)

    def encode(self, tokens: list[str]) -> list[int]:
        idx = self.index
        oov = self.oov_index
        return [idx.get(t, oov) for t in tokens]

    @classmethod
    def from_tokens(cls, tokens: list[str]) -> "Vocabulary":
        return cls(tokens=tokens, index={t: i for i, t in enumerate(tokens)})


def build_vocabulary(records: list[CorpusRecord]) -> Vocabulary:
    """Unknown token at index 0, then corpus tokens in sorted order."""
    seen = set()
    for r in records:
        seen.update(tokenize(r.text))
    seen.discard(UNKNOWN_TOKEN)
    return Vocabulary.from_tokens([UNKNOWN_TOKEN] + sorted(seen))


def load_word_vectors(path) -> tuple[list[str], np.ndarray]:
    """Whitespace-delimited text vectors: one token per line, then D floats."""
    tokens: list[str] = []
    rows: list[np.ndarray] = []
    dim = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split()
            if not parts:
                continue
            if dim is None:
                dim = len(parts) - 1
                if dim < 1:
                    raise CorpusFormatError(f"{path}:{lineno}: no vector components")
            if len(parts) - 1 != dim:
                raise CorpusFormatError(
                    f"{path}:{lineno}: expected {dim} components, got {len(parts) - 1}"
                )
            tokens.append(parts[0])
            try:
                rows.append(np.asarray([float(v) for v in parts[1:]], dtype=np.float64))
            except ValueError:
                raise CorpusFormatError(f"{path}:{lineno}: non-numeric vector component") from None
    if not tokens:
        raise CorpusFormatError(f"{path}: empty word-vector file")
    return tokens, np.vstack(rows)


def resolve_path(path) -> Path:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"path does not exist: {p}")
    return p
