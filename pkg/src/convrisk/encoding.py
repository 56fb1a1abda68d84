"""Hashed TF-IDF text embeddings.

Tokens are lowercased maximal runs of alphanumeric characters. Each token is
hashed into one of `dim` buckets with FNV-1a (64-bit) and contributes
tf * ln((1 + D) / (1 + df)) to that bucket, where D is the number of fitted
documents and df the number containing the token. The result is
L2-normalized unless it is the zero vector.

FNV-1a is used because it is tiny, fast, and platform-stable: identical
token bytes hash to identical buckets on every machine, which keeps
embeddings byte-for-byte reproducible.
"""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .errors import EmptyCorpusError

MIN_DIM = 8
DEFAULT_DIM = 256

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


def fnv1a_64(data: bytes) -> int:
    """64-bit FNV-1a hash of a byte string."""
    h = _FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * _FNV_PRIME) & _MASK64
    return h


def tokenize(text: str) -> list[str]:
    """Lowercase and split on non-alphanumeric runs.

    >>> tokenize("Div/0 Error")
    ['div', '0', 'error']
    >>> tokenize("A  a")
    ['a', 'a']
    """
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class IdfTable:
    """Document frequencies fitted on a corpus of documents."""
    doc_count: int
    doc_freq: dict[str, int] = field(default_factory=dict)

    def weight(self, token: str) -> float:
        # Smoothed so unseen tokens (df = 0) still get a finite weight.
        return math.log((1 + self.doc_count) / (1 + self.doc_freq.get(token, 0)))


def fit_idf(documents: Iterable[str]) -> IdfTable:
    """Count, per token, how many documents contain it at least once."""
    doc_freq: Counter[str] = Counter()
    doc_count = 0
    for doc in documents:
        doc_count += 1
        doc_freq.update(set(tokenize(doc)))
    if doc_count == 0:
        raise EmptyCorpusError("cannot fit document frequencies on zero documents")
    return IdfTable(doc_count=doc_count, doc_freq=dict(doc_freq))


def embed_text(text: str, idf: IdfTable, dim: int = DEFAULT_DIM) -> np.ndarray:
    """Embed text into a dense hashed TF-IDF vector of length dim.

    The vector is L2-normalized; texts with no tokens (or only zero-weight
    tokens) embed to the zero vector.
    """
    if dim < MIN_DIM:
        raise ValueError(f"dim must be >= {MIN_DIM}, got {dim}")
    vec = np.zeros(dim, dtype=np.float64)
    for token, count in Counter(tokenize(text)).items():
        bucket = fnv1a_64(token.encode("utf-8")) % dim
        vec[bucket] += count * idf.weight(token)
    norm = float(np.linalg.norm(vec))
    if norm > 0.0:
        vec /= norm
    return vec


@dataclass(frozen=True)
class Embedder:
    """An IdfTable bound to a fixed output dimension."""
    idf: IdfTable
    dim: int = DEFAULT_DIM

    def __post_init__(self) -> None:
        if self.dim < MIN_DIM:
            raise ValueError(f"dim must be >= {MIN_DIM}, got {self.dim}")

    def embed(self, text: str) -> np.ndarray:
        return embed_text(text, self.idf, self.dim)

    def zero(self) -> np.ndarray:
        return np.zeros(self.dim, dtype=np.float64)


def fit_embedder(documents: Iterable[str], dim: int = DEFAULT_DIM) -> Embedder:
    return Embedder(idf=fit_idf(documents), dim=dim)


def save_embedder(embedder: Embedder, path: str) -> None:
    payload = {
        "format": "convrisk-embedder",
        "version": 1,
        "dim": embedder.dim,
        "doc_count": embedder.idf.doc_count,
        "doc_freq": dict(sorted(embedder.idf.doc_freq.items())),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True)
        fh.write("\n")


def load_embedder(path: str) -> Embedder:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format") != "convrisk-embedder":
        raise ValueError(f"not an embedder checkpoint: {path}")
    idf = IdfTable(
        doc_count=int(payload["doc_count"]),
        doc_freq={str(k): int(v) for k, v in payload["doc_freq"].items()},
    )
    return Embedder(idf=idf, dim=int(payload["dim"]))
