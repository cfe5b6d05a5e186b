"""Pretrained word-embedding ingestion and word-by-word dictionary induction."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import N_RESERVED, UNK, Vocabulary

log = logging.getLogger(__name__)

EMBED_DIM = 300
INIT_SCALE = 0.08


class EmbeddingFormatError(ValueError):
    pass


@dataclass
class EmbeddingTable:
    vocab: Vocabulary
    matrix: np.ndarray
    found: np.ndarray  # bool per row: vector came from the file
    trainable: bool = True

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    @property
    def coverage(self) -> float:
        n = len(self.vocab) - N_RESERVED
        return float(self.found[N_RESERVED:].sum() / n) if n else 0.0


def random_table(vocab: Vocabulary, dim: int, rng: np.random.Generator) -> np.ndarray:
    return rng.uniform(-INIT_SCALE, INIT_SCALE, size=(len(vocab), dim))


def load_embeddings(path, vocab: Vocabulary, dim: int = EMBED_DIM, rng: np.random.Generator | None = None, trainable: bool = True) -> EmbeddingTable:
    """Read a word2vec text file into a table aligned with ``vocab``.

    Rows for words absent from the file keep a Uniform(-0.08, 0.08) init.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    matrix = random_table(vocab, dim, rng)
    found = np.zeros(len(vocab), dtype=bool)
    with Path(path).open(encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise EmbeddingFormatError(f"{path}:1: expected header 'count dim'")
        file_dim = int(header[1])
        if file_dim != dim:
            raise EmbeddingFormatError(f"{path}: embedding dim {file_dim} != expected {dim}")
        for lineno, line in enumerate(fh, start=2):
            parts = line.rstrip("\n").split(" ")
            if parts == [""]:
                continue
            if len(parts) != dim + 1:
                raise EmbeddingFormatError(f"{path}:{lineno}: expected word and {dim} values, got {len(parts) - 1}")
            try:
                vec = np.array([float(x) for x in parts[1:]])
            except ValueError as err:
                raise EmbeddingFormatError(f"{path}:{lineno}: {err}") from None
            idx = vocab.stoi.get(parts[0])
            if idx is not None and idx >= N_RESERVED:
                matrix[idx] = vec
                found[idx] = True
    table = EmbeddingTable(vocab, matrix, found, trainable)
    log.info("loaded %s: coverage %.3f", path, table.coverage)
    return table


def table_from_vectors(vocab: Vocabulary, vectors: dict[str, np.ndarray], rng: np.random.Generator, trainable: bool = True) -> EmbeddingTable:
    dim = len(next(iter(vectors.values())))
    matrix = random_table(vocab, dim, rng)
    found = np.zeros(len(vocab), dtype=bool)
    for w, v in vectors.items():
        i = vocab.stoi.get(w)
        if i is not None and i >= N_RESERVED:
            matrix[i] = v
            found[i] = True
    return EmbeddingTable(vocab, matrix, found, trainable)


def build_wbw_table(src: EmbeddingTable, tgt: EmbeddingTable) -> np.ndarray:
    """Map every source id to the target id of highest cosine similarity.

    Only target words that have pretrained vectors are candidates; ties go
    to the lower id. Reserved ids map to themselves; source words without a
    vector (or with a zero vector) map to UNK.
    """
    if src.dim != tgt.dim:
        raise ValueError(f"dimension mismatch: {src.dim} vs {tgt.dim}")
    table = np.arange(len(src.vocab))
    table[N_RESERVED:] = UNK
    cand = np.flatnonzero(tgt.found)
    cand = cand[cand >= N_RESERVED]
    if cand.size == 0:
        return table
    T = tgt.matrix[cand]
    tn = np.linalg.norm(T, axis=1)
    T = np.where(tn[:, None] > 0, T / np.where(tn > 0, tn, 1.0)[:, None], 0.0)
    for i in range(N_RESERVED, len(src.vocab)):
        if not src.found[i]:
            continue
        v = src.matrix[i]
        n = np.linalg.norm(v)
        if n == 0:
            log.warning("zero-norm embedding for %r; mapped to UNK", src.vocab.itos[i])
            continue
        table[i] = cand[int(np.argmax(T @ (v / n)))]
    return table


def translate_wbw(ids: Sequence[int], table: np.ndarray) -> list[int]:
    return [int(table[i]) for i in ids]


def wbw_accuracy(table: np.ndarray, src: Vocabulary, tgt: Vocabulary, gold: dict[str, str]) -> float:
    """Fraction of ``gold`` source words mapped to their gold translation."""
    hits = [tgt.itos[table[src.stoi[w]]] == t for w, t in gold.items() if w in src.stoi]
    return float(np.mean(hits)) if hits else 0.0
