"""Synthetic cipher language pairs with an exact translation oracle.

Language 0 is generated from a small part-of-speech template grammar.
Language 1 maps every word through a fixed bijection and swaps adjacent
word pairs starting at even positions, so word-by-word translation gets
every word right but the order wrong.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

# part-of-speech share of the vocabulary
CLASS_SHARES = {"det": 0.08, "adj": 0.2, "noun": 0.32, "verb": 0.24, "adv": 0.08, "prep": 0.08}

TEMPLATES = (
    ("det", "noun", "verb"),
    ("det", "noun", "verb", "adv"),
    ("det", "adj", "noun", "verb"),
    ("det", "noun", "verb", "det", "noun"),
    ("det", "adj", "noun", "verb", "det", "noun"),
    ("det", "noun", "verb", "det", "adj", "noun"),
    ("det", "noun", "verb", "prep", "det", "noun"),
    ("det", "adj", "noun", "verb", "det", "adj", "noun"),
    ("det", "adj", "noun", "verb", "prep", "det", "noun"),
    ("det", "noun", "verb", "det", "adj", "noun", "adv"),
    ("det", "adj", "noun", "verb", "prep", "det", "adj", "noun"),
)


def swap_pairs(seq: Sequence) -> list:
    """Swap positions (0,1), (2,3), ...; an odd trailing item stays put."""
    out = list(seq)
    for i in range(0, len(out) - 1, 2):
        out[i], out[i + 1] = out[i + 1], out[i]
    return out


@dataclass
class CipherSpec:
    vocab_size: int = 50
    min_len: int = 3
    max_len: int = 8
    seed: int = 0
    words0: list[str] = field(init=False)
    words1: list[str] = field(init=False)
    classes: dict[str, list[str]] = field(init=False)
    perm: np.ndarray = field(init=False)

    def __post_init__(self):
        V = self.vocab_size
        if V < len(CLASS_SHARES):
            raise ValueError("vocab_size too small for the template grammar")
        self.words0 = [f"e{i:03d}" for i in range(V)]
        self.words1 = [f"f{i:03d}" for i in range(V)]
        sizes = {c: max(1, int(round(s * V))) for c, s in CLASS_SHARES.items()}
        sizes["noun"] += V - sum(sizes.values())
        self.classes, start = {}, 0
        for c, n in sizes.items():
            self.classes[c] = self.words0[start : start + n]
            start += n
        rng = np.random.default_rng(self.seed)
        self.perm = rng.permutation(V)
        self._fwd = {w: self.words1[self.perm[i]] for i, w in enumerate(self.words0)}
        self._inv = {v: k for k, v in self._fwd.items()}
        self.templates = [t for t in TEMPLATES if self.min_len <= len(t) <= self.max_len]
        if not self.templates:
            raise ValueError("no template fits the requested length range")

    def word_map(self) -> dict[str, str]:
        return dict(self._fwd)

    def oracle_translate(self, sent: Sequence[str]) -> list[str]:
        return swap_pairs([self._fwd.get(w, w) for w in sent])

    def oracle_inverse(self, sent: Sequence[str]) -> list[str]:
        return [self._inv.get(w, w) for w in swap_pairs(sent)]

    def sample_sentence(self, rng: np.random.Generator) -> list[str]:
        tmpl = self.templates[rng.integers(len(self.templates))]
        return [self.classes[c][rng.integers(len(self.classes[c]))] for c in tmpl]


def make_corpus(spec: CipherSpec, n: int, seed: int) -> tuple[list[list[str]], list[list[str]]]:
    """``n`` aligned pairs; pair i satisfies ``oracle_translate(l0[i]) == l1[i]``."""
    rng = np.random.default_rng(seed)
    l0 = [spec.sample_sentence(rng) for _ in range(n)]
    return l0, [spec.oracle_translate(s) for s in l0]


def disjoint_split(l0: list[list[str]], l1: list[list[str]]) -> tuple[list[list[str]], list[list[str]]]:
    """Monolingual halves: first half of language 0, second half of language 1,
    dropping any language-1 sentence whose translation appears in the first half."""
    half = len(l0) // 2
    mono0 = l0[:half]
    seen = {tuple(s) for s in l1[:half]}
    mono1 = [s for s in l1[half:] if tuple(s) not in seen]
    return mono0, mono1


def cipher_embeddings(spec: CipherSpec, dim: int, noise: float = 0.1, seed: int = 0) -> tuple[dict, dict]:
    """Cross-lingual toy embeddings: word ``w`` and its image under the
    bijection share a base vector (one-hot when ``dim`` allows) plus noise."""
    rng = np.random.default_rng(seed)
    V = spec.vocab_size
    if dim >= V:
        base = np.eye(V, dim)
    else:
        base = rng.normal(size=(V, dim)) / np.sqrt(dim)
    e0 = {w: base[i] + noise * rng.normal(size=dim) / np.sqrt(dim) for i, w in enumerate(spec.words0)}
    e1 = {spec._fwd[w]: base[i] + noise * rng.normal(size=dim) / np.sqrt(dim) for i, w in enumerate(spec.words0)}
    return e0, e1


def write_word2vec(path, vectors: dict[str, np.ndarray]) -> None:
    dim = len(next(iter(vectors.values()))) if vectors else 0
    lines = [f"{len(vectors)} {dim}"]
    lines += [w + " " + " ".join(repr(float(x)) for x in v) for w, v in vectors.items()]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def token_f1(hyp: Sequence[str], ref: Sequence[str]) -> float:
    if not hyp and not ref:
        return 1.0
    if not hyp or not ref:
        return 0.0
    overlap = sum((Counter(hyp) & Counter(ref)).values())
    if overlap == 0:
        return 0.0
    p, r = overlap / len(hyp), overlap / len(ref)
    return 2 * p * r / (p + r)


def parallelism_score(pairs: Sequence[tuple[Sequence[str], Sequence[str]]], spec: CipherSpec) -> float:
    """Mean token F1 between each generated language-1 sentence and the
    oracle translation of its language-0 partner."""
    if not pairs:
        return 0.0
    return float(np.mean([token_f1(b, spec.oracle_translate(a)) for a, b in pairs]))


def shuffled_baseline(pairs, spec: CipherSpec, seed: int = 0) -> float:
    """Parallelism of the same sentences with the language-1 side permuted."""
    if not pairs:
        return 0.0
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(pairs))
    return parallelism_score([(pairs[i][0], pairs[j][1]) for i, j in enumerate(perm)], spec)
