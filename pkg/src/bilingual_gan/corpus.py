"""Tokenization, vocabularies, pair filtering, batching and input noise."""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

PAD, BOS_L0, BOS_L1, EOS, UNK = 0, 1, 2, 3, 4
SPECIALS = ("<pad>", "<bos0>", "<bos1>", "</s>", "<unk>")
N_RESERVED = len(SPECIALS)
MAX_SENT_LEN = 20
MAX_LEN_RATIO = 1.5


def bos_id(lang: int) -> int:
    if lang not in (0, 1):
        raise ValueError(f"language id must be 0 or 1, got {lang}")
    return BOS_L0 if lang == 0 else BOS_L1


# ---------------------------------------------------------------------------
# tokenizer
# ---------------------------------------------------------------------------

# French elided clitics keep their apostrophe: l'union -> l' union
_ELISION = re.compile(r"^(l|d|j|m|n|s|t|c|qu|jusqu|lorsqu|puisqu|quoiqu)'(?=\w)", re.IGNORECASE)
# English contractions split before the apostrophe: don't -> do n't, it's -> it 's
_CONTRACTION = re.compile(r"^(\w+?)(n't|'s|'re|'ve|'ll|'d|'m)$", re.IGNORECASE)
_PUNCT = re.compile(r"([.,!?;:()\[\]{}\"«»“”…%/])")
_APOS = re.compile(r"[’‘`]")


def tokenize(text: str) -> list[str]:
    """Simplified Moses-style tokenizer.

    Rules, in order: lowercase; normalize curly apostrophes to ``'``;
    surround punctuation ``. , ! ? ; : ( ) [ ] { } " « » “ ” … % /`` with
    spaces (a period between digits is kept); split on whitespace; split
    French elisions after the apostrophe and English contractions before it.
    """
    text = _APOS.sub("'", text.lower())
    text = _PUNCT.sub(r" \1 ", text)
    text = re.sub(r"(\d) \. (?=\d)", r"\1.", text)
    tokens: list[str] = []
    for raw in text.split():
        m = _ELISION.match(raw)
        if m:
            tokens.append(raw[: m.end()])
            raw = raw[m.end() :]
        m = _CONTRACTION.match(raw)
        if m:
            tokens.extend([m.group(1), m.group(2)])
        elif raw:
            tokens.append(raw)
    return tokens


# ---------------------------------------------------------------------------
# filtering
# ---------------------------------------------------------------------------


def keep_pair(src: Sequence[str], tgt: Sequence[str], max_len: int = MAX_SENT_LEN, max_ratio: float = MAX_LEN_RATIO) -> bool:
    a, b = len(src), len(tgt)
    if a == 0 or b == 0 or a > max_len or b > max_len:
        return False
    return max(a, b) / min(a, b) <= max_ratio


def filter_pairs(pairs: Iterable[tuple[Sequence[str], Sequence[str]]], max_len: int = MAX_SENT_LEN, max_ratio: float = MAX_LEN_RATIO) -> list:
    """Drop empty pairs, pairs with a side over ``max_len`` tokens, and pairs
    whose length ratio is strictly greater than ``max_ratio``."""
    return [p for p in pairs if keep_pair(p[0], p[1], max_len, max_ratio)]


# ---------------------------------------------------------------------------
# vocabulary
# ---------------------------------------------------------------------------


@dataclass
class Vocabulary:
    itos: list[str]
    stoi: dict[str, int] = field(init=False)

    def __post_init__(self):
        if tuple(self.itos[:N_RESERVED]) != SPECIALS:
            raise ValueError("vocabulary must start with the reserved tokens")
        self.stoi = {w: i for i, w in enumerate(self.itos)}
        if len(self.stoi) != len(self.itos):
            raise ValueError("duplicate tokens in vocabulary")

    def __len__(self):
        return len(self.itos)

    def __contains__(self, word):
        return word in self.stoi

    def encode(self, tokens: Sequence[str], add_eos: bool = False) -> list[int]:
        ids = [self.stoi.get(t, UNK) for t in tokens]
        return ids + [EOS] if add_eos else ids

    def decode(self, ids: Sequence[int]) -> list[str]:
        out = []
        for i in ids:
            if i == EOS:
                break
            if i in (PAD, BOS_L0, BOS_L1):
                continue
            out.append(self.itos[i])
        return out

    @property
    def content_ids(self) -> range:
        return range(N_RESERVED, len(self.itos))

    def save(self, path) -> None:
        Path(path).write_text("".join(w + "\n" for w in self.itos[N_RESERVED:]), encoding="utf-8")

    @classmethod
    def load(cls, path) -> Vocabulary:
        words = Path(path).read_text(encoding="utf-8").split("\n")
        if words and words[-1] == "":
            words.pop()
        return cls(list(SPECIALS) + words)


def build_vocab(corpus: Iterable[Sequence[str]], max_size: int) -> Vocabulary:
    """Keep the ``max_size`` most frequent tokens (ties lexicographic) after
    the reserved ids."""
    counts = Counter(tok for sent in corpus for tok in sent if tok not in SPECIALS)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return Vocabulary(list(SPECIALS) + [w for w, _ in ranked[:max_size]])


# ---------------------------------------------------------------------------
# noise
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NoiseConfig:
    p_drop: float = 0.1
    k_shuffle: int = 3
    sigma: float = 0.3

    def __post_init__(self):
        if not 0 <= self.p_drop < 1:
            raise ValueError(f"p_drop must lie in [0, 1), got {self.p_drop}")
        if self.k_shuffle < 0:
            raise ValueError(f"k_shuffle must be >= 0, got {self.k_shuffle}")
        if self.sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")


def word_drop(ids: Sequence[int], p_drop: float, rng: np.random.Generator) -> list[int]:
    if not ids or p_drop == 0:
        return list(ids)
    keep = rng.random(len(ids)) >= p_drop
    if not keep.any():
        keep[rng.integers(len(ids))] = True
    return [t for t, k in zip(ids, keep) if k]


def local_shuffle(ids: Sequence[int], k: int, rng: np.random.Generator) -> list[int]:
    """Permute so no token moves more than ``k`` places: sort by index + U(0, k+1)."""
    if k == 0 or len(ids) < 2:
        return list(ids)
    keys = np.arange(len(ids)) + rng.uniform(0, k + 1, size=len(ids))
    return [ids[i] for i in np.argsort(keys, kind="stable")]


def apply_noise(ids: Sequence[int], cfg: NoiseConfig, rng: np.random.Generator) -> list[int]:
    """Word drop followed by bounded local shuffle. Token identities are untouched."""
    return local_shuffle(word_drop(ids, cfg.p_drop, rng), cfg.k_shuffle, rng)


# ---------------------------------------------------------------------------
# batching and IO
# ---------------------------------------------------------------------------


def pad_batch(seqs: Sequence[Sequence[int]], max_len: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Right-pad with PAD; returns ``(ids, mask)`` both ``(B, max_len)``."""
    if max_len is None:
        max_len = max((len(s) for s in seqs), default=0)
    ids = np.full((len(seqs), max_len), PAD, dtype=np.int64)
    mask = np.zeros((len(seqs), max_len))
    for i, s in enumerate(seqs):
        if len(s) > max_len:
            raise ValueError(f"sequence of length {len(s)} exceeds max_len {max_len}")
        ids[i, : len(s)] = s
        mask[i, : len(s)] = 1.0
    return ids, mask


def read_lines(path) -> list[str]:
    text = Path(path).read_text(encoding="utf-8")
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    return lines


def write_lines(path, lines: Iterable[str]) -> None:
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def read_tokenized(path) -> list[list[str]]:
    """Read an already tokenized file (tokens separated by single spaces)."""
    return [line.split() for line in read_lines(path)]
