"""BLEU for generation and translation, RNN language model perplexity."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .corpus import BOS_L0, EOS, Vocabulary, build_vocab, pad_batch
from .nn import _FusedLstm, adam, adam_step, compute_grads, init_params, lstm_spec


def ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


@dataclass
class NGramStats:
    matches: list[int]
    totals: list[int]

    def precisions(self) -> list[float]:
        return [m / t if t else 0.0 for m, t in zip(self.matches, self.totals)]


def _geometric(stats: NGramStats, weights: Sequence[float]) -> float:
    if any(m == 0 for m in stats.matches):
        return 0.0
    return math.exp(sum(w * math.log(p) for w, p in zip(weights, stats.precisions())))


def bleu_weights(N: int, scheme: str = "uniform") -> list[float]:
    """``uniform`` gives 1/N per order; ``harmonic`` gives 1/n as printed in
    some papers (not a proper weighted geometric mean)."""
    if scheme == "uniform":
        return [1.0 / N] * N
    if scheme == "harmonic":
        return [1.0 / n for n in range(1, N + 1)]
    raise ValueError(f"unknown weight scheme {scheme!r}")


def generation_stats(candidates: Sequence[Sequence[str]], references: Sequence[Sequence[str]], N: int) -> NGramStats:
    """Clipped n-gram counts with the whole reference corpus as the
    reference set of every candidate."""
    max_ref = [Counter() for _ in range(N)]
    for ref in references:
        for n in range(1, N + 1):
            cur = max_ref[n - 1]
            for g, c in ngrams(ref, n).items():
                if c > cur[g]:
                    cur[g] = c
    matches, totals = [0] * N, [0] * N
    for cand in candidates:
        for n in range(1, N + 1):
            counts = ngrams(cand, n)
            totals[n - 1] += sum(counts.values())
            matches[n - 1] += sum(min(c, max_ref[n - 1][g]) for g, c in counts.items())
    return NGramStats(matches, totals)


def bleu_generation(candidates: Sequence[Sequence[str]], references: Sequence[Sequence[str]], N: int = 4, weights: str = "uniform") -> float:
    """Corpus BLEU-N in [0, 100] with brevity penalty fixed to 1."""
    if not candidates:
        raise ValueError("no candidates")
    if not references:
        raise ValueError("empty reference corpus")
    if not 1 <= N <= 5:
        raise ValueError("N must be between 1 and 5")
    stats = generation_stats(candidates, references, N)
    return 100.0 * _geometric(stats, bleu_weights(N, weights))


def bleu_translation(candidates: Sequence[Sequence[str]], references: Sequence[Sequence[str]], N: int = 4) -> float:
    """Standard corpus BLEU-N with one aligned reference per candidate."""
    if len(candidates) != len(references):
        raise ValueError("candidates and references must be aligned")
    matches, totals = [0] * N, [0] * N
    cand_len = ref_len = 0
    for cand, ref in zip(candidates, references):
        cand_len += len(cand)
        ref_len += len(ref)
        for n in range(1, N + 1):
            cc, rc = ngrams(cand, n), ngrams(ref, n)
            totals[n - 1] += sum(cc.values())
            matches[n - 1] += sum(min(c, rc[g]) for g, c in cc.items())
    if cand_len == 0:
        return 0.0
    bp = min(1.0, math.exp(1 - ref_len / cand_len))
    return 100.0 * bp * _geometric(NGramStats(matches, totals), [1.0 / N] * N)


# ---------------------------------------------------------------------------
# RNN language model
# ---------------------------------------------------------------------------


@dataclass
class RnnLm:
    vocab: Vocabulary
    emb_dim: int = 300
    hidden: int = 256
    seed: int = 0
    params: dict = field(default=None)
    train_ppl: float = float("nan")

    def __post_init__(self):
        if self.params is None:
            V = len(self.vocab)
            spec = {"emb": ((V, self.emb_dim), "weight")}
            spec.update(lstm_spec("lstm", self.emb_dim, self.hidden))
            spec["proj.W"] = ((self.hidden, V), "weight")
            spec["proj.b"] = ((V,), "bias")
            self.params = init_params(self.seed, spec)

    def batch_loss(self, sents: Sequence[Sequence[int]]) -> tuple[Tensor, int]:
        """Mean next-token cross-entropy (EOS included, PAD excluded)."""
        targets, mask = pad_batch([list(s) + [EOS] for s in sents])
        B, T = targets.shape
        inputs = np.concatenate([np.full((B, 1), BOS_L0), targets[:, :-1]], axis=1)
        x = ad.embedding(self.params["emb"], inputs)
        lstm = _FusedLstm(self.params, "lstm", self.emb_dim)
        xp = lstm.input_proj(x)
        h = Tensor(np.zeros((B, self.hidden)))
        c = Tensor(np.zeros((B, self.hidden)))
        hs = []
        for t in range(T):
            h, c = lstm.step(xp[:, t], h, c)
            hs.append(h)
        logits = ad.stack(hs, axis=1) @ self.params["proj.W"] + self.params["proj.b"]
        return ad.cross_entropy(logits, targets, mask), int(mask.sum())


def train_rnnlm(
    corpus: Sequence[Sequence[str]],
    epochs: int = 5,
    seed: int = 0,
    emb_dim: int = 300,
    hidden: int = 256,
    lr: float = 3e-3,
    batch_size: int = 32,
    vocab: Vocabulary | None = None,
    max_vocab: int = 15000,
) -> RnnLm:
    """Fit an LSTM language model with Adam; the vocabulary is induced from
    ``corpus`` unless given."""
    vocab = vocab or build_vocab(corpus, max_vocab)
    lm = RnnLm(vocab, emb_dim, hidden, seed)
    data = [vocab.encode(s) for s in corpus]
    opt = adam(lr=lr, beta1=0.9)
    rng = np.random.default_rng(seed)
    names = list(lm.params)
    for _ in range(epochs):
        order = rng.permutation(len(data))
        for start in range(0, len(data), batch_size):
            batch = [data[i] for i in order[start : start + batch_size]]
            loss, _ = lm.batch_loss(batch)
            adam_step(lm.params, compute_grads(loss, lm.params, names), opt)
    lm.train_ppl = perplexity(lm, corpus)
    return lm


def perplexity(lm: RnnLm, corpus: Sequence[Sequence[str]], batch_size: int = 256) -> float:
    """``exp`` of the mean per-token cross-entropy, EOS included."""
    data = [lm.vocab.encode(s) for s in corpus]
    if not data:
        raise ValueError("empty corpus")
    total, count = 0.0, 0
    # fixed-order, length-sorted batches make the sum independent of corpus order
    data.sort(key=lambda s: (len(s), s))
    with ad.no_grad():
        for start in range(0, len(data), batch_size):
            loss, n = lm.batch_loss(data[start : start + batch_size])
            total += loss.item() * n
            count += n
    return float(math.exp(total / count))


@dataclass
class PplReport:
    forward: float
    reverse: float


def fwd_rev_report(real_train, real_test, synthetic, **lm_kwargs) -> PplReport:
    """F-PPL: LM on real training data scored on samples.
    R-PPL: LM on samples scored on real test data."""
    fwd = perplexity(train_rnnlm(real_train, **lm_kwargs), synthetic)
    rev = perplexity(train_rnnlm(synthetic, **lm_kwargs), real_test)
    return PplReport(fwd, rev)


def format_report(bleu: dict[str, dict[int, float]] | None = None, ppl: dict[str, PplReport] | None = None) -> str:
    """Plain-text table: rows B-2..B-5 then F-PPL/R-PPL, one column per language."""
    langs = sorted(set((bleu or {}).keys()) | set((ppl or {}).keys()))
    lines = ["metric\t" + "\t".join(langs)]
    if bleu:
        for n in sorted({n for d in bleu.values() for n in d}):
            lines.append(f"B-{n}\t" + "\t".join(f"{bleu[l][n]:.2f}" if l in bleu else "-" for l in langs))
    if ppl:
        lines.append("F-PPL\t" + "\t".join(f"{ppl[l].forward:.2f}" if l in ppl else "-" for l in langs))
        lines.append("R-PPL\t" + "\t".join(f"{ppl[l].reverse:.2f}" if l in ppl else "-" for l in langs))
    return "\n".join(lines) + "\n"
