"""Acceptance suite for the desk-scale cipher-pair experiments.

Each test checks one numbered criterion at its stated tolerance and records
a PASS/FAIL line; the lines are repeated in pytest's terminal summary.
The toy configurations live in ``scripts/configs``.

    pytest tests/test_acceptance.py -v
"""

import hashlib
import json
import math
import time
from pathlib import Path

import numpy as np
import pytest

from bilingual_gan import pipeline
from bilingual_gan.config import load_config
from bilingual_gan.corpus import build_vocab, local_shuffle, word_drop
from bilingual_gan.gradcheck import PENALTY_TOLERANCE, TOLERANCE, run_suite
from bilingual_gan.metrics import RnnLm, bleu_generation, bleu_translation, perplexity
from test_metrics import brute_force_bleu

CONFIGS = Path(__file__).resolve().parent.parent / "scripts" / "configs"

pytestmark = pytest.mark.slow


def sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


class ToyRun:
    """One cipher-pair pipeline run with timings and frozen-contract hashes."""

    def __init__(self, config, out_dir):
        self.cfg = load_config(str(CONFIGS / config), [f"output_dir={out_dir}"])
        self.out = Path(out_dir)
        t0 = time.time()
        pipeline.prepare_data(self.cfg)
        pipeline.train_nmt(self.cfg)
        self.nmt_seconds = time.time() - t0
        self.nmt_log = pipeline.read_jsonl(self.out / "nmt_log.jsonl")
        self.wbw = pipeline.wbw_bleu(self.cfg)
        self.nmt_sha_before = sha256(self.out / "nmt.ckpt")
        pipeline.train_gan(self.cfg)
        self.nmt_sha_after = sha256(self.out / "nmt.ckpt")
        pipeline.generate(self.cfg, lang="both")

    def final_bleu(self):
        last = self.nmt_log[-1]
        return last["val_bleu_0to1"], last["val_bleu_1to0"]


@pytest.fixture(scope="module")
def supervised(tmp_path_factory):
    return ToyRun("toy_supervised.json", tmp_path_factory.mktemp("sup"))


@pytest.fixture(scope="module")
def unsupervised(tmp_path_factory):
    return ToyRun("toy_unsupervised.json", tmp_path_factory.mktemp("unsup"))


def test_criterion_1_autodiff_suite(verdict):
    t0 = time.time()
    results = run_suite(range(10))
    elapsed = time.time() - t0
    ops = [r for r in results if not r.name.startswith("gradient_penalty")]
    gp = next(r for r in results if r.name.startswith("gradient_penalty"))
    worst = max(r.max_error for r in ops)
    ok = all(r.ok for r in ops) and gp.max_error <= PENALTY_TOLERANCE and elapsed < 60
    assert verdict(
        1, ok,
        f"{len(ops)} ops, worst rel err {worst:.2e} <= {TOLERANCE:g}; "
        f"penalty {gp.max_error:.2e} <= {PENALTY_TOLERANCE:g}; {elapsed:.1f}s < 60s",
    )


def test_criterion_2_metric_oracles(verdict):
    mismatches = 0
    vocab = "a b c d e f".split()
    for seed in range(20):
        rng = np.random.default_rng(seed)
        refs = [list(rng.choice(vocab, size=rng.integers(1, 12))) for _ in range(20)]
        cands = [[w if rng.random() > 0.3 else str(rng.choice(vocab)) for w in r] for r in refs]
        mismatches += bleu_translation(cands, refs) != brute_force_bleu(cands, refs)

    ref = "the cat sat on the mat".split()
    hand = [
        (bleu_generation(["the cat sat".split()], [ref], 3), 100.0),
        (bleu_generation(["the cat barked".split()], [ref], 2), 100 * math.exp(0.5 * (math.log(2 / 3) + math.log(1 / 2)))),
        (bleu_generation([ref], [ref, "a b".split()], 4), 100.0),
    ]
    hand_err = max(abs(a - b) for a, b in hand)

    lm = RnnLm(build_vocab([[f"w{i}" for i in range(45)]], 45), emb_dim=4, hidden=3)
    lm.params["proj.W"].data[:] = 0
    lm.params["proj.b"].data[:] = 0
    ppl_err = abs(perplexity(lm, [["w1", "w2"], ["w40", "zzz"]]) - len(lm.vocab))

    ok = mismatches == 0 and hand_err <= 1e-9 and ppl_err <= 1e-6
    assert verdict(
        2, ok,
        f"brute-force BLEU mismatches {mismatches}/20; hand BLEU err {hand_err:.1e} <= 1e-9; "
        f"uniform PPL |{len(lm.vocab)}| err {ppl_err:.1e} <= 1e-6",
    )


def test_criterion_3_noise_model(verdict):
    rng = np.random.default_rng(0)
    kept = sum(len(word_drop(list(range(100)), 0.1, rng)) for _ in range(100))
    rate = 1 - kept / 10_000
    worst = 0
    for _ in range(1000):
        seq = list(range(20))
        out = local_shuffle(seq, 3, rng)
        worst = max(worst, max(abs(i - out.index(t)) for i, t in enumerate(seq)))
    ok = abs(rate - 0.1) <= 0.02 and worst <= 3
    assert verdict(3, ok, f"drop rate {rate:.4f} in 0.1 +- 0.02 over 1e4 tokens; max displacement {worst} <= 3")


def test_criterion_4_supervised_translation(supervised, verdict):
    b01, b10 = supervised.final_bleu()
    epochs = len(supervised.nmt_log)
    minutes = supervised.nmt_seconds / 60
    ok = b01 >= 80 and b10 >= 80 and epochs <= 10 and minutes <= 15
    assert verdict(4, ok, f"val BLEU-4 {b01:.2f} / {b10:.2f} >= 80 after {epochs} epochs in {minutes:.1f} min")


def test_criterion_5_unsupervised_translation(unsupervised, verdict):
    b01, b10 = unsupervised.final_bleu()
    w01, w10 = unsupervised.wbw["l0-l1"], unsupervised.wbw["l1-l0"]
    ok = b01 - w01 >= 10 and b10 - w10 >= 10
    assert verdict(
        5, ok,
        f"l0-l1 {b01:.2f} vs word-by-word {w01:.2f} (+{b01 - w01:.2f}); "
        f"l1-l0 {b10:.2f} vs {w10:.2f} (+{b10 - w10:.2f}); need +10",
    )


def test_criterion_6_gan_training(supervised, verdict):
    curve = pipeline.wasserstein_curve(supervised.cfg)
    peak = max(w for _, w in curve)
    final = curve[-1][1]
    drop = 1 - final / peak
    ratios = {}
    for lang in pipeline.LANGS:
        real, gen = pipeline.sample_perplexity(supervised.cfg, lang)
        ratios[lang] = gen / real
    ok = drop >= 0.5 and all(r <= 2 for r in ratios.values())
    assert verdict(
        6, ok,
        f"held-out W max {peak:.3f} -> final {final:.3f} (drop {drop:.1%}, need 50%); "
        + "; ".join(f"{k} sample/real PPL {v:.2f} <= 2" for k, v in ratios.items()),
    )


def test_criterion_7_parallelism(supervised, unsupervised, verdict):
    sup, sup_base = pipeline.sample_parallelism(supervised.cfg)
    uns, uns_base = pipeline.sample_parallelism(unsupervised.cfg)
    ok = sup > uns and sup > sup_base and uns > uns_base
    assert verdict(
        7, ok,
        f"supervised {sup:.4f} > unsupervised {uns:.4f}; shuffled baselines {sup_base:.4f} / {uns_base:.4f}",
    )


def test_criterion_8_frozen_translator(supervised, unsupervised, verdict):
    frozen = all(r.nmt_sha_before == r.nmt_sha_after for r in (supervised, unsupervised))
    shared = [row["shared_weights_ok"] for r in (supervised, unsupervised) for row in r.nmt_log]
    ok = frozen and all(shared)
    assert verdict(
        8, ok,
        f"nmt.ckpt sha256 unchanged by GAN training: {frozen}; shared weights ok after {sum(shared)}/{len(shared)} epochs",
    )


TINY = {
    "mode": "supervised",
    "n_samples": 50,
    "data": {"cipher_pairs": 300, "valid_size": 30, "test_size": 30},
    "nmt": {"max_len": 8, "emb_dim": 16, "hidden": 16, "attn_dim": 16, "epochs": 2, "lr": 0.01},
    "gan": {"steps": 20, "eval_every": 5, "noise_dim": 16},
}


def test_criterion_9_determinism(tmp_path, verdict):
    outputs = []
    for name in ("a", "b"):
        conf = tmp_path / f"{name}.json"
        conf.write_text(json.dumps(TINY | {"output_dir": str(tmp_path / name)}))
        pipeline.run_pipeline(load_config(str(conf)))
        outputs.append({f: (tmp_path / name / f).read_bytes() for f in ("samples.l0", "samples.l1", "report.txt")})
    same = [f for f in outputs[0] if outputs[0][f] == outputs[1][f]]
    nonempty = all(outputs[0][f] for f in outputs[0])
    ok = len(same) == 3 and nonempty
    assert verdict(9, ok, f"byte-identical across two runs: {', '.join(same) or 'none'}")
