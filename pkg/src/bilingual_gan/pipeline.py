"""Command implementations: data preparation, training, sampling, evaluation.

Every command reads a validated :class:`RunConfig` and works inside
``cfg.output_dir``::

    data/{train,mono,valid,test}.{l0,l1}   tokenized text, one sentence per line
    data/vocab.{l0,l1}                      one token per line
    data/emb.{l0,l1}, data/cipher.json      synthetic source only
    nmt.ckpt, nmt_log.jsonl
    gan.ckpt, gan_log.jsonl
    samples.{l0,l1}
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt_io
from .checkpoint import Checkpoint
from .config import ConfigError, RunConfig, from_dict
from .corpus import (
    Vocabulary,
    build_vocab,
    filter_pairs,
    read_lines,
    read_tokenized,
    tokenize,
    write_lines,
)
from .gan import GanTrainer, real_code, sample_bilingual
from .gradcheck import format_table, run_suite
from .metrics import bleu_generation, bleu_translation, format_report, fwd_rev_report, perplexity, train_rnnlm
from .nmt import NmtTrainer, check_shared_weights
from .nn import Seq2Seq
from .synth import (
    CipherSpec,
    cipher_embeddings,
    disjoint_split,
    make_corpus,
    parallelism_score,
    shuffled_baseline,
    write_word2vec,
)
from .xlingual import build_wbw_table, load_embeddings, translate_wbw

log = logging.getLogger(__name__)

LANGS = ("l0", "l1")


class PipelineError(ValueError):
    """A command's inputs are missing or inconsistent."""


class InvariantError(RuntimeError):
    """A training-time contract (shared weights, frozen translator) broke."""


def _data_dir(cfg: RunConfig) -> Path:
    return Path(cfg.output_dir) / "data"


def _require(path: Path) -> Path:
    if not path.exists():
        raise PipelineError(f"missing file: {path}")
    return path


def _write_corpus(path: Path, sents) -> None:
    write_lines(path, (" ".join(s) for s in sents))


def _read_pair(prefix: Path) -> tuple[list[list[str]], list[list[str]]]:
    return tuple(read_tokenized(_require(prefix.with_suffix("." + lang))) for lang in LANGS)


# ---------------------------------------------------------------------------
# prepare-data
# ---------------------------------------------------------------------------


def _cipher_spec(cfg: RunConfig) -> CipherSpec:
    d = cfg.data
    return CipherSpec(d.cipher_vocab, d.cipher_min_len, d.cipher_max_len, seed=cfg.seed)


def _text_pairs(cfg: RunConfig, a, b) -> list:
    if a is None or b is None:
        return []
    src = [tokenize(x) for x in read_lines(_require(Path(a)))]
    tgt = [tokenize(x) for x in read_lines(_require(Path(b)))]
    if len(src) != len(tgt):
        raise PipelineError(f"{a} and {b} have different line counts ({len(src)} vs {len(tgt)})")
    return filter_pairs(zip(src, tgt), max_len=cfg.nmt.max_len)


def prepare_data(cfg: RunConfig) -> Path:
    """Write train/mono/valid/test splits and vocabularies; returns the data dir."""
    out = _data_dir(cfg)
    out.mkdir(parents=True, exist_ok=True)
    d = cfg.data
    if d.source == "cipher":
        spec = _cipher_spec(cfg)
        n = d.cipher_pairs + d.valid_size + d.test_size
        l0, l1 = make_corpus(spec, n, seed=cfg.seed + 1)
        train = list(zip(l0[: d.cipher_pairs], l1[: d.cipher_pairs]))
        valid = list(zip(l0[d.cipher_pairs : d.cipher_pairs + d.valid_size], l1[d.cipher_pairs : d.cipher_pairs + d.valid_size]))
        test = list(zip(l0[d.cipher_pairs + d.valid_size :], l1[d.cipher_pairs + d.valid_size :]))
        e0, e1 = cipher_embeddings(spec, cfg.nmt.emb_dim, seed=cfg.seed + 2)
        write_word2vec(out / "emb.l0", e0)
        write_word2vec(out / "emb.l1", e1)
        (out / "cipher.json").write_text(
            json.dumps({"vocab_size": spec.vocab_size, "min_len": spec.min_len, "max_len": spec.max_len, "seed": spec.seed})
        )
    else:
        train = _text_pairs(cfg, d.train_l0, d.train_l1)
        valid = _text_pairs(cfg, d.valid_l0, d.valid_l1)
        test = _text_pairs(cfg, d.test_l0, d.test_l1)
        # carve held-out sets from the end of the training data when absent
        if not test:
            train, test = train[: -d.test_size], train[-d.test_size :]
        if not valid:
            train, valid = train[: -d.valid_size], train[-d.valid_size :]
        if not train:
            raise PipelineError("no training pairs left after filtering")
    mono0, mono1 = disjoint_split([p[0] for p in train], [p[1] for p in train])
    for name, pairs in (("train", train), ("valid", valid), ("test", test)):
        _write_corpus(out / f"{name}.l0", [p[0] for p in pairs])
        _write_corpus(out / f"{name}.l1", [p[1] for p in pairs])
    _write_corpus(out / "mono.l0", mono0)
    _write_corpus(out / "mono.l1", mono1)
    # the unsupervised model never sees the other half, so neither does its vocabulary
    vocab_src = ([p[0] for p in train], [p[1] for p in train]) if cfg.mode == "supervised" else (mono0, mono1)
    for lang, corpus in zip(LANGS, vocab_src):
        build_vocab(corpus, d.vocab_size).save(out / f"vocab.{lang}")
    log.info("prepared %d train / %d valid / %d test pairs in %s", len(train), len(valid), len(test), out)
    return out


# ---------------------------------------------------------------------------
# train-nmt
# ---------------------------------------------------------------------------


def _vocabs(cfg: RunConfig) -> tuple[Vocabulary, Vocabulary]:
    return tuple(Vocabulary.load(_require(_data_dir(cfg) / f"vocab.{lang}")) for lang in LANGS)


def _embedding_paths(cfg: RunConfig) -> tuple[Path, Path] | None:
    if cfg.data.source == "cipher":
        return _data_dir(cfg) / "emb.l0", _data_dir(cfg) / "emb.l1"
    if cfg.data.embeddings_l0 and cfg.data.embeddings_l1:
        return Path(cfg.data.embeddings_l0), Path(cfg.data.embeddings_l1)
    return None


def _encode_pairs(pairs, vocabs) -> list[tuple[list[int], list[int]]]:
    return [(vocabs[0].encode(a), vocabs[1].encode(b)) for a, b in zip(*pairs)]


def nmt_tensors(trainer: NmtTrainer) -> dict[str, np.ndarray]:
    tensors = dict(trainer.model.state_dict())
    if trainer.disc is not None:
        tensors.update({k: v.data for k, v in trainer.disc.params.items()})
    return tensors


def model_digest(model: Seq2Seq) -> str:
    """SHA-256 of the serialized encoder/decoder tensors."""
    return hashlib.sha256(ckpt_io.to_bytes(Checkpoint(dict(model.state_dict())))).hexdigest()


def train_nmt(cfg: RunConfig) -> Path:
    vocabs = _vocabs(cfg)
    data = _data_dir(cfg)
    val = _encode_pairs(_read_pair(data / "valid"), vocabs)
    embeddings, wbw, aligned, mono = None, None, None, None
    paths = _embedding_paths(cfg)
    if paths is not None:
        rng = np.random.default_rng(cfg.seed)
        tables = [load_embeddings(_require(p), v, cfg.nmt.emb_dim, rng) for p, v in zip(paths, vocabs)]
        embeddings = tuple(t.matrix for t in tables)
        wbw = (build_wbw_table(tables[0], tables[1]), build_wbw_table(tables[1], tables[0]))
    elif cfg.mode == "unsupervised":
        raise PipelineError("unsupervised training needs embedding files for the word-by-word dictionary")
    if cfg.mode == "supervised":
        aligned = _encode_pairs(_read_pair(data / "train"), vocabs)
    else:
        m0, m1 = _read_pair(data / "mono")
        mono = ([vocabs[0].encode(s) for s in m0], [vocabs[1].encode(s) for s in m1])
    trainer = NmtTrainer(cfg.nmt, vocabs, wbw_tables=wbw, embeddings=embeddings)
    out = Path(cfg.output_dir)
    log_path, ckpt_path = out / "nmt_log.jsonl", out / "nmt.ckpt"
    log_path.write_text("")
    for rec in trainer.train(mono=mono, aligned=aligned, val=val):
        shared_ok = check_shared_weights(trainer.model)
        entry = asdict(rec) | {"shared_weights_ok": shared_ok}
        with log_path.open("a") as fh:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")
        if not shared_ok:
            raise InvariantError(f"shared-weight invariant violated after epoch {rec.epoch}")
        ckpt_io.save(
            ckpt_path,
            Checkpoint(
                tensors=nmt_tensors(trainer),
                config=cfg.to_dict(),
                epoch=rec.epoch,
                rng_state=trainer.rng.bit_generator.state,
                extra={"kind": "nmt", "vocab_l0": vocabs[0].itos, "vocab_l1": vocabs[1].itos},
            ),
        )
    return ckpt_path


def load_nmt(path) -> tuple[Seq2Seq, tuple[Vocabulary, Vocabulary], RunConfig]:
    ck = ckpt_io.load(_require(Path(path)))
    if ck.extra.get("kind") != "nmt":
        raise PipelineError(f"{path} is not a translator checkpoint")
    cfg = from_dict(ck.config)
    vocabs = (Vocabulary(ck.extra["vocab_l0"]), Vocabulary(ck.extra["vocab_l1"]))
    model = Seq2Seq(cfg.nmt.model_config([len(v) for v in vocabs]), seed=cfg.nmt.seed)
    model.load_state_dict({k: v for k, v in ck.tensors.items() if k in model.params})
    return model, vocabs, cfg


# ---------------------------------------------------------------------------
# train-gan
# ---------------------------------------------------------------------------


def _gan_trainer(cfg: RunConfig, model: Seq2Seq) -> GanTrainer:
    return GanTrainer(cfg.gan, model.cfg.code_len, model.cfg.code_depth)


def train_gan(cfg: RunConfig, nmt_path=None) -> Path:
    """Train generator and critic against the frozen translator's codes."""
    out = Path(cfg.output_dir)
    nmt_path = Path(nmt_path) if nmt_path else out / "nmt.ckpt"
    model, vocabs, _ = load_nmt(nmt_path)
    file_before = hashlib.sha256(nmt_path.read_bytes()).hexdigest()
    digest = model_digest(model)
    data = _data_dir(cfg)
    if cfg.mode == "supervised":
        s0, s1 = _read_pair(data / "train")
    else:
        s0, s1 = _read_pair(data / "mono")
    codes = [real_code(model, [v.encode(s) for s in sents], lang) for lang, (v, sents) in enumerate(zip(vocabs, (s0, s1)))]
    v0, v1 = _read_pair(data / "valid")
    held_out = [real_code(model, [vocabs[0].encode(s) for s in v0], 0), real_code(model, [vocabs[1].encode(s) for s in v1], 1)]
    trainer = _gan_trainer(cfg, model)
    fixed_noise = np.random.default_rng(cfg.gan.seed + 1).normal(size=(len(v0), cfg.gan.noise_dim))
    log_path = out / "gan_log.jsonl"
    with log_path.open("w") as fh:
        for rec in trainer.train(codes[0], codes[1], parallel=cfg.mode == "supervised"):
            entry = asdict(rec)
            if rec.step % cfg.gan.eval_every == 0 or rec.step == cfg.gan.steps:
                entry["heldout_wasserstein"] = trainer.wasserstein(held_out, fixed_noise)
            fh.write(json.dumps(entry, sort_keys=True) + "\n")
    if model_digest(model) != digest or hashlib.sha256(nmt_path.read_bytes()).hexdigest() != file_before:
        raise InvariantError("translator parameters changed during GAN training")
    tensors = {k: v.data for k, v in trainer.gen.params.items()}
    tensors.update({k: v.data for k, v in trainer.critic.params.items()})
    path = out / "gan.ckpt"
    ckpt_io.save(
        path,
        Checkpoint(
            tensors=tensors,
            config=cfg.to_dict(),
            epoch=len(trainer.history),
            rng_state=trainer.rng.bit_generator.state,
            extra={"kind": "gan", "nmt_sha256": file_before},
        ),
    )
    return path


def load_gan(path, model: Seq2Seq) -> GanTrainer:
    ck = ckpt_io.load(_require(Path(path)))
    if ck.extra.get("kind") != "gan":
        raise PipelineError(f"{path} is not a GAN checkpoint")
    cfg = from_dict(ck.config)
    trainer = _gan_trainer(cfg, model)
    for params in (trainer.gen.params, trainer.critic.params):
        for k, t in params.items():
            if k not in ck.tensors or ck.tensors[k].shape != t.shape:
                raise PipelineError(f"{path}: tensor {k} missing or mis-shaped for this translator")
            t.data = ck.tensors[k].copy()
    return trainer


# ---------------------------------------------------------------------------
# translate / generate
# ---------------------------------------------------------------------------


def translate_file(nmt_path, src_path, out_path, direction: str) -> int:
    """Tokenize, translate and write ``src_path`` line by line; returns the line count."""
    try:
        src, tgt = (LANGS.index(x) for x in direction.split("-"))
    except ValueError:
        raise PipelineError(f"direction must be l0-l1 or l1-l0, got {direction!r}") from None
    model, vocabs, cfg = load_nmt(nmt_path)
    trainer = NmtTrainer(cfg.nmt, vocabs, model=model)
    sents = [vocabs[src].encode(tokenize(line)) for line in read_lines(_require(Path(src_path)))]
    if any(len(s) > cfg.nmt.max_len for s in sents):
        log.warning("truncating sentences longer than %d tokens", cfg.nmt.max_len)
    sents = [s[: cfg.nmt.max_len] for s in sents]
    keep = [i for i, s in enumerate(sents) if s]
    hyps = trainer.translate_batch([sents[i] for i in keep], src, tgt) if keep else []
    out = [""] * len(sents)
    for i, h in zip(keep, hyps):
        out[i] = " ".join(vocabs[tgt].decode(h))
    write_lines(out_path, out)
    return len(out)


def generate(cfg: RunConfig, n: int | None = None, lang: str = "both", prefix=None, nmt_path=None, gan_path=None) -> list[Path]:
    """Sample ``n`` codes and decode them; ``both`` writes line-aligned files."""
    if lang not in ("l0", "l1", "both"):
        raise PipelineError(f"lang must be l0, l1 or both, got {lang!r}")
    out = Path(cfg.output_dir)
    n = cfg.n_samples if n is None else n
    if n < 0:
        raise PipelineError("n must be >= 0")
    model, vocabs, _ = load_nmt(nmt_path or out / "nmt.ckpt")
    trainer = load_gan(gan_path or out / "gan.ckpt", model)
    noise = np.random.default_rng(cfg.seed + 3).normal(size=(n, cfg.gan.noise_dim))
    pairs = sample_bilingual(n, trainer, model, noise)
    prefix = Path(prefix) if prefix else out / "samples"
    written = []
    for i, name in enumerate(LANGS):
        if lang in (name, "both"):
            path = prefix.with_suffix("." + name)
            write_lines(path, (" ".join(vocabs[i].decode(p[i])) for p in pairs))
            written.append(path)
    return written


# ---------------------------------------------------------------------------
# evaluate / grad-check
# ---------------------------------------------------------------------------

EVAL_MODES = ("gen-bleu", "trans-bleu", "ppl", "parallelism")


def evaluate(mode: str, files: list, cfg: RunConfig | None = None) -> str:
    """Metric report for one of :data:`EVAL_MODES`.

    gen-bleu:    candidates references
    trans-bleu:  hypotheses references
    ppl:         real_train real_test synthetic
    parallelism: samples_l0 samples_l1 cipher.json
    """
    arity = {"gen-bleu": 2, "trans-bleu": 2, "ppl": 3, "parallelism": 3}
    if mode not in arity:
        raise PipelineError(f"unknown evaluation mode {mode!r}")
    if len(files) != arity[mode]:
        raise PipelineError(f"{mode} takes {arity[mode]} files, got {len(files)}")
    paths = [_require(Path(f)) for f in files]
    if mode == "parallelism":
        meta = json.loads(paths[2].read_text())
        spec = CipherSpec(meta["vocab_size"], meta["min_len"], meta["max_len"], seed=meta["seed"])
        a, b = read_tokenized(paths[0]), read_tokenized(paths[1])
        if len(a) != len(b):
            raise PipelineError("sample files are not line-aligned")
        pairs = list(zip(a, b))
        return f"parallelism\t{parallelism_score(pairs, spec):.6f}\nshuffled\t{shuffled_baseline(pairs, spec):.6f}\n"
    corpora = [read_tokenized(p) for p in paths]
    if mode == "gen-bleu":
        scores = {n: bleu_generation(corpora[0], corpora[1], N=n) for n in (2, 3, 4, 5)}
        return format_report(bleu={paths[0].name: scores})
    if mode == "trans-bleu":
        if len(corpora[0]) != len(corpora[1]):
            raise PipelineError("hypothesis and reference files are not line-aligned")
        return f"BLEU-4\t{bleu_translation(corpora[0], corpora[1]):.2f}\n"
    lm = (cfg or RunConfig()).lm
    synthetic = [s for s in corpora[2] if s]
    if not synthetic:
        raise PipelineError("synthetic corpus is empty")
    report = fwd_rev_report(
        corpora[0], corpora[1], synthetic,
        epochs=lm.epochs, emb_dim=lm.emb_dim, hidden=lm.hidden, lr=lm.lr, batch_size=lm.batch_size,
        seed=cfg.seed if cfg else 0,
    )
    return format_report(ppl={paths[2].name: report})


def grad_check(seeds: int = 10) -> tuple[bool, str]:
    results = run_suite(range(seeds))
    return all(r.ok for r in results), format_table(results) + "\n"


# ---------------------------------------------------------------------------
# end to end
# ---------------------------------------------------------------------------


def run_pipeline(cfg: RunConfig) -> dict[str, str]:
    """prepare -> train-nmt -> train-gan -> generate both -> reports."""
    prepare_data(cfg)
    train_nmt(cfg)
    train_gan(cfg)
    s0, s1 = generate(cfg, lang="both")
    data = _data_dir(cfg)
    reports = {}
    if cfg.data.source == "cipher":
        reports["parallelism"] = evaluate("parallelism", [s0, s1, data / "cipher.json"])
    reports["gen-bleu"] = "".join(evaluate("gen-bleu", [s, data / f"test.{lang}"]) for s, lang in ((s0, "l0"), (s1, "l1")))
    out = Path(cfg.output_dir)
    text = "".join(f"[{k}]\n{v}" for k, v in reports.items())
    (out / "report.txt").write_text(text)
    return reports


__all__ = [
    "ConfigError",
    "EVAL_MODES",
    "InvariantError",
    "PipelineError",
    "evaluate",
    "generate",
    "grad_check",
    "load_gan",
    "load_nmt",
    "prepare_data",
    "run_pipeline",
    "train_gan",
    "train_nmt",
    "translate_file",
]


# ---------------------------------------------------------------------------
# run summaries
# ---------------------------------------------------------------------------


def wbw_bleu(cfg: RunConfig, split: str = "valid") -> dict[str, float]:
    """BLEU-4 of dictionary word-by-word translation, per direction."""
    vocabs = _vocabs(cfg)
    paths = _embedding_paths(cfg)
    if paths is None:
        raise PipelineError("word-by-word baseline needs embedding files")
    rng = np.random.default_rng(cfg.seed)
    tables = [load_embeddings(_require(p), v, cfg.nmt.emb_dim, rng) for p, v in zip(paths, vocabs)]
    pairs = _read_pair(_data_dir(cfg) / split)
    out = {}
    for src in (0, 1):
        tgt = 1 - src
        table = build_wbw_table(tables[src], tables[tgt])
        hyps = [vocabs[tgt].decode(translate_wbw(vocabs[src].encode(s), table)) for s in pairs[src]]
        out[f"{LANGS[src]}-{LANGS[tgt]}"] = bleu_translation(hyps, pairs[tgt])
    return out


def read_jsonl(path) -> list[dict]:
    return [json.loads(line) for line in Path(_require(Path(path))).read_text().splitlines() if line]


def wasserstein_curve(cfg: RunConfig) -> list[tuple[int, float]]:
    """``(step, held-out critic gap)`` points from ``gan_log.jsonl``."""
    rows = read_jsonl(Path(cfg.output_dir) / "gan_log.jsonl")
    return [(r["step"], abs(r["heldout_wasserstein"])) for r in rows if "heldout_wasserstein" in r]


def sample_perplexity(cfg: RunConfig, lang: str) -> tuple[float, float]:
    """``(real test PPL, generated-sample PPL)`` under an RNNLM fit on the
    real training side of ``lang``."""
    data = _data_dir(cfg)
    train = read_tokenized(_require(data / f"train.{lang}"))
    test = read_tokenized(_require(data / f"test.{lang}"))
    samples = [s for s in read_tokenized(_require(Path(cfg.output_dir) / f"samples.{lang}")) if s]
    if not samples:
        raise PipelineError(f"no non-empty samples for {lang}")
    lm = cfg.lm
    model = train_rnnlm(train, epochs=lm.epochs, emb_dim=lm.emb_dim, hidden=lm.hidden, lr=lm.lr, batch_size=lm.batch_size, seed=cfg.seed)
    return perplexity(model, test), perplexity(model, samples)


def sample_parallelism(cfg: RunConfig) -> tuple[float, float]:
    """``(parallelism, shuffled baseline)`` of the aligned sample files."""
    data = _data_dir(cfg)
    out = Path(cfg.output_dir)
    meta = json.loads(_require(data / "cipher.json").read_text())
    spec = CipherSpec(meta["vocab_size"], meta["min_len"], meta["max_len"], seed=meta["seed"])
    pairs = list(zip(read_tokenized(out / "samples.l0"), read_tokenized(out / "samples.l1")))
    return parallelism_score(pairs, spec), shuffled_baseline(pairs, spec, seed=cfg.seed)
