"""Training of the shared bilingual denoising autoencoder / translator."""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Iterator, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .corpus import EOS, UNK, NoiseConfig, Vocabulary, apply_noise, pad_batch
from .metrics import bleu_translation
from .nn import (
    ModelConfig,
    Seq2Seq,
    adam,
    compute_grads,
    init_params,
    mlp,
    mlp_spec,
    optimizer_step,
    rmsprop,
)
from .xlingual import translate_wbw

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


class Mode(str, enum.Enum):
    WORD_BY_WORD = "word_by_word"
    MODEL = "model"
    GROUND_TRUTH = "ground_truth"


@dataclass
class NmtConfig:
    supervised: bool = False
    layers: int = 1
    concat: str = "depth"
    use_adv: bool = False
    mtf_epoch: int = 5
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    lr: float = 3e-4
    beta1: float = 0.5
    beta2: float = 0.999
    disc_lr: float = 5e-4
    disc_hidden: int = 1024
    batch_size: int = 32
    epochs: int = 10
    max_len: int = 20
    emb_dim: int = 300
    hidden: int = 256
    attn_dim: int = 256
    emb_trainable: bool = True
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.noise, dict):
            self.noise = NoiseConfig(**self.noise)
        if not self.supervised and self.mtf_epoch < 1:
            raise ValueError("mtf_epoch must be >= 1 in unsupervised mode")

    def model_config(self, vocab_sizes) -> ModelConfig:
        return ModelConfig(
            vocab_sizes=tuple(vocab_sizes),
            emb_dim=self.emb_dim,
            hidden=self.hidden,
            attn_dim=self.attn_dim,
            layers=self.layers,
            concat=self.concat,
            max_len=self.max_len,
        )

    def to_dict(self) -> dict:
        return asdict(self)


def translator_mode(cfg: NmtConfig, epoch: int) -> Mode:
    """Translation function used for the cross-domain loss at 1-based ``epoch``."""
    if cfg.supervised:
        return Mode.GROUND_TRUTH
    return Mode.WORD_BY_WORD if epoch < cfg.mtf_epoch else Mode.MODEL


def pool_code(code: Tensor, lengths: Sequence[int]) -> Tensor:
    """Mean of the real (unpadded) rows of each code matrix: ``(B, D)``."""
    B, L, _ = code.shape
    w = np.zeros((B, 1, L))
    for i, n in enumerate(lengths):
        w[i, 0, : min(n, L)] = 1.0 / n
    return (Tensor(w) @ code).reshape(B, -1)


class LatentDiscriminator:
    """Feed-forward language classifier on mean-pooled codes (logit output)."""

    def __init__(self, code_depth: int, hidden: int = 1024, seed: int = 0):
        self.n_layers = 4
        self.params = init_params(seed, mlp_spec("disc", [code_depth, hidden, hidden, hidden, 1]))

    def logits(self, pooled: Tensor) -> Tensor:
        return mlp(pooled, self.params, "disc", self.n_layers).reshape(-1)

    def prob_lang1(self, pooled: Tensor) -> np.ndarray:
        with ad.no_grad():
            return ad.sigmoid(self.logits(pooled)).data


def adversarial_loss(pooled0: Tensor, pooled1: Tensor, disc: LatentDiscriminator) -> tuple[Tensor, Tensor]:
    """``(disc_loss, enc_loss)``: the classifier learns language labels
    0/1 on detached codes; the encoder term uses flipped labels."""
    d_in = ad.concat([pooled0.detach(), pooled1.detach()], axis=0)
    labels = np.r_[np.zeros(pooled0.shape[0]), np.ones(pooled1.shape[0])]
    disc_loss = ad.bce_with_logits(disc.logits(d_in), labels)
    e_in = ad.concat([pooled0, pooled1], axis=0)
    enc_loss = ad.bce_with_logits(disc.logits(e_in), 1.0 - labels)
    return disc_loss, enc_loss


@dataclass
class EpochRecord:
    epoch: int
    translator: str
    loss_recon: float
    loss_cd: float
    loss_adv_disc: float | None = None
    loss_adv_enc: float | None = None
    val_bleu_0to1: float | None = None
    val_bleu_1to0: float | None = None
    code_distance: float | None = None


class NmtTrainer:
    """Owns the translator, its optimizers and the supervision schedule."""

    def __init__(
        self,
        cfg: NmtConfig,
        vocabs: tuple[Vocabulary, Vocabulary],
        wbw_tables: tuple[np.ndarray, np.ndarray] | None = None,
        embeddings: tuple[np.ndarray, np.ndarray] | None = None,
        model: Seq2Seq | None = None,
    ):
        self.cfg = cfg
        self.vocabs = vocabs
        self.wbw = wbw_tables
        self.model = model or Seq2Seq(cfg.model_config([len(v) for v in vocabs]), seed=cfg.seed)
        if embeddings is not None:
            for lang, mat in enumerate(embeddings):
                self.model.params[f"emb.{lang}"].data = np.array(mat, dtype=np.float64)
        self.trainable = [
            k for k in self.model.params if cfg.emb_trainable or not k.startswith("emb.")
        ]
        self.opt = adam(cfg.lr, cfg.beta1, cfg.beta2)
        self.disc = None
        if cfg.use_adv:
            self.disc = LatentDiscriminator(self.model.cfg.code_depth, cfg.disc_hidden, seed=cfg.seed + 1)
            self.disc_opt = rmsprop(cfg.disc_lr)
        self.rng = np.random.default_rng(cfg.seed)
        self.history: list[EpochRecord] = []

    # translation -------------------------------------------------------
    def encode_batch(self, sents: Sequence[Sequence[int]], lang: int) -> Tensor:
        ids, mask = pad_batch(sents)
        return self.model.encode_batch(ids, mask, lang)

    def translate_batch(self, sents: Sequence[Sequence[int]], src: int, tgt: int) -> list[list[int]]:
        """Noise-free encode then greedy decode; EOS stripped."""
        if any(len(s) == 0 for s in sents):
            raise ValueError("cannot translate an empty sentence")
        out = []
        with ad.no_grad():
            for start in range(0, len(sents), 256):
                chunk = sents[start : start + 256]
                code = self.encode_batch(chunk, src)
                for ids in self.model.decode_greedy(code, tgt, self.cfg.max_len + 1):
                    out.append(ids[:-1] if ids and ids[-1] == EOS else ids)
        return out

    def translate(self, sent: Sequence[int], src: int, tgt: int) -> list[int]:
        return self.translate_batch([sent], src, tgt)[0]

    def back_translate(self, sents, lang: int, mode: Mode, gt=None) -> list[list[int]]:
        """``T(s)`` for a batch of language ``lang`` sentences."""
        if mode is Mode.GROUND_TRUTH:
            if gt is None:
                raise ValueError("ground-truth translation requires an aligned corpus")
            return [list(t) for t in gt]
        if mode is Mode.WORD_BY_WORD:
            if self.wbw is None:
                raise ValueError("word-by-word translation requires a dictionary")
            return [translate_wbw(s, self.wbw[lang]) for s in sents]
        out = self.translate_batch(sents, lang, 1 - lang)
        return [t[: self.cfg.max_len] if t else [UNK] for t in out]

    # losses ------------------------------------------------------------
    def _noisy_code(self, sents, lang):
        noisy = [apply_noise(s, self.cfg.noise, self.rng) for s in sents]
        code = self.encode_batch(noisy, lang)
        return code, ad.gaussian_noise_add(code, self.cfg.noise.sigma, self.rng), noisy

    def reconstruction_loss(self, sents, lang: int) -> tuple[Tensor, Tensor, list]:
        code, noisy_code, noisy = self._noisy_code(sents, lang)
        return self.model.seq_loss(noisy_code, sents, lang), code, noisy

    def cross_domain_loss(self, sents, lang: int, mode: Mode, gt=None) -> tuple[Tensor, Tensor, list]:
        """Translate with ``T``, noise, encode in the other language and
        reconstruct the original; also returns that code and its input."""
        translated = self.back_translate(sents, lang, mode, gt)
        code, noisy_code, noisy = self._noisy_code(translated, 1 - lang)
        return self.model.seq_loss(noisy_code, sents, lang), code, noisy

    def train_step(self, sents, lang: int, mode: Mode, gt=None) -> dict[str, float]:
        recon, code, noisy = self.reconstruction_loss(sents, lang)
        cd, code_other, noisy_other = self.cross_domain_loss(sents, lang, mode, gt)
        loss = recon + cd
        rec = {"recon": recon.item(), "cd": cd.item()}
        if self.disc is not None:
            pooled = pool_code(code, [len(s) for s in noisy])
            pooled_other = pool_code(code_other, [len(s) for s in noisy_other])
            p0, p1 = (pooled, pooled_other) if lang == 0 else (pooled_other, pooled)
            disc_loss, enc_loss = adversarial_loss(p0, p1, self.disc)
            loss = loss + enc_loss
            names = list(self.disc.params)
            optimizer_step(self.disc.params, compute_grads(disc_loss, self.disc.params, names), self.disc_opt)
            rec["adv_disc"], rec["adv_enc"] = disc_loss.item(), enc_loss.item()
        if not math.isfinite(loss.item()):
            raise TrainingDiverged(f"non-finite loss {rec}")
        grads = compute_grads(loss, self.model.params, self.trainable)
        optimizer_step(self.model.params, grads, self.opt)
        return rec

    # epochs ------------------------------------------------------------
    def _batches(self, n: int) -> list[np.ndarray]:
        order = self.rng.permutation(n)
        bs = self.cfg.batch_size
        return [order[i : i + bs] for i in range(0, n, bs)]

    def train_epoch(self, epoch: int, mono: tuple[list, list] | None = None, aligned: list | None = None) -> EpochRecord:
        mode = translator_mode(self.cfg, epoch)
        if mode is Mode.GROUND_TRUTH:
            if aligned is None:
                raise ValueError("supervised training requires aligned pairs")
            data = ([p[0] for p in aligned], [p[1] for p in aligned])
        else:
            data = mono
        batches = [self._batches(len(data[0])), self._batches(len(data[1]))]
        sums: dict[str, list[float]] = {}
        for k in range(max(len(batches[0]), len(batches[1]))):
            for lang in (0, 1):
                if k >= len(batches[lang]):
                    continue
                idx = batches[lang][k]
                sents = [data[lang][i] for i in idx]
                gt = [data[1 - lang][i] for i in idx] if mode is Mode.GROUND_TRUTH else None
                for key, val in self.train_step(sents, lang, mode, gt).items():
                    sums.setdefault(key, []).append(val)
        avg = {k: float(np.mean(v)) for k, v in sums.items()}
        return EpochRecord(
            epoch=epoch,
            translator=mode.value,
            loss_recon=avg["recon"],
            loss_cd=avg["cd"],
            loss_adv_disc=avg.get("adv_disc"),
            loss_adv_enc=avg.get("adv_enc"),
        )

    def validate(self, record: EpochRecord, val: list[tuple[list[int], list[int]]]) -> None:
        src0 = [p[0] for p in val]
        src1 = [p[1] for p in val]
        v0, v1 = self.vocabs
        hyp01 = self.translate_batch(src0, 0, 1)
        hyp10 = self.translate_batch(src1, 1, 0)
        record.val_bleu_0to1 = bleu_translation([v1.decode(h) for h in hyp01], [v1.decode(s) for s in src1])
        record.val_bleu_1to0 = bleu_translation([v0.decode(h) for h in hyp10], [v0.decode(s) for s in src0])
        record.code_distance = self.code_distance(val)

    def code_distance(self, pairs) -> float:
        """Mean cosine distance between pooled codes of aligned sentences."""
        with ad.no_grad():
            a = pool_code(self.encode_batch([p[0] for p in pairs], 0), [len(p[0]) for p in pairs]).data
            b = pool_code(self.encode_batch([p[1] for p in pairs], 1), [len(p[1]) for p in pairs]).data
        cos = (a * b).sum(1) / (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1) + 1e-12)
        return float(np.mean(1.0 - cos))

    def train(self, mono=None, aligned=None, val=None, epochs: int | None = None, start_epoch: int = 1) -> Iterator[EpochRecord]:
        """Yield one record per epoch (validation filled in when ``val`` is given)."""
        epochs = epochs if epochs is not None else self.cfg.epochs
        for epoch in range(start_epoch, start_epoch + epochs):
            rec = self.train_epoch(epoch, mono=mono, aligned=aligned)
            if val:
                self.validate(rec, val)
            self.history.append(rec)
            log.info("epoch %s", asdict(rec))
            yield rec


def check_shared_weights(model: Seq2Seq) -> bool:
    """Only embeddings and output heads are per language; everything else
    is a single tensor used by both."""
    specific = set(model.language_names(0)) | set(model.language_names(1))
    shared = set(model.encoder_names()) | set(model.shared_decoder_names())
    heads = [k for k in model.params if k.startswith("dec.proj.")]
    return not (specific & shared) and (specific | shared) == set(model.params) and len(heads) == 4
