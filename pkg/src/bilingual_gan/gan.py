"""WGAN-GP over translator code matrices and bilingual sampling.

The generator maps Gaussian noise to a ``(max_len, code_depth)`` matrix
mimicking the frozen encoder's output; the critic scores code matrices.
Losses are computed against the real codes of both languages and averaged.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .corpus import EOS, pad_batch
from .nn import Seq2Seq, adam, adam_step, compute_grads, init_params


class GanDiverged(RuntimeError):
    pass


@dataclass
class GanConfig:
    lam: float = 10.0
    critic_per_gen: int = 1
    noise_dim: int = 100
    lr: float = 1e-4
    beta1: float = 0.5
    beta2: float = 0.999
    kernel: int = 3
    n_conv: int = 5
    batch_size: int = 32
    steps: int = 1000
    # held-out critic gap is logged every this many steps
    eval_every: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("lambda must be positive")
        if self.critic_per_gen < 1:
            raise ValueError("critic_per_gen must be >= 1")
        if self.kernel % 2 == 0:
            raise ValueError("kernel width must be odd")

    def to_dict(self) -> dict:
        return asdict(self)


class Generator:
    """Linear upsampling of the noise, residual ReLU-conv blocks, a final
    conv and tanh; ``n_conv`` convolutions in total."""

    def __init__(self, noise_dim: int, length: int, depth: int, kernel: int = 3, n_conv: int = 5, seed: int = 0):
        self.noise_dim, self.length, self.depth, self.n_conv = noise_dim, length, depth, n_conv
        spec = {
            "gen.lin.W": ((noise_dim, length * depth), "weight"),
            "gen.lin.b": ((length * depth,), "bias"),
        }
        for i in range(n_conv):
            spec[f"gen.conv{i}.W"] = ((kernel, depth, depth), "weight")
            spec[f"gen.conv{i}.b"] = ((depth,), "bias")
        self.params = init_params(seed, spec)

    def __call__(self, noise) -> Tensor:
        p = self.params
        z = ad.as_tensor(noise)
        B = z.shape[0]
        x = (z @ p["gen.lin.W"] + p["gen.lin.b"]).reshape(B, self.length, self.depth)
        for i in range(self.n_conv - 1):
            x = x + ad.conv1d(ad.relu(x), p[f"gen.conv{i}.W"], p[f"gen.conv{i}.b"])
        last = self.n_conv - 1
        return ad.tanh(ad.conv1d(ad.relu(x), p[f"gen.conv{last}.W"], p[f"gen.conv{last}.b"]))


class Critic:
    """``n_conv`` ReLU convolutions and a linear score; no output squashing.
    Only ops with double-backward support are used."""

    def __init__(self, length: int, depth: int, kernel: int = 3, n_conv: int = 5, seed: int = 0):
        self.length, self.depth, self.n_conv = length, depth, n_conv
        spec = {}
        for i in range(n_conv):
            spec[f"critic.conv{i}.W"] = ((kernel, depth, depth), "weight")
            spec[f"critic.conv{i}.b"] = ((depth,), "bias")
        spec["critic.out.W"] = ((length * depth, 1), "weight")
        spec["critic.out.b"] = ((1,), "bias")
        self.params = init_params(seed, spec)

    def __call__(self, code: Tensor) -> Tensor:
        p = self.params
        x = code
        for i in range(self.n_conv):
            x = ad.relu(ad.conv1d(x, p[f"critic.conv{i}.W"], p[f"critic.conv{i}.b"]))
        B = x.shape[0]
        return (x.reshape(B, self.length * self.depth) @ p["critic.out.W"] + p["critic.out.b"]).reshape(B)


def real_code(model: Seq2Seq, sents: Sequence[Sequence[int]], lang: int) -> np.ndarray:
    """Noise-free encoder output padded with zero rows to ``max_len``."""
    for s in sents:
        if len(s) > model.cfg.max_len:
            raise ValueError(f"sentence of length {len(s)} exceeds max_len {model.cfg.max_len}")
    ids, mask = pad_batch(sents)
    with ad.no_grad():
        return model.encode_batch(ids, mask, lang).data


def gradient_penalty(real, fake, critic: Callable[[Tensor], Tensor], rng: np.random.Generator) -> Tensor:
    """Mean over pairs of ``(||grad D(mix)||_2 - 1)^2`` with
    ``mix = a*real + (1-a)*fake``, one ``a ~ U(0,1)`` per pair."""
    real = np.asarray(getattr(real, "data", real))
    fake = np.asarray(getattr(fake, "data", fake))
    if real.shape != fake.shape:
        raise ValueError(f"real {real.shape} and fake {fake.shape} differ")
    alpha = rng.uniform(size=(real.shape[0],) + (1,) * (real.ndim - 1))
    mix = Tensor(alpha * real + (1 - alpha) * fake, requires_grad=True)
    norms = ad.grad_norm_graph(critic(mix).sum(), mix, batch_axis=0)
    d = norms - 1.0
    return (d * d).mean()


@dataclass
class GanRecord:
    step: int
    critic_loss: float
    gen_loss: float
    wasserstein: float
    penalty: float


class GanTrainer:
    def __init__(self, cfg: GanConfig, length: int, depth: int):
        self.cfg = cfg
        self.gen = Generator(cfg.noise_dim, length, depth, cfg.kernel, cfg.n_conv, seed=cfg.seed)
        self.critic = Critic(length, depth, cfg.kernel, cfg.n_conv, seed=cfg.seed + 1)
        self.gen_opt = adam(cfg.lr, cfg.beta1, cfg.beta2)
        self.critic_opt = adam(cfg.lr, cfg.beta1, cfg.beta2)
        self.rng = np.random.default_rng(cfg.seed)
        self.history: list[GanRecord] = []
        self.critic_updates = 0
        self.gen_updates = 0

    def noise(self, n: int) -> np.ndarray:
        return self.rng.normal(size=(n, self.cfg.noise_dim))

    def critic_step(self, reals: Sequence[np.ndarray]) -> tuple[float, float, float]:
        B = reals[0].shape[0]
        with ad.no_grad():
            fake = self.gen(self.noise(B)).data
        d_fake = self.critic(Tensor(fake)).mean()
        total, w_est, gp_sum = None, 0.0, 0.0
        for real in reals:
            d_real = self.critic(Tensor(real)).mean()
            gp = gradient_penalty(real, fake, self.critic, self.rng)
            loss = d_fake - d_real + self.cfg.lam * gp
            total = loss if total is None else total + loss
            w_est += d_real.item() - d_fake.item()
            gp_sum += gp.item()
        n = len(reals)
        total = total * (1.0 / n)
        if not math.isfinite(total.item()):
            raise GanDiverged("non-finite critic loss")
        names = list(self.critic.params)
        adam_step(self.critic.params, compute_grads(total, self.critic.params, names), self.critic_opt)
        self.critic_updates += 1
        return total.item(), w_est / n, gp_sum / n

    def generator_step(self, batch: int) -> float:
        # -E D(fake) for every language is the same term, so the average is itself
        loss = -self.critic(self.gen(self.noise(batch))).mean()
        if not math.isfinite(loss.item()):
            raise GanDiverged("non-finite generator loss")
        names = list(self.gen.params)
        adam_step(self.gen.params, compute_grads(loss, self.gen.params, names), self.gen_opt)
        self.gen_updates += 1
        return loss.item()

    def gan_step(self, reals: Sequence[np.ndarray] | Callable[[], Sequence[np.ndarray]]) -> GanRecord:
        """``critic_per_gen`` critic updates then one generator update.

        ``reals`` is either one batch per language, reused by every critic
        update, or a callable drawing fresh batches for each update.
        """
        draw = reals if callable(reals) else (lambda: reals)
        for _ in range(self.cfg.critic_per_gen):
            batch = draw()
            c_loss, w, gp = self.critic_step(batch)
        g_loss = self.generator_step(batch[0].shape[0])
        rec = GanRecord(len(self.history) + 1, c_loss, g_loss, w, gp)
        self.history.append(rec)
        return rec

    def train(self, codes0: np.ndarray, codes1: np.ndarray, steps: int | None = None, parallel: bool = False):
        """Yield one record per generator update, sampling random batches of
        real codes from both languages.

        With ``parallel`` the two batches share indices (aligned corpora).
        """
        steps = steps if steps is not None else self.cfg.steps
        bs = self.cfg.batch_size

        def draw():
            i0 = self.rng.integers(len(codes0), size=bs)
            i1 = i0 if parallel else self.rng.integers(len(codes1), size=bs)
            return [codes0[i0], codes1[i1]]

        for _ in range(steps):
            yield self.gan_step(draw)

    def wasserstein(self, reals: Sequence[np.ndarray], noise: np.ndarray) -> float:
        """Critic gap ``E D(real) - E D(G(noise))`` averaged over languages,
        on caller-fixed data so successive calls are comparable."""
        with ad.no_grad():
            d_fake = self.critic(self.gen(noise)).data.mean()
            return float(np.mean([self.critic(Tensor(r)).data.mean() for r in reals]) - d_fake)

    def generate(self, n: int, noise: np.ndarray | None = None) -> np.ndarray:
        if noise is None:
            noise = self.noise(n)
        elif noise.shape != (n, self.cfg.noise_dim):
            raise ValueError(f"noise shape {noise.shape} != {(n, self.cfg.noise_dim)}")
        with ad.no_grad():
            return self.gen(noise).data


def decode_codes(model: Seq2Seq, codes: np.ndarray, lang: int, batch: int = 256) -> list[list[int]]:
    out = []
    for start in range(0, len(codes), batch):
        for ids in model.decode_greedy(Tensor(codes[start : start + batch]), lang, model.cfg.max_len + 1):
            out.append(ids[:-1] if ids and ids[-1] == EOS else ids)
    return out


def sample_bilingual(
    n: int, trainer: GanTrainer, model: Seq2Seq, noise: np.ndarray | None = None
) -> list[tuple[list[int], list[int]]]:
    """``n`` generated codes, each decoded greedily into both languages."""
    if n == 0:
        return []
    codes = trainer.generate(n, noise)
    return list(zip(decode_codes(model, codes, 0), decode_codes(model, codes, 1)))
