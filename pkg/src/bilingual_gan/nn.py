"""LSTM encoder/decoder with additive attention, parameter init and optimizers.

Parameters live in flat ``name -> Tensor`` dicts. The translator owns one
encoder and one decoder shared by both languages; only the embedding
tables ``emb.<lang>`` and output heads ``dec.proj.<lang>.*`` are
language specific.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .checkpoint import CheckpointError
from .corpus import BOS_L0, BOS_L1, EOS, PAD, bos_id, pad_batch

INIT_SCALE = 0.08
GATES = ("i", "f", "g", "o")


def init_params(seed: int, spec: dict[str, tuple[tuple[int, ...], str]]) -> dict[str, Tensor]:
    """Materialize ``name -> (shape, kind)``.

    kind is ``"weight"`` (Uniform(-0.08, 0.08)), ``"bias"`` (zeros) or
    ``"forget_bias"`` (ones). Draws happen in ``spec`` order, so a seed
    fully determines the result.
    """
    rng = np.random.default_rng(seed)
    params = {}
    for name, (shape, kind) in spec.items():
        if kind == "weight":
            data = rng.uniform(-INIT_SCALE, INIT_SCALE, size=shape)
        elif kind == "bias":
            data = np.zeros(shape)
        elif kind == "forget_bias":
            data = np.ones(shape)
        elif kind == "zeros":
            data = np.zeros(shape)
        else:
            raise ValueError(f"unknown init kind {kind!r} for {name}")
        params[name] = Tensor(data, requires_grad=True)
    return params


def lstm_spec(prefix: str, input_size: int, hidden: int) -> dict:
    spec = {}
    for gate in GATES:
        spec[f"{prefix}.W_{gate}"] = ((input_size + hidden, hidden), "weight")
    for gate in GATES:
        spec[f"{prefix}.b_{gate}"] = ((hidden,), "forget_bias" if gate == "f" else "bias")
    return spec


def lstm_step(x: Tensor, h: Tensor, c: Tensor, p: dict[str, Tensor], prefix: str = "") -> tuple[Tensor, Tensor]:
    """One LSTM step; ``p`` holds ``W_i, W_f, W_g, W_o`` of shape
    ``(in+H, H)`` and matching biases (optionally under ``prefix.``)."""
    pre = f"{prefix}." if prefix else ""
    xh = ad.concat([x, h], axis=-1)
    i = ad.sigmoid(xh @ p[pre + "W_i"] + p[pre + "b_i"])
    f = ad.sigmoid(xh @ p[pre + "W_f"] + p[pre + "b_f"])
    g = ad.tanh(xh @ p[pre + "W_g"] + p[pre + "b_g"])
    o = ad.sigmoid(xh @ p[pre + "W_o"] + p[pre + "b_o"])
    c_new = f * c + i * g
    return o * ad.tanh(c_new), c_new


class _FusedLstm:
    """Gate matrices concatenated once per sequence for faster stepping."""

    def __init__(self, p: dict[str, Tensor], prefix: str, input_size: int):
        W = ad.concat([p[f"{prefix}.W_{g}"] for g in GATES], axis=1)
        self.W_x = W[:input_size]
        self.W_h = W[input_size:]
        self.b = ad.concat([p[f"{prefix}.b_{g}"] for g in GATES], axis=0)
        self.H = self.W_h.shape[0]

    def input_proj(self, x: Tensor) -> Tensor:
        return x @ self.W_x + self.b

    def step(self, xp: Tensor, h: Tensor, c: Tensor) -> tuple[Tensor, Tensor]:
        z = xp + h @ self.W_h
        H = self.H
        i = ad.sigmoid(z[..., :H])
        f = ad.sigmoid(z[..., H : 2 * H])
        g = ad.tanh(z[..., 2 * H : 3 * H])
        o = ad.sigmoid(z[..., 3 * H :])
        c_new = f * c + i * g
        return o * ad.tanh(c_new), c_new


def attention_spec(prefix: str, hidden: int, code_depth: int, attn_dim: int) -> dict:
    return {
        f"{prefix}.W_h": ((hidden, attn_dim), "weight"),
        f"{prefix}.W_c": ((code_depth, attn_dim), "weight"),
        f"{prefix}.b": ((attn_dim,), "bias"),
        f"{prefix}.v": ((attn_dim, 1), "weight"),
    }


def _attend(h: Tensor, code: Tensor, code_proj: Tensor, p: dict, prefix: str) -> tuple[Tensor, Tensor]:
    B, L, D = code.shape
    q = (h @ p[f"{prefix}.W_h"] + p[f"{prefix}.b"]).reshape(B, 1, -1)
    scores = (ad.tanh(code_proj + q) @ p[f"{prefix}.v"]).reshape(B, L)
    weights = ad.softmax(scores)
    context = (weights.reshape(B, 1, L) @ code).reshape(B, D)
    return context, weights


def attention_context(dec_state: Tensor, code: Tensor, p: dict[str, Tensor], prefix: str = "dec.attn") -> tuple[Tensor, Tensor]:
    """Additive attention of decoder state ``(B, H)`` over code ``(B, L, D)``.

    Returns the context ``(B, D)`` and weights ``(B, L)``.
    """
    return _attend(dec_state, code, code @ p[f"{prefix}.W_c"], p, prefix)


@dataclass
class ModelConfig:
    vocab_sizes: tuple[int, int]
    emb_dim: int = 300
    hidden: int = 256
    attn_dim: int = 256
    layers: int = 1
    concat: str = "depth"  # "depth" (NC) or "length"
    max_len: int = 20

    def __post_init__(self):
        self.vocab_sizes = tuple(int(v) for v in self.vocab_sizes)
        if self.layers not in (1, 2):
            raise ValueError("encoder supports 1 or 2 layers")
        if self.concat not in ("depth", "length"):
            raise ValueError("concat must be 'depth' or 'length'")

    @property
    def code_depth(self) -> int:
        return 2 * self.hidden if self.concat == "depth" else self.hidden

    @property
    def code_len(self) -> int:
        return self.max_len if self.concat == "depth" else 2 * self.max_len


@dataclass
class Seq2Seq:
    """Shared bidirectional encoder and attention decoder for two languages."""

    cfg: ModelConfig
    seed: int = 0
    params: dict[str, Tensor] = field(default=None)

    def __post_init__(self):
        if self.params is None:
            self.params = init_params(self.seed, self.param_spec())

    def param_spec(self) -> dict:
        c = self.cfg
        spec = {}
        for lang in (0, 1):
            spec[f"emb.{lang}"] = ((c.vocab_sizes[lang], c.emb_dim), "weight")
        for layer in range(c.layers):
            in_size = c.emb_dim if layer == 0 else 2 * c.hidden
            for d in ("fwd", "bwd"):
                spec.update(lstm_spec(f"enc.l{layer}.{d}", in_size, c.hidden))
        spec.update(lstm_spec("dec.lstm", c.emb_dim + c.code_depth, c.hidden))
        spec.update(attention_spec("dec.attn", c.hidden, c.code_depth, c.attn_dim))
        spec["dec.out.W"] = ((c.hidden + c.code_depth, c.hidden), "weight")
        spec["dec.out.b"] = ((c.hidden,), "bias")
        for lang in (0, 1):
            spec[f"dec.proj.{lang}.W"] = ((c.hidden, c.vocab_sizes[lang]), "weight")
            spec[f"dec.proj.{lang}.b"] = ((c.vocab_sizes[lang],), "bias")
        return spec

    # parameter groups ----------------------------------------------------
    def encoder_names(self) -> list[str]:
        return [k for k in self.params if k.startswith("enc.")]

    def shared_decoder_names(self) -> list[str]:
        return [k for k in self.params if k.startswith("dec.") and not k.startswith("dec.proj.")]

    def language_names(self, lang: int) -> list[str]:
        return [k for k in self.params if k == f"emb.{lang}" or k.startswith(f"dec.proj.{lang}.")]

    # encoder -------------------------------------------------------------
    def _run_lstm(self, prefix: str, x: Tensor, mask: np.ndarray, reverse: bool) -> list[Tensor]:
        B, T, _ = x.shape
        lstm = _FusedLstm(self.params, prefix, x.shape[-1])
        xp = lstm.input_proj(x)
        h = Tensor(np.zeros((B, lstm.H)))
        c = Tensor(np.zeros((B, lstm.H)))
        outs: list[Tensor] = [None] * T
        steps = range(T - 1, -1, -1) if reverse else range(T)
        for t in steps:
            h_new, c_new = lstm.step(xp[:, t], h, c)
            m = mask[:, t : t + 1]
            if m.all():
                h, c, out = h_new, c_new, h_new
            else:
                mt = Tensor(m)
                h = h + mt * (h_new - h)
                c = c + mt * (c_new - c)
                out = h_new * mt
            outs[t] = out
        return outs

    def encode_batch(self, ids: np.ndarray, mask: np.ndarray, lang: int) -> Tensor:
        """Code matrices ``(B, code_len, code_depth)``; rows past each
        sentence are exactly zero."""
        c = self.cfg
        if lang not in (0, 1):
            raise ValueError(f"language id must be 0 or 1, got {lang}")
        B, T = ids.shape
        if T > c.max_len:
            raise ValueError(f"sentence length {T} exceeds max_len {c.max_len}")
        x = ad.embedding(self.params[f"emb.{lang}"], ids)
        fwd = bwd = None
        for layer in range(c.layers):
            fwd = ad.stack(self._run_lstm(f"enc.l{layer}.fwd", x, mask, False), axis=1)
            bwd = ad.stack(self._run_lstm(f"enc.l{layer}.bwd", x, mask, True), axis=1)
            x = ad.concat([fwd, bwd], axis=-1)
        pad = c.max_len - T
        if c.concat == "depth":
            code = x
            if pad:
                code = ad.concat([code, Tensor(np.zeros((B, pad, c.code_depth)))], axis=1)
            return code
        parts = []
        for part in (fwd, bwd):
            parts.append(part)
            if pad:
                parts.append(Tensor(np.zeros((B, pad, c.hidden))))
        return ad.concat(parts, axis=1)

    def encode(self, tokens: Sequence[int], lang: int) -> Tensor:
        """Single sentence code, unpadded: ``(T, code_depth)`` for depthwise
        concatenation, ``(2T, hidden)`` lengthwise."""
        if len(tokens) == 0:
            raise ValueError("cannot encode an empty sentence")
        ids, mask = pad_batch([list(tokens)])
        code = self.encode_batch(ids, mask, lang)
        T = len(tokens)
        if self.cfg.concat == "depth":
            return code[0, :T]
        L = self.cfg.max_len
        return ad.concat([code[0, :T], code[0, L : L + T]], axis=0)

    # decoder -------------------------------------------------------------
    def _decoder_start(self, code: Tensor):
        B = code.shape[0]
        H = self.cfg.hidden
        lstm = _FusedLstm(self.params, "dec.lstm", self.cfg.emb_dim + self.cfg.code_depth)
        code_proj = code @ self.params["dec.attn.W_c"]
        zeros = Tensor(np.zeros((B, H)))
        state = (zeros, zeros, Tensor(np.zeros((B, self.cfg.code_depth))))
        return lstm, code_proj, state

    def _decoder_step(self, lstm, code, code_proj, emb_t, state):
        """Returns the attentional hidden vector fed to the output head and
        the new ``(h, cell, context)`` state."""
        h, cell, ctx = state
        xp = lstm.input_proj(ad.concat([emb_t, ctx], axis=-1))
        h, cell = lstm.step(xp, h, cell)
        ctx, _ = _attend(h, code, code_proj, self.params, "dec.attn")
        out = ad.tanh(ad.concat([h, ctx], axis=-1) @ self.params["dec.out.W"] + self.params["dec.out.b"])
        return out, (h, cell, ctx)

    def decoder_logits(self, code: Tensor, targets: np.ndarray, lang: int) -> Tensor:
        """Teacher-forced logits ``(B, T, V_lang)`` predicting ``targets``."""
        B, T = targets.shape
        inputs = np.concatenate([np.full((B, 1), bos_id(lang)), targets[:, :-1]], axis=1)
        emb = ad.embedding(self.params[f"emb.{lang}"], inputs)
        lstm, code_proj, state = self._decoder_start(code)
        hs = []
        for t in range(T):
            out, state = self._decoder_step(lstm, code, code_proj, emb[:, t], state)
            hs.append(out)
        hidden = ad.stack(hs, axis=1)
        return hidden @ self.params[f"dec.proj.{lang}.W"] + self.params[f"dec.proj.{lang}.b"]

    def seq_loss(self, code: Tensor, sents: Sequence[Sequence[int]], lang: int) -> Tensor:
        """Mean token cross-entropy of ``sents`` (EOS appended) given ``code``."""
        targets, mask = pad_batch([list(s) + [EOS] for s in sents])
        logits = self.decoder_logits(code, targets, lang)
        return ad.cross_entropy(logits, targets, mask)

    def decode_greedy(self, code: Tensor, lang: int, max_len: int) -> list[list[int]]:
        """Greedy decoding of a batch of codes ``(B, L, D)``.

        Each output ends with EOS unless ``max_len`` tokens were emitted
        first. PAD and BOS are never produced.
        """
        if max_len < 1:
            raise ValueError("max_len must be >= 1")
        if code.ndim == 2:
            code = code.reshape(1, *code.shape)
        B = code.shape[0]
        banned = np.array([PAD, BOS_L0, BOS_L1])
        table = self.params[f"emb.{lang}"]
        W, b = self.params[f"dec.proj.{lang}.W"], self.params[f"dec.proj.{lang}.b"]
        out: list[list[int]] = [[] for _ in range(B)]
        with ad.no_grad():
            lstm, code_proj, state = self._decoder_start(code)
            prev = np.full(B, bos_id(lang))
            done = np.zeros(B, dtype=bool)
            for _ in range(max_len):
                emb_t = ad.embedding(table, prev)
                out_t, state = self._decoder_step(lstm, code, code_proj, emb_t, state)
                logits = (out_t @ W + b).data.copy()
                logits[:, banned] = -np.inf
                prev = logits.argmax(axis=1)
                for i in np.flatnonzero(~done):
                    out[i].append(int(prev[i]))
                done |= prev == EOS
                if done.all():
                    break
        return out

    # persistence ---------------------------------------------------------
    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data for k, v in self.params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        load_into(self.params, state)


def load_into(params: dict[str, Tensor], state: dict[str, np.ndarray]) -> None:
    missing = set(params) - set(state)
    if missing:
        raise CheckpointError(f"checkpoint lacks tensors: {sorted(missing)[:5]}")
    for k, p in params.items():
        if state[k].shape != p.shape:
            raise CheckpointError(f"shape mismatch for {k}: checkpoint {state[k].shape} vs model {p.shape}")
        p.data = np.array(state[k], dtype=np.float64)


def mlp_spec(prefix: str, sizes: Sequence[int]) -> dict:
    spec = {}
    for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
        spec[f"{prefix}.{i}.W"] = ((a, b), "weight")
        spec[f"{prefix}.{i}.b"] = ((b,), "bias")
    return spec


def mlp(x: Tensor, p: dict[str, Tensor], prefix: str, n_layers: int) -> Tensor:
    """ReLU MLP; the last layer is linear."""
    for i in range(n_layers):
        x = x @ p[f"{prefix}.{i}.W"] + p[f"{prefix}.{i}.b"]
        if i < n_layers - 1:
            x = ad.relu(x)
    return x


# ---------------------------------------------------------------------------
# optimizers
# ---------------------------------------------------------------------------


@dataclass
class OptimState:
    kind: str  # "adam" | "rmsprop"
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    decay: float = 0.9
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam(lr: float = 3e-4, beta1: float = 0.5, beta2: float = 0.999, eps: float = 1e-8) -> OptimState:
    return OptimState("adam", lr, beta1=beta1, beta2=beta2, eps=eps)


def rmsprop(lr: float = 5e-4, decay: float = 0.9, eps: float = 1e-8) -> OptimState:
    return OptimState("rmsprop", lr, decay=decay, eps=eps)


def _check(params, grads):
    for k, g in grads.items():
        if g.shape != params[k].shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {k} {params[k].shape}")


def adam_step(params: dict[str, Tensor], grads: dict[str, np.ndarray], state: OptimState) -> None:
    _check(params, grads)
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1 - b1**state.step
    c2 = 1 - b2**state.step
    for k, g in grads.items():
        m = state.m.get(k)
        v = state.v.get(k)
        m = (1 - b1) * g if m is None else b1 * m + (1 - b1) * g
        v = (1 - b2) * g * g if v is None else b2 * v + (1 - b2) * g * g
        state.m[k], state.v[k] = m, v
        params[k].data = params[k].data - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


def rmsprop_step(params: dict[str, Tensor], grads: dict[str, np.ndarray], state: OptimState) -> None:
    _check(params, grads)
    state.step += 1
    rho = state.decay
    for k, g in grads.items():
        s = state.v.get(k)
        s = (1 - rho) * g * g if s is None else rho * s + (1 - rho) * g * g
        state.v[k] = s
        params[k].data = params[k].data - state.lr * g / (np.sqrt(s) + state.eps)


def optimizer_step(params, grads, state: OptimState) -> None:
    (adam_step if state.kind == "adam" else rmsprop_step)(params, grads, state)


def compute_grads(loss: Tensor, params: dict[str, Tensor], names: Sequence[str]) -> dict[str, np.ndarray]:
    gs = ad.grad(loss, [params[n] for n in names])
    return {n: g.data for n, g in zip(names, gs)}
