"""Finite-difference gradient suite over every differentiable op.

Each case builds a scalar function of one input tensor; the other operands
are fixed random arrays drawn from the same seed. Shared by the test suite
and the ``grad-check`` command.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

TOLERANCE = 1e-4
PENALTY_TOLERANCE = 1e-3


@dataclass
class CheckResult:
    name: str
    max_error: float
    tolerance: float

    @property
    def ok(self) -> bool:
        return self.max_error <= self.tolerance


def _weighted(out: Tensor, rng) -> Tensor:
    # a random linear functional, so every output coordinate matters
    return (out * rng.normal(size=out.shape)).sum()


def _away_from_zero(rng, shape, margin=0.1):
    x = rng.normal(size=shape)
    return np.where(np.abs(x) < margin, np.sign(x) * margin + x, x)


def _cases(rng: np.random.Generator) -> dict[str, tuple[Callable[[Tensor], Tensor], np.ndarray]]:
    A = rng.normal(size=(3, 4))
    B = rng.normal(size=(4, 5))
    W3 = rng.normal(size=(2, 3, 4))
    C = rng.normal(size=(3, 4))
    bias = rng.normal(size=(4,))
    targets = rng.integers(0, 5, size=(3,))
    kernels = rng.normal(size=(3, 2, 4))
    signal = rng.normal(size=(2, 5, 2))
    conv_bias = rng.normal(size=(4,))
    table_ids = np.array([[0, 2, 2], [1, 0, 3]])
    noise_rng_seed = int(rng.integers(1 << 31))
    lin = rng.normal(size=(5,))

    def w(out):
        return _weighted(out, np.random.default_rng(7))

    return {
        "matmul": (lambda x: w(ad.matmul(x, B)), A),
        "matmul_batched": (lambda x: w(ad.matmul(x, B)), W3),
        "add": (lambda x: w(x + bias), C),
        "sub": (lambda x: w(C - x), A),
        "mul": (lambda x: w(x * C), A),
        "scalar_mul": (lambda x: w(ad.scalar_mul(x, -2.5)), A),
        "tanh": (lambda x: w(ad.tanh(x)), A),
        "sigmoid": (lambda x: w(ad.sigmoid(x)), A),
        "relu": (lambda x: w(ad.relu(x)), _away_from_zero(rng, (3, 4))),
        "exp": (lambda x: w(ad.exp(x)), A * 0.5),
        "log": (lambda x: w(ad.log(x)), np.abs(A) + 0.5),
        "sqrt": (lambda x: w(ad.sqrt(x)), np.abs(A) + 0.5),
        "softmax": (lambda x: w(ad.softmax(x)), A),
        "log_softmax": (lambda x: w(ad.log_softmax(x)), A),
        "cross_entropy": (lambda x: ad.cross_entropy(x, targets), rng.normal(size=(3, 5))),
        "bce_with_logits": (lambda x: ad.bce_with_logits(x, np.array([0.0, 1.0, 1.0])), rng.normal(size=(3,))),
        "concat": (lambda x: w(ad.concat([x, C], axis=1)), A),
        "stack": (lambda x: w(ad.stack([x, C], axis=0)), A),
        "slice": (lambda x: w(x[1:, ::2]), A),
        "transpose": (lambda x: w(ad.transpose(x)), A),
        "reshape": (lambda x: w(x.reshape(2, 6)), A),
        "mean": (lambda x: w(ad.mean(x, axis=0)), A),
        "sum": (lambda x: w(ad.sum_(x, axis=1, keepdims=True)), A),
        "l2_norm": (lambda x: w(ad.l2_norm(x, axis=1)), A),
        "conv1d": (lambda x: w(ad.conv1d(x, kernels)), rng.normal(size=(2, 6, 2))),
        "conv1d_kernels": (lambda k: w(ad.conv1d(signal, k, conv_bias)), kernels),
        "embedding": (lambda t: w(ad.embedding(t, table_ids)), rng.normal(size=(4, 3))),
        "gaussian_noise_add": (
            lambda x: w(ad.gaussian_noise_add(x, 0.3, np.random.default_rng(noise_rng_seed))),
            A,
        ),
        "composite": (lambda x: ad.tanh(ad.matmul(ad.relu(x @ B), lin.reshape(5, 1))).sum(), A),
    }


def penalty_case(rng: np.random.Generator) -> tuple[Callable[[Tensor], Tensor], np.ndarray]:
    """Gradient penalty of a small conv critic as a function of the mix point."""
    k1 = rng.normal(size=(3, 2, 3)) * 0.7
    k2 = rng.normal(size=(3, 3, 2)) * 0.7
    out_w = rng.normal(size=(8, 1))

    def critic(x):
        h = ad.tanh(ad.conv1d(x, k1))
        h = ad.conv1d(h, k2)
        return (h.reshape(h.shape[0], 8) @ out_w).reshape(h.shape[0])

    def penalty(x):
        norms = ad.grad_norm_graph(critic(x).sum(), x, batch_axis=0)
        d = norms - 1.0
        return (d * d).mean()

    return penalty, rng.normal(size=(2, 4, 2))


def run_suite(seeds=range(10), eps: float = 1e-5) -> list[CheckResult]:
    """Worst error per case over all seeds, plus the second-order penalty case."""
    worst: dict[str, float] = {}
    for seed in seeds:
        for name, (f, x) in _cases(np.random.default_rng(seed)).items():
            err = ad.finite_diff_check(f, x, eps)
            worst[name] = max(worst.get(name, 0.0), err)
    results = [CheckResult(n, e, TOLERANCE) for n, e in worst.items()]
    pen = 0.0
    for seed in seeds:
        f, x = penalty_case(np.random.default_rng(seed))
        pen = max(pen, ad.finite_diff_check(f, x, eps))
    results.append(CheckResult("gradient_penalty (2nd order)", pen, PENALTY_TOLERANCE))
    return results


def format_table(results: list[CheckResult]) -> str:
    width = max(len(r.name) for r in results)
    lines = [f"{'op'.ljust(width)}  max_rel_err  tol      result"]
    for r in results:
        lines.append(f"{r.name.ljust(width)}  {r.max_error:.3e}    {r.tolerance:.0e}    {'PASS' if r.ok else 'FAIL'}")
    return "\n".join(lines)
