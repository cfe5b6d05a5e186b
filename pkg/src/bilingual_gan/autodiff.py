"""Dense float64 tensors with a dynamic graph and reverse-mode gradients.

Every op records a backward closure. Closures of the ops in
``DOUBLE_DIFF_OPS`` are written in terms of other tensor ops, so running
``grad(..., create_graph=True)`` builds a differentiable gradient graph.
That is what the WGAN gradient penalty needs. The remaining ops compute
their vector-Jacobian products directly in numpy and refuse second-order
use.
"""

from __future__ import annotations

import contextlib
import contextvars
from typing import Callable, Iterable, Sequence

import numpy as np

_GRAD_ENABLED = contextvars.ContextVar("grad_enabled", default=True)
_CHECK_FINITE = contextvars.ContextVar("check_finite", default=False)

DOUBLE_DIFF_OPS = frozenset(
    {
        "matmul",
        "add",
        "sub",
        "mul",
        "neg",
        "relu",
        "tanh",
        "mean",
        "sum",
        "slice",
        "pad_slice",
        "concat",
        "reshape",
        "transpose",
        "broadcast_to",
        "unfold",
        "fold",
    }
)


class ShapeError(ValueError):
    def __init__(self, op: str, a: tuple, b: tuple):
        super().__init__(f"{op}: incompatible shapes {a} and {b}")
        self.op = op
        self.shapes = (a, b)


class SecondOrderError(RuntimeError):
    """Raised when a double-backward pass meets an op without support."""

    def __init__(self, op: str):
        super().__init__(f"op '{op}' does not support second-order differentiation")
        self.op = op


class NonFiniteError(FloatingPointError):
    pass


@contextlib.contextmanager
def no_grad():
    token = _GRAD_ENABLED.set(False)
    try:
        yield
    finally:
        _GRAD_ENABLED.reset(token)


@contextlib.contextmanager
def enable_grad():
    token = _GRAD_ENABLED.set(True)
    try:
        yield
    finally:
        _GRAD_ENABLED.reset(token)


@contextlib.contextmanager
def check_finite():
    """Raise :class:`NonFiniteError` whenever an op produces NaN or Inf."""
    token = _CHECK_FINITE.set(True)
    try:
        yield
    finally:
        _CHECK_FINITE.reset(token)


def grad_enabled() -> bool:
    return _GRAD_ENABLED.get()


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "op", "inputs", "_backward", "__weakref__")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.op: str | None = None
        self.inputs: tuple[Tensor, ...] = ()
        self._backward: Callable | None = None

    # -- basic properties -------------------------------------------------
    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def is_leaf(self) -> bool:
        return self.op is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> Tensor:
        return Tensor(self.data)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag}, op={self.op})"

    def __len__(self):
        return self.shape[0]

    # -- operator sugar ---------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return slice_(self, index)

    @property
    def T(self) -> Tensor:
        return transpose(self)

    def reshape(self, *shape) -> Tensor:
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def sum(self, axis=None, keepdims=False) -> Tensor:
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False) -> Tensor:
        return mean(self, axis, keepdims)

    def tanh(self) -> Tensor:
        return tanh(self)

    def relu(self) -> Tensor:
        return relu(self)

    def sigmoid(self) -> Tensor:
        return sigmoid(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, op: str, inputs: Sequence[Tensor], backward: Callable) -> Tensor:
    if _CHECK_FINITE.get() and not np.all(np.isfinite(data)):
        raise NonFiniteError(f"{op} produced non-finite values")
    out = Tensor(data)
    if _GRAD_ENABLED.get() and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out.op = op
        out.inputs = tuple(inputs)
        out._backward = backward
    return out


def _unbroadcast(g: Tensor, shape: tuple) -> Tensor:
    """Sum a broadcast gradient back down to ``shape``."""
    if g.shape == shape:
        return g
    lead = g.ndim - len(shape)
    axes = tuple(range(lead)) + tuple(
        i + lead for i, s in enumerate(shape) if s == 1 and g.shape[i + lead] != 1
    )
    return reshape(sum_(g, axes, keepdims=False), shape)


def _broadcast_shape(op, a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(op, a.shape, b.shape) from None


# ---------------------------------------------------------------------------
# elementwise arithmetic
# ---------------------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make(a.data + b.data, "add", (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("sub", a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(neg(g), b.shape)

    return _make(a.data - b.data, "sub", (a, b), backward)


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _make(-a.data, "neg", (a,), lambda g: (neg(g),))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("mul", a, b)

    def backward(g):
        ga = _unbroadcast(mul(g, b), a.shape) if a.requires_grad else None
        gb = _unbroadcast(mul(g, a), b.shape) if b.requires_grad else None
        return ga, gb

    return _make(a.data * b.data, "mul", (a, b), backward)


def scalar_mul(a, s: float) -> Tensor:
    return mul(a, Tensor(float(s)))


def gaussian_noise_add(a, sigma: float, rng: np.random.Generator) -> Tensor:
    """``a`` plus constant N(0, sigma^2) noise; the noise carries no gradient."""
    a = as_tensor(a)
    if sigma == 0:
        return a
    return add(a, Tensor(rng.normal(0.0, sigma, size=a.shape)))


# ---------------------------------------------------------------------------
# activations
# ---------------------------------------------------------------------------


def tanh(a) -> Tensor:
    a = as_tensor(a)
    y = np.tanh(a.data)

    def backward(g):
        # recomputed as a graph node so that the derivative is differentiable
        t = tanh(a) if grad_enabled() else Tensor(y)
        return (mul(g, sub(1.0, mul(t, t))),)

    return _make(y, "tanh", (a,), backward)


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = (a.data > 0).astype(np.float64)
    return _make(a.data * mask, "relu", (a,), lambda g: (mul(g, Tensor(mask)),))


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    y = 0.5 * (np.tanh(0.5 * a.data) + 1.0)
    return _make(y, "sigmoid", (a,), lambda g: (Tensor(g.data * y * (1.0 - y)),))


def exp(a) -> Tensor:
    a = as_tensor(a)
    y = np.exp(a.data)
    return _make(y, "exp", (a,), lambda g: (Tensor(g.data * y),))


def log(a) -> Tensor:
    a = as_tensor(a)
    return _make(np.log(a.data), "log", (a,), lambda g: (Tensor(g.data / a.data),))


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    y = np.sqrt(a.data)
    return _make(y, "sqrt", (a,), lambda g: (Tensor(g.data * 0.5 / y),))


def softmax(a) -> Tensor:
    """Softmax over the last axis."""
    a = as_tensor(a)
    z = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        gd = g.data
        return (Tensor(y * (gd - (gd * y).sum(axis=-1, keepdims=True))),)

    return _make(y, "softmax", (a,), backward)


def log_softmax(a) -> Tensor:
    a = as_tensor(a)
    z = a.data - a.data.max(axis=-1, keepdims=True)
    y = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))

    def backward(g):
        gd = g.data
        return (Tensor(gd - np.exp(y) * gd.sum(axis=-1, keepdims=True)),)

    return _make(y, "log_softmax", (a,), backward)


def cross_entropy(logits, targets, weights=None) -> Tensor:
    """Mean token cross-entropy.

    ``logits`` is ``(..., V)``; ``targets`` holds integer ids with the
    leading shape. Entries with zero ``weights`` (padding) are excluded
    from the mean.
    """
    logits = as_tensor(logits)
    targets = np.asarray(targets, dtype=np.int64)
    if logits.shape[:-1] != targets.shape:
        raise ShapeError("cross_entropy", logits.shape, targets.shape)
    V = logits.shape[-1]
    flat = logits.data.reshape(-1, V)
    t = targets.reshape(-1)
    w = np.ones(len(t)) if weights is None else np.asarray(weights, dtype=np.float64).reshape(-1)
    denom = w.sum()
    if denom <= 0:
        raise ValueError("cross_entropy: no unmasked targets")
    z = flat - flat.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    nll = -logp[np.arange(len(t)), t]
    loss = float((nll * w).sum() / denom)

    def backward(g):
        p = np.exp(logp)
        p[np.arange(len(t)), t] -= 1.0
        p *= (w / denom)[:, None] * float(g.data)
        return (Tensor(p.reshape(logits.shape)),)

    return _make(np.array(loss), "cross_entropy", (logits,), backward)


def bce_with_logits(logits, targets) -> Tensor:
    """Mean binary cross-entropy on raw scores (numerically stable)."""
    logits = as_tensor(logits)
    y = np.broadcast_to(np.asarray(targets, dtype=np.float64), logits.shape)
    x = logits.data
    loss = np.maximum(x, 0) - x * y + np.log1p(np.exp(-np.abs(x)))
    n = x.size

    def backward(g):
        s = 0.5 * (np.tanh(0.5 * x) + 1.0)
        return (Tensor((s - y) * float(g.data) / n),)

    return _make(np.array(loss.mean()), "bce_with_logits", (logits,), backward)


# ---------------------------------------------------------------------------
# linear algebra and shape ops
# ---------------------------------------------------------------------------


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError("matmul", a.shape, b.shape)
    try:
        if b.ndim == 2 and a.ndim > 2:
            # one BLAS call instead of numpy's per-batch loop
            out = (a.data.reshape(-1, a.shape[-1]) @ b.data).reshape(a.shape[:-1] + (b.shape[1],))
        else:
            out = np.matmul(a.data, b.data)
    except ValueError:
        raise ShapeError("matmul", a.shape, b.shape) from None

    def backward(g):
        ga = _unbroadcast(matmul(g, transpose(b)), a.shape) if a.requires_grad else None
        gb = None
        if b.requires_grad:
            if b.ndim == 2 and a.ndim > 2:
                # fold the batch axes into rows: one (k, N) @ (N, m) product
                k, m = b.shape
                gb = matmul(transpose(reshape(a, (-1, k))), reshape(g, (-1, m)))
            else:
                gb = _unbroadcast(matmul(transpose(a), g), b.shape)
        return ga, gb

    return _make(out, "matmul", (a, b), backward)


def transpose(a) -> Tensor:
    """Swap the last two axes."""
    a = as_tensor(a)
    return _make(np.swapaxes(a.data, -1, -2), "transpose", (a,), lambda g: (transpose(g),))


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    shape = tuple(shape)
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError("reshape", a.shape, shape) from None
    return _make(out, "reshape", (a,), lambda g: (reshape(g, a.shape),))


def broadcast_to(a, shape) -> Tensor:
    a = as_tensor(a)
    shape = tuple(shape)
    try:
        out = np.broadcast_to(a.data, shape).copy()
    except ValueError:
        raise ShapeError("broadcast_to", a.shape, shape) from None
    return _make(out, "broadcast_to", (a,), lambda g: (_unbroadcast(g, a.shape),))


def _norm_axes(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(sorted(ax % ndim for ax in axis))


def sum_(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    axes = _norm_axes(axis, a.ndim)
    out = a.data.sum(axis=axes, keepdims=keepdims)
    kept = tuple(1 if i in axes else s for i, s in enumerate(a.shape))

    def backward(g):
        return (broadcast_to(reshape(g, kept), a.shape),)

    return _make(out, "sum", (a,), backward)


def mean(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    axes = _norm_axes(axis, a.ndim)
    n = int(np.prod([a.shape[i] for i in axes])) if axes else 1
    out = a.data.mean(axis=axes, keepdims=keepdims) if axes else a.data.copy()
    kept = tuple(1 if i in axes else s for i, s in enumerate(a.shape))

    def backward(g):
        return (broadcast_to(reshape(mul(g, Tensor(1.0 / n)), kept), a.shape),)

    return _make(out, "mean", (a,), backward)


def l2_norm(a, axis=None) -> Tensor:
    """Euclidean norm over ``axis`` (all axes by default)."""
    a = as_tensor(a)
    axes = _norm_axes(axis, a.ndim)
    n = np.sqrt((a.data**2).sum(axis=axes, keepdims=True))
    kept = n.shape

    def backward(g):
        safe = np.where(n > 0, n, 1.0)
        gd = g.data.reshape(kept)
        return (Tensor(np.where(n > 0, gd * a.data / safe, 0.0)),)

    out = n.reshape(tuple(s for i, s in enumerate(a.shape) if i not in axes))
    return _make(out, "l2_norm", (a,), backward)


def slice_(a, index) -> Tensor:
    a = as_tensor(a)
    out = a.data[index]
    if isinstance(index, np.ndarray) or (
        isinstance(index, tuple) and any(isinstance(i, (np.ndarray, list)) for i in index)
    ):
        raise TypeError("slice supports basic indexing only; use embedding() for gathers")
    return _make(np.array(out), "slice", (a,), lambda g: (_pad_slice(g, index, a.shape),))


def _pad_slice(g: Tensor, index, shape) -> Tensor:
    """Adjoint of basic slicing: scatter ``g`` into zeros of ``shape``."""
    buf = np.zeros(shape)
    buf[index] = g.data
    return _make(buf, "pad_slice", (g,), lambda gg: (slice_(gg, index),))


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    ax = axis % tensors[0].ndim
    for t in tensors[1:]:
        if t.ndim != tensors[0].ndim or any(
            s != r for i, (s, r) in enumerate(zip(t.shape, tensors[0].shape)) if i != ax
        ):
            raise ShapeError("concat", tensors[0].shape, t.shape)
    out = np.concatenate([t.data for t in tensors], axis=ax)
    bounds = np.cumsum([0] + [t.shape[ax] for t in tensors])

    def backward(g):
        grads = []
        for t, lo, hi in zip(tensors, bounds[:-1], bounds[1:]):
            idx = (slice(None),) * ax + (slice(int(lo), int(hi)),)
            grads.append(slice_(g, idx) if t.requires_grad else None)
        return tuple(grads)

    return _make(out, "concat", tensors, backward)


def stack(tensors: Sequence, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    nd = tensors[0].ndim + 1
    ax = axis % nd
    expanded = [reshape(t, t.shape[:ax] + (1,) + t.shape[ax:]) for t in tensors]
    return concat(expanded, axis=ax)


def embedding(table, ids) -> Tensor:
    """Row gather ``table[ids]``."""
    table = as_tensor(table)
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise IndexError(f"embedding: id out of range for table with {table.shape[0]} rows")
    out = table.data[ids]

    def backward(g):
        buf = np.zeros(table.shape)
        np.add.at(buf, ids.reshape(-1), g.data.reshape(-1, table.shape[1]))
        return (Tensor(buf),)

    return _make(out, "embedding", (table,), backward)


# ---------------------------------------------------------------------------
# 1-d convolution ("same" padding) via unfold/fold, both linear
# ---------------------------------------------------------------------------


def _unfold_np(x: np.ndarray, k: int) -> np.ndarray:
    p = k // 2
    T = x.shape[-2]
    pad = [(0, 0)] * (x.ndim - 2) + [(p, p), (0, 0)]
    xp = np.pad(x, pad)
    cols = [xp[..., j : j + T, :] for j in range(k)]
    return np.concatenate(cols, axis=-1)


def _fold_np(cols: np.ndarray, k: int, cin: int) -> np.ndarray:
    p = k // 2
    T = cols.shape[-2]
    out = np.zeros(cols.shape[:-2] + (T + 2 * p, cin))
    for j in range(k):
        out[..., j : j + T, :] += cols[..., j * cin : (j + 1) * cin]
    return out[..., p : p + T, :]


def unfold(x, k: int) -> Tensor:
    """``(..., T, C) -> (..., T, k*C)`` windows centred on each step, zero padded."""
    x = as_tensor(x)
    cin = x.shape[-1]
    return _make(_unfold_np(x.data, k), "unfold", (x,), lambda g: (fold(g, k, cin),))


def fold(cols, k: int, cin: int) -> Tensor:
    cols = as_tensor(cols)
    return _make(_fold_np(cols.data, k, cin), "fold", (cols,), lambda g: (unfold(g, k),))


def conv1d(signal, kernels, bias=None) -> Tensor:
    """Same-padded 1-d convolution over the length axis.

    ``signal`` is ``(..., T, Cin)``, ``kernels`` is ``(K, Cin, Cout)`` with
    odd ``K``; the result is ``(..., T, Cout)``.
    """
    signal, kernels = as_tensor(signal), as_tensor(kernels)
    if kernels.ndim != 3 or signal.ndim < 2 or kernels.shape[1] != signal.shape[-1]:
        raise ShapeError("conv1d", signal.shape, kernels.shape)
    k, cin, cout = kernels.shape
    if k % 2 == 0:
        raise ValueError(f"conv1d: kernel width must be odd, got {k}")
    out = matmul(unfold(signal, k), reshape(kernels, (k * cin, cout)))
    if bias is not None:
        out = add(out, bias)
    return out


# ---------------------------------------------------------------------------
# reverse pass
# ---------------------------------------------------------------------------


def _topo_order(root: Tensor) -> list[Tensor]:
    order, seen = [], set()
    stack_ = [(root, False)]
    while stack_:
        node, expanded = stack_.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack_.append((node, True))
        for inp in node.inputs:
            if inp.requires_grad and id(inp) not in seen:
                stack_.append((inp, False))
    return order


def _accumulate(acc: dict, t: Tensor, g: Tensor):
    prev = acc.get(id(t))
    acc[id(t)] = g if prev is None else add(prev, g)


def grad(
    output: Tensor, inputs: Sequence[Tensor], create_graph: bool = False
) -> list[Tensor]:
    """Gradients of scalar ``output`` with respect to each of ``inputs``.

    Inputs not reachable from ``output`` receive zeros. With
    ``create_graph`` the returned tensors are themselves differentiable.
    """
    if output.data.size != 1:
        raise ValueError(f"grad: output must be scalar, got shape {output.shape}")
    acc: dict[int, Tensor] = {}
    if output.requires_grad:
        acc[id(output)] = Tensor(np.ones(output.shape))
        ctx = enable_grad() if create_graph else no_grad()
        with ctx:
            for node in reversed(_topo_order(output)):
                g = acc.get(id(node))
                if g is None or node.is_leaf:
                    continue
                if create_graph and node.op not in DOUBLE_DIFF_OPS:
                    raise SecondOrderError(node.op)
                for inp, gi in zip(node.inputs, node._backward(g)):
                    if gi is not None and inp.requires_grad:
                        _accumulate(acc, inp, gi)
                if not create_graph:
                    # interior gradients are no longer needed
                    acc.pop(id(node), None)
    return [acc.get(id(t), Tensor(np.zeros(t.shape))) for t in inputs]


def backward(loss: Tensor, params: Iterable[Tensor] | None = None) -> dict[Tensor, np.ndarray]:
    """Reverse pass from scalar ``loss``.

    Accumulates into ``.grad`` of every reachable leaf (and of any extra
    ``params``, which get zeros when unreachable) and returns the map
    leaf -> gradient array.
    """
    if loss.data.size != 1:
        raise ValueError(f"backward: loss must be scalar, got shape {loss.shape}")
    leaves = [n for n in _topo_order(loss) if n.is_leaf] if loss.requires_grad else []
    if params is not None:
        ids = {id(t) for t in leaves}
        leaves += [p for p in params if id(p) not in ids]
    grads = grad(loss, leaves)
    out = {}
    for leaf, g in zip(leaves, grads):
        leaf.grad = g.data.copy() if leaf.grad is None else leaf.grad + g.data
        out[leaf] = g.data
    return out


def grad_norm_graph(critic_output: Tensor, wrt: Tensor, batch_axis: int | None = None) -> Tensor:
    """Differentiable L2 norm of d(critic_output)/d(wrt).

    With ``batch_axis`` the norm is taken per slice along that axis (one
    norm per sample), which is correct when samples do not interact.
    """
    (g,) = grad(critic_output, [wrt], create_graph=True)
    if batch_axis is None:
        return l2_norm(g)
    b = batch_axis % g.ndim
    return l2_norm(g, axis=tuple(i for i in range(g.ndim) if i != b))


def finite_diff_check(f: Callable[[Tensor], Tensor], x: Tensor | np.ndarray, eps: float = 1e-5) -> float:
    """Max over coordinates of ``|analytic - central| / max(1, |central|)``."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    x0 = np.array(as_tensor(x).data, dtype=np.float64)
    xt = Tensor(x0.copy(), requires_grad=True)
    (analytic,) = grad(f(xt), [xt])
    numeric = np.zeros_like(x0)
    flat = x0.reshape(-1)
    # f may itself differentiate its input (gradient penalty), so grad mode
    # stays on and the perturbed points are differentiable leaves
    for i in range(flat.size):
        xp, xm = flat.copy(), flat.copy()
        xp[i] += eps
        xm[i] -= eps
        fp = f(Tensor(xp.reshape(x0.shape), requires_grad=True)).item()
        fm = f(Tensor(xm.reshape(x0.shape), requires_grad=True)).item()
        numeric.reshape(-1)[i] = (fp - fm) / (2 * eps)
    err = np.abs(analytic.data - numeric) / np.maximum(1.0, np.abs(numeric))
    return float(np.max(err)) if err.size else 0.0
