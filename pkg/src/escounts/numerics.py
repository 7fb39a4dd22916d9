"""Minimal dense float32 tensor engine with reverse-mode autodiff.

Covers exactly what the counting decoder needs: (batched) matmul, row
softmax, layer norm, GELU/softplus nonlinearities, shape movement
(reshape/permute/roll/pad/crop) and reductions. Tensors are immutable
values; gradients are accumulated on leaf tensors by ``GradTape.backward``.

The tape is define-by-run: every differentiable op executed while a tape
is active appends one node, so the creation order is a topological order
and the backward pass simply walks the record in reverse. Tapes are
thread-local, so independent forward/backward passes may run on separate
threads as long as each thread uses its own tape.
"""

from __future__ import annotations

import threading
from typing import Sequence

import numpy as np

__all__ = [
    "NonFiniteError",
    "Tensor",
    "GradTape",
    "tensor",
    "add",
    "sub",
    "neg",
    "mul",
    "matmul",
    "transpose_last2",
    "permute",
    "reshape",
    "roll",
    "pad",
    "crop",
    "tsum",
    "tmean",
    "tabs",
    "gelu",
    "softplus",
    "softmax_lastdim",
    "layer_norm",
]


class NonFiniteError(ArithmeticError):
    """A tensor op produced NaN or Inf."""


_local = threading.local()


def _active_tape() -> "GradTape | None":
    return getattr(_local, "tape", None)


def _check_finite(data: np.ndarray, op: str) -> None:
    if not np.all(np.isfinite(data)):
        raise NonFiniteError(f"non-finite values produced by op '{op}'")


class Tensor:
    """Immutable float32 array plus a gradient buffer.

    ``requires_grad=True`` on a user-created tensor marks a leaf: its
    ``grad`` buffer is allocated eagerly (zeros), so an unused leaf reads
    back a zero gradient and repeated backward passes accumulate
    additively. Op outputs inherit ``requires_grad`` from their inputs but
    allocate their buffer lazily during backward.
    """

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.array(data, dtype=np.float32)  # owned copy, caller keeps theirs
        _check_finite(arr, "tensor")
        arr.flags.writeable = False
        self.data = arr
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(arr) if requires_grad else None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def zero_grad(self) -> None:
        if self.requires_grad:
            self.grad = np.zeros_like(self.data)

    def _accumulate(self, g: np.ndarray) -> None:
        if not self.requires_grad:
            return
        _check_finite(g, "grad")
        if self.grad is None:
            self.grad = g.astype(np.float32, copy=True)
        else:
            self.grad = self.grad + g.astype(np.float32, copy=False)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


class GradTape:
    """Ordered record of differentiable ops for one forward pass.

    Use as a context manager around the forward computation, then call
    ``backward(loss)``. Only one tape may be active per thread.
    """

    def __init__(self):
        self._nodes: list[tuple[Tensor, object]] = []

    def __enter__(self) -> "GradTape":
        if _active_tape() is not None:
            raise RuntimeError("a GradTape is already active on this thread")
        _local.tape = self
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        _local.tape = None

    def __len__(self) -> int:
        return len(self._nodes)

    def _record(self, out: Tensor, backward_fn) -> None:
        self._nodes.append((out, backward_fn))

    def backward(self, loss: Tensor) -> None:
        """Accumulate d(loss)/d(leaf) into every reachable leaf's ``grad``.

        Visits recorded nodes in exact reverse order of creation, which is
        a reverse topological order for a define-by-run graph.
        """
        if loss.data.size != 1:
            raise ValueError(f"loss must be scalar, got shape {loss.shape}")
        loss._accumulate(np.ones_like(loss.data))
        for out, backward_fn in reversed(self._nodes):
            if out.grad is None:
                continue  # not on any path to the loss
            backward_fn(out.grad)


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


def _wrap(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=np.float32))


def _make(data: np.ndarray, op: str, inputs: Sequence[Tensor], backward_fn) -> Tensor:
    """Create the op output and record ``backward_fn`` on the active tape."""
    out = Tensor.__new__(Tensor)
    arr = np.ascontiguousarray(data, dtype=np.float32)
    _check_finite(arr, op)
    arr.flags.writeable = False
    out.data = arr
    out.requires_grad = any(t.requires_grad for t in inputs)
    out.grad = None
    tape = _active_tape()
    if tape is not None and out.requires_grad:
        tape._record(out, backward_fn)
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``g`` down to ``shape`` (reverse of numpy broadcasting)."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def add(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)

    def bwd(g):
        a._accumulate(_unbroadcast(g, a.shape))
        b._accumulate(_unbroadcast(g, b.shape))

    return _make(a.data + b.data, "add", (a, b), bwd)


def sub(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)

    def bwd(g):
        a._accumulate(_unbroadcast(g, a.shape))
        b._accumulate(-_unbroadcast(g, b.shape))

    return _make(a.data - b.data, "sub", (a, b), bwd)


def neg(a) -> Tensor:
    a = _wrap(a)

    def bwd(g):
        a._accumulate(-g)

    return _make(-a.data, "neg", (a,), bwd)


def mul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)

    def bwd(g):
        a._accumulate(_unbroadcast(g * b.data, a.shape))
        b._accumulate(_unbroadcast(g * a.data, b.shape))

    return _make(a.data * b.data, "mul", (a, b), bwd)


def matmul(a, b) -> Tensor:
    """Matrix product, 2-D or batched N-D with identical leading dims."""
    a, b = _wrap(a), _wrap(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError("matmul needs tensors of rank >= 2")
    if a.ndim != b.ndim or a.shape[:-2] != b.shape[:-2]:
        raise ValueError(f"matmul batch dims differ: {a.shape} vs {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ValueError(f"matmul inner dims differ: {a.shape} vs {b.shape}")

    def bwd(g):
        a._accumulate(np.matmul(g, np.swapaxes(b.data, -1, -2)))
        b._accumulate(np.matmul(np.swapaxes(a.data, -1, -2), g))

    return _make(np.matmul(a.data, b.data), "matmul", (a, b), bwd)


def transpose_last2(a) -> Tensor:
    a = _wrap(a)

    def bwd(g):
        a._accumulate(np.swapaxes(g, -1, -2))

    return _make(np.swapaxes(a.data, -1, -2), "transpose_last2", (a,), bwd)


def permute(a, axes: Sequence[int]) -> Tensor:
    a = _wrap(a)
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))

    def bwd(g):
        a._accumulate(np.transpose(g, inverse))

    return _make(np.transpose(a.data, axes), "permute", (a,), bwd)


def reshape(a, shape: Sequence[int]) -> Tensor:
    a = _wrap(a)
    orig = a.shape

    def bwd(g):
        a._accumulate(g.reshape(orig))

    return _make(a.data.reshape(tuple(shape)), "reshape", (a,), bwd)


def roll(a, shifts: Sequence[int], axes: Sequence[int]) -> Tensor:
    a = _wrap(a)
    shifts, axes = tuple(shifts), tuple(axes)

    def bwd(g):
        a._accumulate(np.roll(g, tuple(-s for s in shifts), axis=axes))

    return _make(np.roll(a.data, shifts, axis=axes), "roll", (a,), bwd)


def pad(a, pads: Sequence[tuple[int, int]]) -> Tensor:
    """Zero-pad; ``pads`` gives (before, after) per axis."""
    a = _wrap(a)
    pads = tuple((int(lo), int(hi)) for lo, hi in pads)
    if len(pads) != a.ndim:
        raise ValueError("pad needs one (before, after) pair per axis")
    sl = tuple(slice(lo, lo + n) for (lo, _), n in zip(pads, a.shape))

    def bwd(g):
        a._accumulate(g[sl])

    return _make(np.pad(a.data, pads), "pad", (a,), bwd)


def crop(a, bounds: Sequence[tuple[int, int]]) -> Tensor:
    """Slice ``a[lo:hi]`` per axis; the gradient zero-embeds back."""
    a = _wrap(a)
    bounds = tuple((int(lo), int(hi)) for lo, hi in bounds)
    if len(bounds) != a.ndim:
        raise ValueError("crop needs one (lo, hi) pair per axis")
    sl = tuple(slice(lo, hi) for lo, hi in bounds)

    def bwd(g):
        full = np.zeros(a.shape, dtype=np.float32)
        full[sl] = g
        a._accumulate(full)

    return _make(a.data[sl], "crop", (a,), bwd)


def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _wrap(a)
    shape = a.shape

    def bwd(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        a._accumulate(np.broadcast_to(g, shape))

    return _make(a.data.sum(axis=axis, keepdims=keepdims), "sum", (a,), bwd)


def tmean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _wrap(a)
    if axis is None:
        n = a.data.size
    elif isinstance(axis, tuple):
        n = int(np.prod([a.shape[ax] for ax in axis]))
    else:
        n = a.shape[axis]
    return mul(tsum(a, axis=axis, keepdims=keepdims), 1.0 / n)


def tabs(a) -> Tensor:
    a = _wrap(a)

    def bwd(g):
        a._accumulate(g * np.sign(a.data))

    return _make(np.abs(a.data), "abs", (a,), bwd)


_GELU_C = np.float32(np.sqrt(2.0 / np.pi))


def gelu(a) -> Tensor:
    """GELU, tanh approximation."""
    a = _wrap(a)
    x = a.data
    inner = _GELU_C * (x + np.float32(0.044715) * x**3)
    t = np.tanh(inner)

    def bwd(g):
        sech2 = 1.0 - t * t
        d = 0.5 * (1.0 + t) + 0.5 * x * sech2 * _GELU_C * (1.0 + 3 * 0.044715 * x * x)
        a._accumulate(g * d)

    return _make(0.5 * x * (1.0 + t), "gelu", (a,), bwd)


def softplus(a) -> Tensor:
    """log(1 + exp(x)), overflow-safe."""
    a = _wrap(a)
    out = np.logaddexp(np.float32(0.0), a.data)

    def bwd(g):
        # sigmoid(x) = exp(x - softplus(x)), stable for both tails
        a._accumulate(g * np.exp(a.data - out))

    return _make(out, "softplus", (a,), bwd)


def softmax_lastdim(a) -> Tensor:
    """Row softmax over the last axis, stabilized by max subtraction."""
    a = _wrap(a)
    if a.shape[-1] < 1:
        raise ValueError("softmax needs a non-empty last axis")
    z = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)

    def bwd(g):
        dot = (g * y).sum(axis=-1, keepdims=True)
        a._accumulate(y * (g - dot))

    return _make(y, "softmax_lastdim", (a,), bwd)


_LN_EPS = np.float32(1e-5)


def layer_norm(a, gain, bias) -> Tensor:
    """Per-row (last axis) normalization to zero mean, unit variance, then affine.

    Uses eps=1e-5 inside the square root; a constant row normalizes to
    exactly zero, so the output falls back to the bias.
    """
    a, gain, bias = _wrap(a), _wrap(gain), _wrap(bias)
    c = a.shape[-1]
    if gain.shape != (c,) or bias.shape != (c,):
        raise ValueError(
            f"gain/bias must have shape ({c},), got {gain.shape} and {bias.shape}"
        )
    mu = a.data.mean(axis=-1, keepdims=True)
    xc = a.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + _LN_EPS)
    xhat = xc * inv

    def bwd(g):
        lead = tuple(range(g.ndim - 1))
        bias._accumulate(g.sum(axis=lead))
        gain._accumulate((g * xhat).sum(axis=lead))
        gg = g * gain.data
        m1 = gg.mean(axis=-1, keepdims=True)
        m2 = (gg * xhat).mean(axis=-1, keepdims=True)
        a._accumulate((gg - m1 - xhat * m2) * inv)

    return _make(xhat * gain.data + bias.data, "layer_norm", (a, gain, bias), bwd)
