"""Small NCHW tensor engine with tape-based reverse-mode differentiation.

Only the operations the enhancement network and its losses need are
provided. Every tensor is rank 4 ``(N, C, H, W)``; scalars are ``1x1x1x1``.

Usage::

    tape = Tape()
    x = tape.watch(np.random.rand(1, 3, 8, 8))
    loss = mean(relu(x))
    grads = backward(tape, loss)
    grads[x.node]  # d loss / d x
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

DEFAULT_DTYPE = np.float32


class ShapeError(ValueError):
    """Raised when operand shapes do not match an operation's contract."""


class Tensor:
    """Immutable rank-4 array, optionally attached to a :class:`Tape`."""

    __slots__ = ("data", "tape", "node")

    def __init__(self, data, tape: Optional["Tape"] = None, node: Optional[int] = None, dtype=None):
        arr = np.asarray(data)
        if dtype is None:
            dtype = np.float64 if arr.dtype == np.float64 else DEFAULT_DTYPE
        arr = np.array(arr, dtype=dtype, order="C")
        if arr.ndim != 4:
            raise ShapeError(f"tensor must be rank 4 (N, C, H, W), got shape {arr.shape}")
        arr.flags.writeable = False
        self.data = arr
        self.tape = tape
        self.node = node

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> "Tensor":
        # op outputs are fresh arrays: skip the defensive copy
        t = object.__new__(cls)
        arr = np.ascontiguousarray(arr)
        arr.flags.writeable = False
        t.data, t.tape, t.node = arr, None, None
        return t

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, node={self.node})"

    # Operator sugar; the functional forms below are the primary API.
    def __add__(self, other):
        return add(self, _as_tensor(other, self))

    def __sub__(self, other):
        return sub(self, _as_tensor(other, self))

    def __mul__(self, other):
        if np.isscalar(other):
            return scale(self, float(other))
        return mul(self, other)

    __radd__ = __add__
    __rmul__ = __mul__


def _as_tensor(value, like: Tensor) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.full(like.shape, value, dtype=like.dtype))


@dataclass
class TapeEntry:
    kind: str
    inputs: tuple
    output: int
    backward_fn: Optional[Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]]


@dataclass
class Tape:
    """Ordered record of executed operations.

    Entries are appended in execution order, so inputs always precede the
    operations that consume them.
    """

    entries: list = field(default_factory=list)
    shapes: list = field(default_factory=list)

    def watch(self, data) -> Tensor:
        """Register ``data`` as a differentiable leaf and return its tensor."""
        arr = data.data if isinstance(data, Tensor) else data
        t = Tensor(arr)
        t.tape = self
        t.node = self._append("leaf", (), t.shape, None)
        return t

    def _append(self, kind, inputs, shape, backward_fn) -> int:
        node = len(self.entries)
        self.entries.append(TapeEntry(kind, tuple(inputs), node, backward_fn))
        self.shapes.append(tuple(shape))
        return node

    @property
    def leaves(self) -> list:
        return [e.output for e in self.entries if e.kind == "leaf"]

    def gradient(self, root: Tensor, sources: Sequence[Tensor]) -> list:
        grads = backward(self, root)
        return [grads[s.node] for s in sources]


def _record(kind: str, inputs: Sequence[Tensor], out: np.ndarray, backward_fn) -> Tensor:
    tape = None
    for t in inputs:
        if t.tape is not None:
            if tape is not None and t.tape is not tape:
                raise ValueError("operands belong to different tapes")
            tape = t.tape
    result = Tensor._wrap(out)
    if tape is None:
        return result
    ids = tuple(t.node if t.tape is tape else None for t in inputs)
    result.tape = tape
    result.node = tape._append(kind, ids, out.shape, backward_fn)
    return result


def backward(tape: Tape, root: Tensor) -> dict:
    """Reverse-mode sweep from a scalar ``root``.

    Returns a mapping from every leaf node id on ``tape`` to its gradient.
    Leaves the root does not depend on receive zeros.
    """
    if root.data.size != 1:
        raise ShapeError(f"backward needs a scalar root, got shape {root.shape}")
    if root.tape is not tape or root.node is None:
        raise ValueError("root was not recorded on this tape")

    grads: dict = {root.node: np.ones(root.shape, dtype=root.dtype)}
    for entry in reversed(tape.entries[: root.node + 1]):
        g = grads.get(entry.output)
        if g is None or entry.backward_fn is None:
            continue
        for node, gi in zip(entry.inputs, entry.backward_fn(g)):
            if node is None or gi is None:
                continue
            if node in grads:
                grads[node] = grads[node] + gi
            else:
                grads[node] = gi
        if entry.kind != "leaf":
            del grads[entry.output]

    result = {}
    for node in tape.leaves:
        if node in grads:
            result[node] = grads[node]
        else:
            result[node] = np.zeros(tape.shapes[node], dtype=root.dtype)
    return result


# --------------------------------------------------------------------------
# broadcasting helpers


def _check_binary(a: Tensor, b: Tensor) -> str:
    """Classify the broadcast pattern of ``b`` against ``a``."""
    if a.shape == b.shape:
        return "same"
    n, c, h, w = a.shape
    if b.shape == (n, c, 1, 1):
        return "channel"
    if b.shape == (n, 1, h, w):
        return "pixel"
    raise ShapeError(f"cannot broadcast {b.shape} against {a.shape}")


def _reduce_like(g: np.ndarray, pattern: str) -> np.ndarray:
    if pattern == "channel":
        return g.sum(axis=(2, 3), keepdims=True)
    if pattern == "pixel":
        return g.sum(axis=1, keepdims=True)
    return g


# --------------------------------------------------------------------------
# elementwise ops


def add(a: Tensor, b: Tensor) -> Tensor:
    pattern = _check_binary(a, b)
    out = a.data + b.data
    return _record("add", (a, b), out, lambda g: (g, _reduce_like(g, pattern)))


def sub(a: Tensor, b: Tensor) -> Tensor:
    pattern = _check_binary(a, b)
    out = a.data - b.data
    return _record("sub", (a, b), out, lambda g: (g, -_reduce_like(g, pattern)))


def mul(a: Tensor, b: Tensor) -> Tensor:
    pattern = _check_binary(a, b)
    ad, bd = a.data, b.data
    out = ad * bd
    return _record("mul", (a, b), out, lambda g: (g * bd, _reduce_like(g * ad, pattern)))


def div(a: Tensor, b: Tensor) -> Tensor:
    pattern = _check_binary(a, b)
    ad, bd = a.data, b.data
    out = ad / bd

    def back(g):
        ga = g / bd
        return ga, _reduce_like(-ga * out, pattern)

    return _record("div", (a, b), out, back)


def scale(x: Tensor, factor: float) -> Tensor:
    out = x.data * x.dtype.type(factor)
    return _record("scale", (x,), out, lambda g: (g * x.dtype.type(factor),))


def shift(x: Tensor, offset: float) -> Tensor:
    out = x.data + x.dtype.type(offset)
    return _record("shift", (x,), out, lambda g: (g,))


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    out = np.where(mask, x.data, x.dtype.type(0))
    return _record("relu", (x,), out, lambda g: (g * mask,))


def sigmoid(x: Tensor) -> Tensor:
    # split by sign so exp never overflows
    d = x.data
    e = np.exp(-np.abs(d))
    out = np.where(d >= 0, 1 / (1 + e), e / (1 + e)).astype(x.dtype)
    return _record("sigmoid", (x,), out, lambda g: (g * out * (1 - out),))


def absolute(x: Tensor) -> Tensor:
    sign = np.sign(x.data)
    return _record("abs", (x,), np.abs(x.data), lambda g: (g * sign,))


# --------------------------------------------------------------------------
# reductions


def global_avg_pool(x: Tensor) -> Tensor:
    n, c, h, w = x.shape
    if h < 1 or w < 1:
        raise ShapeError(f"global_avg_pool needs non-empty spatial extent, got {x.shape}")
    out = x.data.mean(axis=(2, 3), keepdims=True)
    inv = x.dtype.type(1.0 / (h * w))
    return _record("gap", (x,), out, lambda g: (np.broadcast_to(g * inv, x.shape).copy(),))


def sum_all(x: Tensor) -> Tensor:
    out = x.data.sum(dtype=x.dtype).reshape(1, 1, 1, 1)
    return _record("sum", (x,), out, lambda g: (np.full(x.shape, g.reshape(()), dtype=x.dtype),))


def mean(x: Tensor) -> Tensor:
    size = x.data.size
    out = (x.data.sum(dtype=x.dtype) / size).reshape(1, 1, 1, 1).astype(x.dtype)
    return _record("mean", (x,), out, lambda g: (np.full(x.shape, g.reshape(()) / size, dtype=x.dtype),))


# --------------------------------------------------------------------------
# convolution


def _windows(xp: np.ndarray, kh: int, kw: int, h: int, w: int) -> np.ndarray:
    """im2col: ``(N*H*W, C*kh*kw)`` patch matrix of a pre-padded input."""
    n, c = xp.shape[:2]
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    # win: (N, C, H, W, kh, kw)
    return win.transpose(0, 2, 3, 1, 4, 5).reshape(n * h * w, c * kh * kw)


def conv2d(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Stride-1 cross-correlation with zero "same" padding.

    ``weight`` is stored as a ``(K, C, kh, kw)`` tensor and ``bias`` as
    ``(1, K, 1, 1)``.
    """
    n, c, h, w = x.shape
    k, wc, kh, kw = weight.shape
    if wc != c:
        raise ShapeError(f"conv2d: weight expects {wc} input channels, input has {c} (input {x.shape}, weight {weight.shape})")
    if kh % 2 == 0 or kw % 2 == 0:
        raise ShapeError(f"conv2d: kernel extents must be odd, got {kh}x{kw}")
    if bias.shape != (1, k, 1, 1):
        raise ShapeError(f"conv2d: bias must have shape (1, {k}, 1, 1), got {bias.shape}")
    ph, pw = kh // 2, kw // 2

    if kh == 1 and kw == 1:
        cols = x.data.transpose(0, 2, 3, 1).reshape(n * h * w, c)
    else:
        xp = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
        cols = _windows(xp, kh, kw, h, w)
    wmat = weight.data.reshape(k, c * kh * kw)
    out = cols @ wmat.T + bias.data.reshape(1, k)
    out = out.reshape(n, h, w, k).transpose(0, 3, 1, 2)
    out = np.ascontiguousarray(out)

    def back(g):
        g2 = g.transpose(0, 2, 3, 1).reshape(n * h * w, k)
        gw = (g2.T @ cols).reshape(weight.shape)
        gb = g2.sum(axis=0).reshape(1, k, 1, 1)
        if x.tape is None:
            return None, gw, gb
        gcols = g2 @ wmat
        if kh == 1 and kw == 1:
            gx = gcols.reshape(n, h, w, c).transpose(0, 3, 1, 2)
            return np.ascontiguousarray(gx), gw, gb
        gcols = gcols.reshape(n, h, w, c, kh, kw)
        gxp = np.zeros((n, c, h + 2 * ph, w + 2 * pw), dtype=g.dtype)
        for i in range(kh):
            for j in range(kw):
                gxp[:, :, i : i + h, j : j + w] += gcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        return gxp[:, :, ph : ph + h, pw : pw + w].copy(), gw, gb

    return _record("conv2d", (x, weight, bias), out, back)


def filter_valid(x: Tensor, kernel: np.ndarray) -> Tensor:
    """Per-channel correlation with a fixed 2-D kernel, keeping only full windows.

    Output is ``(N, C, H - kh + 1, W - kw + 1)``. Differentiable in ``x`` only.
    """
    n, c, h, w = x.shape
    kh, kw = kernel.shape
    if h < kh or w < kw:
        raise ShapeError(f"filter_valid: input {h}x{w} smaller than window {kh}x{kw}")
    oh, ow = h - kh + 1, w - kw + 1
    kern = np.asarray(kernel, dtype=x.dtype)
    flat = x.data.reshape(n * c, h, w)
    win = np.lib.stride_tricks.sliding_window_view(flat, (kh, kw), axis=(1, 2))
    out = np.tensordot(win, kern, axes=([3, 4], [0, 1])).reshape(n, c, oh, ow)

    def back(g):
        g3 = g.reshape(n * c, oh, ow)
        gx = np.zeros((n * c, h, w), dtype=g.dtype)
        for i in range(kh):
            for j in range(kw):
                gx[:, i : i + oh, j : j + ow] += kern[i, j] * g3
        return (gx.reshape(n, c, h, w),)

    return _record("filter_valid", (x,), out.astype(x.dtype), back)


# --------------------------------------------------------------------------
# gradient checking


def grad_check(f: Callable[[Tensor], Tensor], x, eps: float = 1e-3, dtype=np.float64) -> float:
    """Largest relative gap between tape gradients and central differences.

    Relative error per element is ``|a - n| / max(|a|, |n|, 1e-6)``.
    Evaluation runs in ``dtype`` (float64 by default) so the numeric
    estimate is not swamped by rounding.
    """
    base = np.array(x.data if isinstance(x, Tensor) else x, dtype=dtype)
    tape = Tape()
    xt = tape.watch(base)
    out = f(xt)
    analytic = backward(tape, out)[xt.node].astype(np.float64)

    numeric = np.empty(base.size, dtype=np.float64)
    flat = base.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = f(Tensor(base.copy(), dtype=dtype)).item()
        flat[i] = orig - eps
        fm = f(Tensor(base.copy(), dtype=dtype)).item()
        flat[i] = orig
        numeric[i] = (fp - fm) / (2 * eps)

    a = analytic.reshape(-1)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(numeric)), 1e-6)
    return float(np.max(np.abs(a - numeric) / denom))
