"""Minimal reverse-mode automatic differentiation over dense float64 arrays.

Every differentiable operation appends a node to an implicit tape (nodes carry
a monotonically increasing sequence number, so reverse sequence order is a
valid reverse topological order).  ``backward`` walks the nodes reachable from
a scalar loss exactly once, newest first.

Broadcasting is deliberately limited to scalar operands.
"""

from __future__ import annotations

import itertools
import threading
import weakref
from contextlib import contextmanager
from typing import Callable, Iterator, Sequence

import numpy as np

__all__ = [
    "DimensionError",
    "NonFiniteError",
    "Tensor",
    "add",
    "avgpool2",
    "backward",
    "conv2d",
    "detach",
    "grad_enabled",
    "matmul",
    "maximum",
    "mul",
    "no_grad",
    "relu",
    "reshape",
    "scale",
    "softmax_cross_entropy",
    "spike_threshold",
    "stack",
    "sub",
    "sum",
    "surrogate_derivative",
    "unstack",
]


class DimensionError(ValueError):
    """Operand shapes are incompatible with the requested operation."""


class NonFiniteError(FloatingPointError):
    """An operation produced NaN or Inf."""


_seq = itertools.count()
_state = threading.local()


def grad_enabled() -> bool:
    return getattr(_state, "enabled", True)


@contextmanager
def no_grad() -> Iterator[None]:
    """Run forward computations without recording them on the tape."""
    prev = grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = prev


class _Node:
    __slots__ = ("op", "inputs", "outputs", "out_shapes", "backward_fn", "seq")

    def __init__(self, op, inputs, backward_fn):
        self.op = op
        self.inputs = inputs
        self.outputs: list[weakref.ref] = []
        self.out_shapes: list[tuple[int, ...]] = []
        self.backward_fn = backward_fn
        self.seq = next(_seq)


class Tensor:
    """Dense float64 array with optional gradient tracking."""

    __slots__ = ("data", "requires_grad", "grad", "_node", "_index", "name", "__weakref__")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.array(data, dtype=np.float64, order="C")
        if not np.isfinite(arr).all():
            raise NonFiniteError(f"non-finite values in tensor {name!r}")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._node: _Node | None = None
        self._index = 0
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self._node is None

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return detach(self)

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor({np.array2string(self.data, precision=6, threshold=20)}{flag})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, other)
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _record(op: str, out_data: np.ndarray, inputs: Sequence[Tensor],
            backward_fn: Callable) -> Tensor:
    outs = _record_multi(op, [out_data], inputs, lambda gs: backward_fn(gs[0]))
    return outs[0]


def _record_multi(op: str, out_datas: Sequence[np.ndarray], inputs: Sequence[Tensor],
                  backward_fn: Callable) -> list[Tensor]:
    for d in out_datas:
        if not np.isfinite(d).all():
            raise NonFiniteError(f"{op} produced non-finite values")
    track = grad_enabled() and any(t.requires_grad for t in inputs)
    outs = []
    for d in out_datas:
        t = Tensor.__new__(Tensor)
        t.data = d
        t.requires_grad = track
        t.grad = None
        t._node = None
        t._index = 0
        t.name = None
        outs.append(t)
    if track:
        node = _Node(op, tuple(inputs), backward_fn)
        for i, t in enumerate(outs):
            t._node = node
            t._index = i
            node.outputs.append(weakref.ref(t))
            node.out_shapes.append(t.shape)
    return outs


def _check_same(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape and a.ndim != 0 and b.ndim != 0:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} differ")


def _reduce_to(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    # only scalar operands are ever broadcast
    return np.asarray(grad.sum()) if shape == () and grad.shape != () else grad


# ---------------------------------------------------------------- elementwise

def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_same("add", a, b)
    return _record("add", a.data + b.data, (a, b),
                   lambda g: (_reduce_to(g, a.shape), _reduce_to(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_same("sub", a, b)
    return _record("sub", a.data - b.data, (a, b),
                   lambda g: (_reduce_to(g, a.shape), _reduce_to(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_same("mul", a, b)
    ad, bd = a.data, b.data
    return _record("mul", ad * bd, (a, b),
                   lambda g: (_reduce_to(g * bd, a.shape), _reduce_to(g * ad, b.shape)))


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _record("scale", a.data * c, (a,), lambda g: (g * c,))


def sum(a: Tensor) -> Tensor:  # noqa: A001 - mirrors the op name
    shape = a.shape
    return _record("sum", np.asarray(a.data.sum()), (a,),
                   lambda g: (np.full(shape, float(g)),))


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return _record("relu", np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))


def maximum(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise maximum; ties route the gradient to ``a``."""
    _check_same("maximum", a, b)
    if a.shape != b.shape:
        raise DimensionError("maximum: scalar operands are not supported")
    take_a = a.data >= b.data
    return _record("maximum", np.where(take_a, a.data, b.data), (a, b),
                   lambda g: (g * take_a, g * ~take_a))


def detach(a: Tensor) -> Tensor:
    t = Tensor.__new__(Tensor)
    t.data, t.requires_grad, t.grad, t._node, t._index, t.name = a.data, False, None, None, 0, None
    return t


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    old = a.shape
    try:
        out = a.data.reshape(shape)
    except ValueError as exc:
        raise DimensionError(f"reshape: cannot view {old} as {tuple(shape)}") from exc
    return _record("reshape", out, (a,), lambda g: (g.reshape(old),))


def stack(tensors: Sequence[Tensor]) -> Tensor:
    """Stack equal-shaped tensors along a new leading axis."""
    if not tensors:
        raise DimensionError("stack: empty sequence")
    shape = tensors[0].shape
    for t in tensors:
        if t.shape != shape:
            raise DimensionError(f"stack: shapes {shape} and {t.shape} differ")
    out = np.stack([t.data for t in tensors])
    return _record("stack", out, tuple(tensors), lambda g: tuple(g))


def unstack(a: Tensor) -> list[Tensor]:
    """Split along the leading axis into ``a.shape[0]`` tensors sharing one tape node."""
    if a.ndim == 0:
        raise DimensionError("unstack: scalar input")
    return _record_multi("unstack", list(a.data), (a,), lambda gs: (np.stack(gs),))


# ---------------------------------------------------------------- linear algebra

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    ad, bd = a.data, b.data
    return _record("matmul", ad @ bd, (a, b),
                   lambda g: (g @ bd.T if a.requires_grad else None,
                              ad.T @ g if b.requires_grad else None))


def _conv_out(size: int, k: int, stride: int, padding: int) -> int:
    span = size + 2 * padding - k
    if span < 0 or span % stride:
        raise DimensionError(
            f"conv2d: ({size} + 2*{padding} - {k}) / {stride} is not a non-negative integer")
    return span // stride + 1


def conv2d(x: Tensor, kernel: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """Batched 2-D cross-correlation via im2col; x is BxCxHxW, kernel FxCxkhxkw."""
    if x.ndim != 4 or kernel.ndim != 4 or x.shape[1] != kernel.shape[1]:
        raise DimensionError(f"conv2d: input {x.shape} incompatible with kernel {kernel.shape}")
    if stride < 1 or padding < 0:
        raise DimensionError("conv2d: stride must be >= 1 and padding >= 0")
    B, C, H, W = x.shape
    F, _, kh, kw = kernel.shape
    Ho, Wo = _conv_out(H, kh, stride, padding), _conv_out(W, kw, stride, padding)
    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x.data
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    win = win[:, :, ::stride, ::stride]  # B,C,Ho,Wo,kh,kw
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(B * Ho * Wo, C * kh * kw)
    kmat = kernel.data.reshape(F, -1)
    out = (cols @ kmat.T).reshape(B, Ho, Wo, F).transpose(0, 3, 1, 2)

    def backward_fn(g):
        g2 = g.transpose(0, 2, 3, 1).reshape(B * Ho * Wo, F)
        dk = (g2.T @ cols).reshape(kernel.shape) if kernel.requires_grad else None
        dx = None
        if x.requires_grad:
            dcols = (g2 @ kmat).reshape(B, Ho, Wo, C, kh, kw)
            dxp = np.zeros(xp.shape)
            for i in range(kh):
                for j in range(kw):
                    dxp[:, :, i:i + stride * Ho:stride, j:j + stride * Wo:stride] += \
                        dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
            dx = dxp[:, :, padding:padding + H, padding:padding + W] if padding else dxp
        return dx, dk

    return _record("conv2d", np.ascontiguousarray(out), (x, kernel), backward_fn)


def avgpool2(x: Tensor) -> Tensor:
    """Mean over non-overlapping 2x2 windows of a BxCxHxW tensor."""
    if x.ndim != 4:
        raise DimensionError(f"avgpool2: expected 4-d input, got {x.shape}")
    B, C, H, W = x.shape
    if H % 2 or W % 2:
        raise DimensionError(f"avgpool2: spatial dims {H}x{W} must be even")
    out = x.data.reshape(B, C, H // 2, 2, W // 2, 2).mean(axis=(3, 5))

    def backward_fn(g):
        return (np.repeat(np.repeat(g, 2, axis=2), 2, axis=3) * 0.25,)

    return _record("avgpool2", out, (x,), backward_fn)


# ---------------------------------------------------------------- spiking + loss

def surrogate_derivative(u: np.ndarray, theta: float, gamma: float) -> np.ndarray:
    """Symmetric triangle (1/gamma) * max(0, 1 - |u - theta| / gamma)."""
    return np.maximum(0.0, 1.0 - np.abs(u - theta) / gamma) / gamma


def spike_threshold(u: Tensor, theta: float, gamma: float) -> Tensor:
    """Heaviside spike u >= theta with a piecewise-linear surrogate backward."""
    if gamma <= 0:
        raise ValueError(f"spike_threshold: gamma must be positive, got {gamma}")
    if theta <= 0:
        raise ValueError(f"spike_threshold: theta must be positive, got {theta}")
    ud = u.data
    out = (ud >= theta).astype(np.float64)
    return _record("spike_threshold", out, (u,),
                   lambda g: (g * surrogate_derivative(ud, theta, gamma),))


def softmax_cross_entropy(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Batch-mean softmax cross-entropy of BxK logits against integer targets."""
    if logits.ndim != 2:
        raise DimensionError(f"cross-entropy: logits must be 2-d, got {logits.shape}")
    B, K = logits.shape
    targets = np.asarray(targets)
    if targets.shape != (B,):
        raise DimensionError(f"cross-entropy: {targets.shape[0] if targets.ndim else 0} targets for {B} rows")
    if B and (targets.min() < 0 or targets.max() >= K):
        raise ValueError(f"cross-entropy: targets must lie in [0, {K})")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(z).sum(axis=1))
    rows = np.arange(B)
    loss = np.asarray((logsumexp - z[rows, targets]).mean())

    def backward_fn(g):
        p = np.exp(z - logsumexp[:, None])
        p[rows, targets] -= 1.0
        return (p * (float(g) / B),)

    return _record("cross_entropy", loss, (logits,), backward_fn)


# ---------------------------------------------------------------- engine

def backward(loss: Tensor) -> None:
    """Populate ``.grad`` of every requires_grad tensor reachable from ``loss``.

    Gradients accumulate into existing ``.grad`` buffers, so call
    ``zero_grad`` between independent passes.
    """
    if loss.size != 1:
        raise ValueError(f"backward: loss must be a scalar, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ValueError("backward: loss is not on the tape (no input requires grad)")

    nodes: dict[int, _Node] = {}
    pending = [loss._node] if loss._node is not None else []
    while pending:
        node = pending.pop()
        if id(node) in nodes:
            continue
        nodes[id(node)] = node
        pending.extend(t._node for t in node.inputs if t._node is not None and t.requires_grad)

    grads: dict[int, np.ndarray] = {id(loss): np.ones(loss.shape)}
    for node in sorted(nodes.values(), key=lambda n: n.seq, reverse=True):
        outs = [ref() for ref in node.outputs]
        out_grads = [grads.pop(id(t), None) if t is not None else None for t in outs]
        if all(g is None for g in out_grads):
            continue
        for t, g in zip(outs, out_grads):
            if t is not None and g is not None:
                _accumulate(t, g)
        out_grads = [np.zeros(shape) if g is None else g
                     for shape, g in zip(node.out_shapes, out_grads)]
        in_grads = node.backward_fn(out_grads)
        for inp, g in zip(node.inputs, in_grads):
            if g is None or not inp.requires_grad:
                continue
            if inp._node is None:
                _accumulate(inp, g)
            else:
                key = id(inp)
                grads[key] = grads[key] + g if key in grads else g
    if loss._node is None:
        _accumulate(loss, grads.pop(id(loss)))


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    g = np.asarray(g, dtype=np.float64).reshape(t.shape)
    if not np.isfinite(g).all():
        raise NonFiniteError("backward produced non-finite gradients")
    t.grad = g.copy() if t.grad is None else t.grad + g
