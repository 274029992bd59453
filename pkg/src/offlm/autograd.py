"""Reverse-mode automatic differentiation over numpy arrays.

Provides exactly the primitives the encoder, the losses, and the
optimizer need: broadcast-aware elementwise arithmetic, matmul, softmax,
GELU, tanh, layer norm, embedding lookup, dropout, slicing/reshaping,
summation, and a fused masked cross-entropy. Working precision is
float32; float64 is supported end to end for gradient verification.

Every completed operation validates that its result is finite: NaN/Inf
raises NumericError instead of propagating silently.
"""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import erf

from .errors import NumericError, ShapeError

_FLOAT_DTYPES = (np.float32, np.float64)


def _check_finite(arr: np.ndarray, name: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"non-finite values in {name}")


class GradContext:
    """One recorded node of the operation graph.

    Holds the parent tensors and a callable mapping the output gradient
    to one gradient per parent (None for parents that need no gradient).
    """

    __slots__ = ("op", "parents", "backward_fn")

    def __init__(self, op: str, parents: Sequence["Tensor"],
                 backward_fn: Callable[[np.ndarray], tuple]):
        self.op = op
        self.parents = tuple(parents)
        self.backward_fn = backward_fn


class Tensor:
    """N-dimensional float array, optionally participating in the tape.

    `requires_grad` marks a leaf whose gradient should be accumulated
    into `.grad` by `backward`. Tensors produced by operations carry a
    GradContext linking them to their inputs.
    """

    __slots__ = ("data", "grad", "requires_grad", "ctx")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.array(data, dtype=dtype)
        if arr.dtype not in _FLOAT_DTYPES:
            arr = arr.astype(np.float32)
        _check_finite(arr, "tensor")
        self.data = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.ctx: Optional[GradContext] = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def zero_grad(self) -> None:
        self.grad = None

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype.name}, requires_grad={self.requires_grad})"

    # operator sugar; all real work happens in the module-level ops
    def __add__(self, other):
        return add(self, _wrap(other, self))

    def __radd__(self, other):
        return add(_wrap(other, self), self)

    def __sub__(self, other):
        return add(self, mul(_wrap(other, self), _wrap(-1.0, self)))

    def __mul__(self, other):
        return mul(self, _wrap(other, self))

    def __rmul__(self, other):
        return mul(_wrap(other, self), self)

    def __neg__(self):
        return mul(self, _wrap(-1.0, self))

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("tensor/tensor division is not a supported primitive")
        return mul(self, _wrap(1.0 / other, self))

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return take(self, key)


def _wrap(value, like: Tensor) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=like.dtype))


def _from_op(data: np.ndarray, op: str, parents: Sequence[Tensor],
             backward_fn: Callable[[np.ndarray], tuple]) -> Tensor:
    _check_finite(data, op)
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.requires_grad = False
    out.ctx = None
    if any(p.requires_grad or p.ctx is not None for p in parents):
        out.ctx = GradContext(op, parents, backward_fn)
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a broadcast gradient back to the operand's shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# primitives


def add(a: Tensor, b: Tensor) -> Tensor:
    out = a.data + b.data

    def bwd(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _from_op(out, "add", (a, b), bwd)


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = a.data * b.data

    def bwd(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _from_op(out, "mul", (a, b), bwd)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product; supports stacked leading dimensions via np.matmul."""
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ShapeError(f"matmul needs >=2-d operands, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner extents disagree: {a.shape} @ {b.shape}")
    out = np.matmul(a.data, b.data)

    def bwd(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _from_op(out, "matmul", (a, b), bwd)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Probability-normalize along `axis`, max-subtracted for stability."""
    if not -x.data.ndim <= axis < x.data.ndim:
        raise ShapeError(f"softmax axis {axis} invalid for shape {x.shape}")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def bwd(g):
        dot = (g * out).sum(axis=axis, keepdims=True)
        return (out * (g - dot),)

    return _from_op(out, "softmax", (x,), bwd)


def gelu(x: Tensor) -> Tensor:
    """Exact (erf-based) GELU."""
    inv_sqrt2 = 1.0 / np.sqrt(2.0)
    cdf = 0.5 * (1.0 + erf(x.data * inv_sqrt2))
    out = (x.data * cdf).astype(x.dtype)

    def bwd(g):
        pdf = np.exp(-0.5 * x.data * x.data) / np.sqrt(2.0 * np.pi)
        return ((g * (cdf + x.data * pdf)).astype(x.dtype),)

    return _from_op(out, "gelu", (x,), bwd)


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)

    def bwd(g):
        return (g * (1.0 - out * out),)

    return _from_op(out, "tanh", (x,), bwd)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, epsilon: float) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then scale+shift."""
    mean = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + epsilon)
    xhat = (x.data - mean) * inv_std
    out = gain.data * xhat + bias.data

    def bwd(g):
        dxhat = g * gain.data
        m1 = dxhat.mean(axis=-1, keepdims=True)
        m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
        dx = inv_std * (dxhat - m1 - xhat * m2)
        axes = tuple(range(g.ndim - 1))
        dgain = (g * xhat).sum(axis=axes)
        dbias = g.sum(axis=axes)
        return dx, dgain, dbias

    return _from_op(out, "layer_norm", (x, gain, bias), bwd)


def embedding(table: Tensor, ids: np.ndarray) -> Tensor:
    """Row lookup; gradient scatter-adds into the table."""
    ids = np.asarray(ids)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ShapeError(
            f"embedding ids out of range [0, {table.shape[0]}): min={ids.min()}, max={ids.max()}")
    out = table.data[ids]

    def bwd(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids.reshape(-1), g.reshape(-1, table.shape[-1]))
        return (gt,)

    return _from_op(out, "embedding", (table,), bwd)


def dropout(x: Tensor, rate: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout; identity when rate == 0."""
    if rate == 0.0:
        return x
    keep = (rng.random(x.shape) >= rate).astype(x.dtype) / (1.0 - rate)

    def bwd(g):
        return (g * keep,)

    return _from_op(x.data * keep, "dropout", (x,), bwd)


def reshape(x: Tensor, shape: tuple) -> Tensor:
    out = x.data.reshape(shape)

    def bwd(g):
        return (g.reshape(x.shape),)

    return _from_op(out, "reshape", (x,), bwd)


def transpose(x: Tensor, axes: tuple) -> Tensor:
    out = x.data.transpose(axes)
    inverse = tuple(np.argsort(axes))

    def bwd(g):
        return (g.transpose(inverse),)

    return _from_op(out, "transpose", (x,), bwd)


def take(x: Tensor, key) -> Tensor:
    """Basic (slice/index) selection; gradient scatters into zeros."""
    out = x.data[key]

    def bwd(g):
        gx = np.zeros_like(x.data)
        gx[key] = g
        return (gx,)

    return _from_op(out, "take", (x,), bwd)


def tensor_sum(x: Tensor, axis: Optional[int] = None) -> Tensor:
    out = x.data.sum(axis=axis)

    def bwd(g):
        if axis is None:
            return (np.broadcast_to(g, x.shape).astype(x.dtype).copy(),)
        expanded = np.expand_dims(g, axis)
        return (np.broadcast_to(expanded, x.shape).astype(x.dtype).copy(),)

    return _from_op(out, "sum", (x,), bwd)


def masked_cross_entropy(logits: Tensor, targets: np.ndarray, mask: np.ndarray,
                         reduction: str = "sum") -> Tensor:
    """Cross-entropy of `targets` under softmax(logits), gated by `mask`.

    Positions with mask 0 contribute nothing. `reduction="sum"` returns
    the plain sum over masked positions (0 for an all-zero mask);
    `"mean"` divides by the number of masked positions and treats an
    all-zero mask as a degenerate batch.
    """
    targets = np.asarray(targets)
    mask = np.asarray(mask)
    n, vocab = logits.shape[-2], logits.shape[-1]
    if logits.data.ndim != 2:
        raise ShapeError(f"masked_cross_entropy expects [n, V] logits, got {logits.shape}")
    if targets.shape != (n,) or mask.shape != (n,):
        raise ShapeError(
            f"targets/mask must have shape ({n},), got {targets.shape} and {mask.shape}")
    if n and (targets.min() < 0 or targets.max() >= vocab):
        raise ShapeError(f"target ids out of range [0, {vocab})")
    if not np.isin(mask, (0, 1)).all():
        raise ShapeError("mask entries must be 0 or 1")
    if reduction not in ("sum", "mean"):
        raise ShapeError(f"unknown reduction {reduction!r}")

    mask_count = float(mask.sum())
    if reduction == "mean" and mask_count == 0:
        raise NumericError("degenerate batch: mean-form loss over an all-zero mask")

    z = logits.data
    zmax = z.max(axis=1, keepdims=True) if n else np.zeros((0, 1), dtype=z.dtype)
    lse = zmax[:, 0] + np.log(np.exp(z - zmax).sum(axis=1)) if n else np.zeros(0, dtype=z.dtype)
    log_p_target = z[np.arange(n), targets] - lse
    m = mask.astype(z.dtype)
    total = -(m * log_p_target).sum()
    scale = 1.0 if reduction == "sum" else 1.0 / mask_count
    out = np.asarray(total * scale, dtype=z.dtype)

    def bwd(g):
        probs = np.exp(z - zmax - np.log(np.exp(z - zmax).sum(axis=1, keepdims=True)))
        probs[np.arange(n), targets] -= 1.0
        return ((g * scale) * m[:, None] * probs,)

    return _from_op(out, "masked_cross_entropy", (logits,), bwd)


# ---------------------------------------------------------------------------
# backward pass


def backward(loss: Tensor) -> None:
    """Backpropagate from a scalar loss through the recorded graph.

    Gradients add into the `.grad` buffers of requires_grad leaves, so a
    repeated backward without zero_grad accumulates. Each recorded node
    is visited exactly once, in reverse topological order.
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")

    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        if node.ctx is not None:
            for parent in node.ctx.parents:
                if id(parent) not in seen:
                    stack.append((parent, False))

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(topo):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.requires_grad:
            if node.grad is None:
                node.grad = np.zeros_like(node.data)
            node.grad += g
        if node.ctx is None:
            continue
        parent_grads = node.ctx.backward_fn(g)
        for parent, pg in zip(node.ctx.parents, parent_grads):
            if pg is None or not (parent.requires_grad or parent.ctx is not None):
                continue
            _check_finite(pg, f"gradient of {node.ctx.op}")
            if id(parent) in grads:
                grads[id(parent)] = grads[id(parent)] + pg
            else:
                grads[id(parent)] = pg


def zero_grads(tensors) -> None:
    for t in tensors:
        t.zero_grad()
