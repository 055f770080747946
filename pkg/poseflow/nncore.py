# SPDX-License-Identifier: MIT
# Copyright (c) 2025 PoseFlow Contributors

"""Dense tensors with tape-based reverse-mode differentiation on numpy.

Every operation computes its forward value eagerly and, when any input
requires a gradient, records a closure mapping the output gradient to
input gradients. ``Tensor.backward`` walks the recorded graph once in
reverse topological order and then releases it.

Storage is float32 by default. ``precision(np.float64)`` switches newly
created tensors to float64, which is what the gradient checks use as
their reference path.
"""

import contextlib
import contextvars
import logging
import math
import zlib
from collections.abc import Callable, Iterator, Sequence
from typing import Any

import numpy as np

from poseflow.config import (
    GRADIENT_CHECK_EPS,
    GRADIENT_CHECK_FLOOR,
    INIT_STD,
    INIT_TRUNCATION,
    LAYER_NORM_EPS,
)
from poseflow.errors import ShapeMismatchError

logger = logging.getLogger(__name__)

_dtype: contextvars.ContextVar[type[np.floating[Any]]] = contextvars.ContextVar(
    "poseflow_dtype", default=np.float32
)
_grad_enabled: contextvars.ContextVar[bool] = contextvars.ContextVar(
    "poseflow_grad_enabled", default=True
)

_GELU_C = math.sqrt(2.0 / math.pi)

ArrayLike = Any
Backward = Callable[[np.ndarray], Sequence[np.ndarray | None]]


def default_dtype() -> type[np.floating[Any]]:
    """Return the dtype used for newly created tensors."""
    return _dtype.get()


@contextlib.contextmanager
def precision(dtype: Any) -> Iterator[None]:
    """Create tensors with ``dtype`` (float32 or float64) inside the block."""
    resolved = np.dtype(dtype).type
    if resolved not in (np.float32, np.float64):
        raise ValueError(f"unsupported precision {np.dtype(dtype).name}")
    token = _dtype.set(resolved)
    try:
        yield
    finally:
        _dtype.reset(token)


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Run forward passes without recording a graph."""
    token = _grad_enabled.set(False)
    try:
        yield
    finally:
        _grad_enabled.reset(token)


def is_grad_enabled() -> bool:
    return _grad_enabled.get()


class Tensor:
    """An n-dimensional array with an optional gradient buffer."""

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(
        self,
        data: ArrayLike,
        requires_grad: bool = False,
        name: str | None = None,
    ) -> None:
        self.data: np.ndarray = np.asarray(data, dtype=default_dtype())
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Backward | None = None

    # -- basic properties ---------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.data.shape)

    @property
    def ndim(self) -> int:
        return int(self.data.ndim)

    @property
    def size(self) -> int:
        return int(self.data.size)

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeMismatchError("item", self.shape, (), "not a scalar")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype.name}{label})"

    # -- graph traversal ----------------------------------------------------

    def backward(self, grad: ArrayLike | None = None) -> None:
        """Accumulate d(self)/d(leaf) into the ``grad`` of every leaf.

        The graph is released afterwards; call ``backward`` once per forward.
        """
        if grad is None:
            if self.data.size != 1:
                raise ShapeMismatchError(
                    "backward", self.shape, (), "implicit gradient needs a scalar"
                )
            seed = np.ones_like(self.data)
        else:
            seed = np.asarray(grad, dtype=self.data.dtype)
            if seed.shape != self.data.shape:
                raise ShapeMismatchError("backward", self.shape, seed.shape)

        order = _topological_order(self)
        grads: dict[int, np.ndarray] = {id(self): seed}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            parent_grads = node._backward(g)
            for parent, pg in zip(node._parents, parent_grads):
                if pg is None or not parent.requires_grad:
                    continue
                pg = _unbroadcast(np.asarray(pg, dtype=parent.data.dtype), parent.shape)
                key = id(parent)
                grads[key] = grads[key] + pg if key in grads else pg
            node._parents = ()
            node._backward = None

    # -- operators ------------------------------------------------------------

    def __add__(self, other: ArrayLike) -> "Tensor":
        return add(self, other)

    def __radd__(self, other: ArrayLike) -> "Tensor":
        return add(other, self)

    def __sub__(self, other: ArrayLike) -> "Tensor":
        return sub(self, other)

    def __rsub__(self, other: ArrayLike) -> "Tensor":
        return sub(other, self)

    def __mul__(self, other: ArrayLike) -> "Tensor":
        return mul(self, other)

    def __rmul__(self, other: ArrayLike) -> "Tensor":
        return mul(other, self)

    def __truediv__(self, other: ArrayLike) -> "Tensor":
        return div(self, other)

    def __rtruediv__(self, other: ArrayLike) -> "Tensor":
        return div(other, self)

    def __neg__(self) -> "Tensor":
        return mul(self, -1.0)

    def __pow__(self, exponent: float) -> "Tensor":
        return power(self, exponent)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    def __getitem__(self, index: Any) -> "Tensor":
        return getitem(self, index)

    def sum(self, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> "Tensor":
        return tensor_sum(self, axis, keepdims)

    def mean(self, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> "Tensor":
        return tensor_mean(self, axis, keepdims)

    def reshape(self, *shape: int) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes: int) -> "Tensor":
        return transpose(self, axes or None)


def _topological_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))
    return order


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def as_tensor(value: ArrayLike) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _result(data: np.ndarray, parents: Sequence[Tensor], backward: Backward) -> Tensor:
    out = Tensor(data)
    if _grad_enabled.get() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


# -- elementwise arithmetic -----------------------------------------------


def _broadcast_check(op: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeMismatchError(op, a.shape, b.shape) from None


def add(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check("add", a, b)
    return _result(a.data + b.data, (a, b), lambda g: (g, g))


def sub(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check("sub", a, b)
    return _result(a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check("mul", a, b)
    return _result(a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data))


def div(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check("div", a, b)
    out = a.data / b.data
    return _result(out, (a, b), lambda g: (g / b.data, -g * out / b.data))


def power(a: Tensor, exponent: float) -> Tensor:
    out = a.data**exponent
    return _result(
        out, (a,), lambda g: (g * exponent * a.data ** (exponent - 1),)
    )


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _result(out, (a,), lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    return _result(np.log(a.data), (a,), lambda g: (g / a.data,))


def sqrt(a: Tensor) -> Tensor:
    out = np.sqrt(a.data)
    return _result(out, (a,), lambda g: (g * 0.5 / out,))


def sin(a: Tensor) -> Tensor:
    return _result(np.sin(a.data), (a,), lambda g: (g * np.cos(a.data),))


def cos(a: Tensor) -> Tensor:
    return _result(np.cos(a.data), (a,), lambda g: (-g * np.sin(a.data),))


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return _result(out, (a,), lambda g: (g * (1.0 - out * out),))


def absolute(a: Tensor) -> Tensor:
    return _result(np.abs(a.data), (a,), lambda g: (g * np.sign(a.data),))


def clip(a: Tensor, low: float, high: float) -> Tensor:
    inside = (a.data >= low) & (a.data <= high)
    return _result(np.clip(a.data, low, high), (a,), lambda g: (g * inside,))


def gelu(a: Tensor) -> Tensor:
    """GELU, tanh approximation."""
    x = a.data
    inner = _GELU_C * (x + 0.044715 * x**3)
    t = np.tanh(inner)
    out = 0.5 * x * (1.0 + t)

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        d_inner = _GELU_C * (1.0 + 3.0 * 0.044715 * x**2)
        return (g * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * d_inner),)

    return _result(out, (a,), backward)


# -- reductions and shape manipulation ------------------------------------


def _normalize_axes(axis: int | tuple[int, ...] | None, ndim: int) -> tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(ax % ndim for ax in axis)


def tensor_sum(a: Tensor, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> Tensor:
    axes = _normalize_axes(axis, a.ndim)
    out = a.data.sum(axis=axes, keepdims=keepdims)

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, a.shape),)

    return _result(out, (a,), backward)


def tensor_mean(a: Tensor, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> Tensor:
    """Mean with the reduction accumulated in float64."""
    axes = _normalize_axes(axis, a.ndim)
    count = int(np.prod([a.shape[ax] for ax in axes])) if axes else 1
    out = a.data.astype(np.float64).mean(axis=axes, keepdims=keepdims)

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g / count, a.shape),)

    return _result(out.astype(a.data.dtype), (a,), backward)


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    try:
        out = a.data.reshape(tuple(shape))
    except ValueError:
        raise ShapeMismatchError("reshape", a.shape, tuple(shape)) from None
    return _result(out, (a,), lambda g: (g.reshape(a.shape),))


def transpose(a: Tensor, axes: Sequence[int] | None = None) -> Tensor:
    perm = tuple(axes) if axes is not None else tuple(reversed(range(a.ndim)))
    inverse = tuple(np.argsort(perm))
    return _result(a.data.transpose(perm), (a,), lambda g: (g.transpose(inverse),))


def swapaxes(a: Tensor, axis1: int, axis2: int) -> Tensor:
    perm = list(range(a.ndim))
    perm[axis1], perm[axis2] = perm[axis2], perm[axis1]
    return transpose(a, perm)


def broadcast_to(a: Tensor, shape: Sequence[int]) -> Tensor:
    try:
        out = np.broadcast_to(a.data, tuple(shape))
    except ValueError:
        raise ShapeMismatchError("broadcast_to", a.shape, tuple(shape)) from None
    return _result(np.ascontiguousarray(out), (a,), lambda g: (g,))


def getitem(a: Tensor, index: Any) -> Tensor:
    out = a.data[index]

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        full = np.zeros_like(a.data)
        np.add.at(full, index, g)
        return (full,)

    return _result(np.array(out, copy=True), (a,), backward)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    parts = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in parts], axis=axis)
    except ValueError:
        raise ShapeMismatchError(
            "concat", parts[0].shape, parts[-1].shape, f"axis={axis}"
        ) from None
    bounds = np.cumsum([t.shape[axis] for t in parts])[:-1]

    def backward(g: np.ndarray) -> list[np.ndarray]:
        return list(np.split(g, bounds, axis=axis))

    return _result(out, parts, backward)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    parts = [as_tensor(t) for t in tensors]
    out = np.stack([t.data for t in parts], axis=axis)
    ax = axis % out.ndim

    def backward(g: np.ndarray) -> list[np.ndarray]:
        return [np.take(g, i, axis=ax) for i in range(len(parts))]

    return _result(out, parts, backward)


# -- linear algebra and normalization -------------------------------------


def matmul(a: ArrayLike, b: ArrayLike) -> Tensor:
    """Batched matrix product ``a[.., m, k] @ b[.., k, n]``."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeMismatchError("matmul", a.shape, b.shape, "inner extents differ")
    try:
        out = np.matmul(a.data, b.data)
    except ValueError:
        raise ShapeMismatchError("matmul", a.shape, b.shape) from None

    def backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return (
            np.matmul(g, np.swapaxes(b.data, -1, -2)),
            np.matmul(np.swapaxes(a.data, -1, -2), g),
        )

    return _result(out, (a, b), backward)


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _result(out, (a,), backward)


def layer_norm(
    x: Tensor,
    gain: Tensor | None = None,
    bias: Tensor | None = None,
    eps: float = LAYER_NORM_EPS,
) -> Tensor:
    """Normalize the last axis to zero mean and unit variance, then apply
    the optional affine ``gain``/``bias``. Statistics are computed in float64.
    """
    if eps <= 0:
        raise ValueError("layer_norm eps must be positive")
    d = x.shape[-1]
    for label, param in (("gain", gain), ("bias", bias)):
        if param is not None and param.shape != (d,):
            raise ShapeMismatchError("layer_norm", x.shape, param.shape, label)

    x64 = x.data.astype(np.float64)
    mu = x64.mean(axis=-1, keepdims=True)
    var = ((x64 - mu) ** 2).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x64 - mu) * inv
    out = xhat
    if gain is not None:
        out = out * gain.data
    if bias is not None:
        out = out + bias.data
    dtype = x.data.dtype
    parents: list[Tensor] = [x]
    if gain is not None:
        parents.append(gain)
    if bias is not None:
        parents.append(bias)

    def backward(g: np.ndarray) -> list[np.ndarray]:
        g64 = g.astype(np.float64)
        lead = tuple(range(g.ndim - 1))
        g_hat = g64 * gain.data if gain is not None else g64
        dx = inv * (
            g_hat
            - g_hat.mean(axis=-1, keepdims=True)
            - xhat * (g_hat * xhat).mean(axis=-1, keepdims=True)
        )
        grads = [dx.astype(dtype)]
        if gain is not None:
            grads.append((g64 * xhat).sum(axis=lead).astype(dtype))
        if bias is not None:
            grads.append(g64.sum(axis=lead).astype(dtype))
        return grads

    return _result(out.astype(dtype), parents, backward)


def _split_heads(t: Tensor, heads: int) -> Tensor:
    *lead, length, d = t.shape
    t = reshape(t, (*lead, length, heads, d // heads))
    return swapaxes(t, -2, -3)


def _merge_heads(t: Tensor) -> Tensor:
    t = swapaxes(t, -2, -3)
    *lead, length, heads, dh = t.shape
    return reshape(t, (*lead, length, heads * dh))


def attention(
    q: Tensor,
    k: Tensor,
    v: Tensor,
    heads: int,
    return_weights: bool = False,
) -> Tensor | tuple[Tensor, Tensor]:
    """Multi-head scaled dot-product attention over the key axis.

    ``q`` is ``[.., L_q, d]``, ``k`` and ``v`` are ``[.., L_k, d]``. Heads
    are split from and merged back into the last axis; the output
    projection belongs to :class:`poseflow.layers.MultiHeadAttention`.
    """
    d = q.shape[-1]
    if heads < 1 or d % heads != 0:
        raise ShapeMismatchError("attention", q.shape, (heads,), "d not divisible by heads")
    if k.shape[-1] != d or v.shape[-1] != d or k.shape[-2] != v.shape[-2]:
        raise ShapeMismatchError("attention", k.shape, v.shape)
    qh, kh, vh = _split_heads(q, heads), _split_heads(k, heads), _split_heads(v, heads)
    scores = matmul(qh, swapaxes(kh, -1, -2)) * (1.0 / math.sqrt(d // heads))
    weights = softmax(scores, axis=-1)
    out = _merge_heads(matmul(weights, vh))
    if return_weights:
        return out, weights
    return out


def frequency_embed(coords: ArrayLike, num_freqs: int) -> Tensor:
    """Sinusoidal embedding of every coordinate.

    Each coordinate ``c`` expands to ``sin(2^j pi c), cos(2^j pi c)`` for
    ``j = 0 .. num_freqs-1``, interleaved per frequency, so the output's
    last axis has ``D * 2 * num_freqs`` entries.
    """
    if num_freqs < 1:
        raise ValueError("num_freqs must be at least 1")
    c = as_tensor(coords)
    freqs = Tensor(np.pi * 2.0 ** np.arange(num_freqs))
    scaled = mul(reshape(c, (*c.shape, 1)), freqs)
    pairs = stack([sin(scaled), cos(scaled)], axis=-1)
    return reshape(pairs, (*c.shape[:-1], c.shape[-1] * 2 * num_freqs))


# -- losses -----------------------------------------------------------------


def mse_loss(pred: Tensor, target: ArrayLike) -> Tensor:
    target_t = as_tensor(target)
    if pred.shape != target_t.shape:
        raise ShapeMismatchError("mse_loss", pred.shape, target_t.shape)
    diff = sub(pred, target_t)
    return tensor_mean(mul(diff, diff))


def l1_loss(pred: Tensor, target: ArrayLike) -> Tensor:
    target_t = as_tensor(target)
    if pred.shape != target_t.shape:
        raise ShapeMismatchError("l1_loss", pred.shape, target_t.shape)
    return tensor_mean(absolute(sub(pred, target_t)))


# -- random state -----------------------------------------------------------


def _key_part(part: str | int) -> int:
    if isinstance(part, int):
        return part & 0xFFFFFFFF
    return zlib.crc32(part.encode("utf-8"))


class RngState:
    """Deterministic counter-based random stream.

    A stream is identified by its root seed and a path of names/indices;
    ``substream`` derives an independent child stream, so the values a
    component sees depend only on its path, never on call order elsewhere.
    """

    def __init__(self, seed: int, path: Sequence[str | int] = ()) -> None:
        if seed < 0 or seed >= 2**64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
        self.seed = int(seed)
        self.path = tuple(path)
        sequence = np.random.SeedSequence(
            self.seed, spawn_key=tuple(_key_part(p) for p in self.path)
        )
        self.generator = np.random.Generator(np.random.Philox(sequence))

    def substream(self, *parts: str | int) -> "RngState":
        return RngState(self.seed, (*self.path, *parts))

    def normal(self, shape: Sequence[int] | int, std: float = 1.0) -> np.ndarray:
        return self.generator.normal(0.0, std, size=shape)

    def uniform(self, shape: Sequence[int] | int, low: float = 0.0, high: float = 1.0) -> np.ndarray:
        return self.generator.uniform(low, high, size=shape)

    def integers(self, low: int, high: int, shape: Sequence[int] | int | None = None) -> Any:
        return self.generator.integers(low, high, size=shape)

    def choice(self, n: int, size: int, replace: bool = True) -> np.ndarray:
        return self.generator.choice(n, size=size, replace=replace)

    def permutation(self, n: int) -> np.ndarray:
        return self.generator.permutation(n)

    def child_seed(self) -> int:
        """A 63-bit integer seed drawn from this stream."""
        return int(self.generator.integers(0, 2**63))

    def truncated_normal(self, shape: Sequence[int], std: float = INIT_STD) -> np.ndarray:
        values = self.generator.normal(0.0, 1.0, size=shape)
        bad = np.abs(values) > INIT_TRUNCATION
        while bad.any():
            values[bad] = self.generator.normal(0.0, 1.0, size=int(bad.sum()))
            bad = np.abs(values) > INIT_TRUNCATION
        return values * std

    def __repr__(self) -> str:
        return f"RngState(seed={self.seed}, path={self.path!r})"


# -- gradient checking ------------------------------------------------------


def check_gradients(
    fn: Callable[..., Tensor],
    inputs: Sequence[Tensor],
    eps: float = GRADIENT_CHECK_EPS,
) -> float:
    """Compare analytic gradients of scalar ``fn(*inputs)`` against central
    finite differences.

    Returns the largest relative error over the inputs, measured per input
    as ``|analytic - numeric| / max(|analytic|, |numeric|)`` in the 2-norm.
    """
    for t in inputs:
        t.data = np.ascontiguousarray(t.data)
        t.requires_grad = True
        t.grad = None
    out = fn(*inputs)
    if out.size != 1:
        raise ShapeMismatchError("check_gradients", out.shape, (), "fn must return a scalar")
    out.backward()
    analytic = [
        np.zeros_like(t.data, dtype=np.float64) if t.grad is None else t.grad.astype(np.float64)
        for t in inputs
    ]

    worst = 0.0
    with no_grad():
        for t, grad in zip(inputs, analytic):
            numeric = np.zeros_like(grad)
            flat = t.data.reshape(-1)
            for i in range(flat.size):
                original = flat[i]
                flat[i] = original + eps
                plus = float(fn(*inputs).data.astype(np.float64).sum())
                flat[i] = original - eps
                minus = float(fn(*inputs).data.astype(np.float64).sum())
                flat[i] = original
                numeric.reshape(-1)[i] = (plus - minus) / (2.0 * eps)
            scale = max(np.linalg.norm(grad), np.linalg.norm(numeric), GRADIENT_CHECK_FLOOR)
            error = float(np.linalg.norm(grad - numeric) / scale)
            logger.debug("gradient check %s: relative error %.3e", t.name or t.shape, error)
            worst = max(worst, error)
    return worst


def is_finite(t: Tensor | np.ndarray) -> bool:
    data = t.data if isinstance(t, Tensor) else t
    return bool(np.all(np.isfinite(data)))


__all__ = [
    "RngState",
    "Tensor",
    "absolute",
    "add",
    "as_tensor",
    "attention",
    "broadcast_to",
    "check_gradients",
    "clip",
    "concat",
    "cos",
    "default_dtype",
    "div",
    "exp",
    "frequency_embed",
    "gelu",
    "getitem",
    "is_finite",
    "is_grad_enabled",
    "l1_loss",
    "layer_norm",
    "log",
    "matmul",
    "mse_loss",
    "mul",
    "no_grad",
    "power",
    "precision",
    "reshape",
    "sin",
    "softmax",
    "sqrt",
    "stack",
    "sub",
    "swapaxes",
    "tanh",
    "tensor_mean",
    "tensor_sum",
    "transpose",
]
