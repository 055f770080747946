# SPDX-License-Identifier: MIT
# Copyright (c) 2025 PoseFlow Contributors

"""Parameter storage, the small set of layers the models are built from,
and the Adam optimizer.

Layers hold references to tensors owned by a :class:`ParameterStore`.
Loading a checkpoint overwrites the stored arrays in place, so layer
objects never need to be rebuilt.
"""

import logging
from collections.abc import Iterator, Mapping
from typing import Literal

import numpy as np

from poseflow.config import ADAM_BETAS, ADAM_EPS, INIT_STD
from poseflow.errors import CheckpointError, NonFiniteError
from poseflow.nncore import (
    RngState,
    Tensor,
    attention,
    gelu,
    layer_norm,
    matmul,
)

logger = logging.getLogger(__name__)

Init = Literal["trunc_normal", "zeros", "ones"]


class ParameterStore:
    """Ordered map from unique parameter names to tensors.

    Initial values depend only on the store seed and the parameter name,
    so two stores built with the same seed hold identical parameters no
    matter what else was created in between.

    With ``allocate=False`` every parameter is a read-only zero view of its
    shape; such a store only serves for counting parameters.
    """

    def __init__(self, seed: int = 0, allocate: bool = True) -> None:
        self.seed = int(seed)
        self.allocate = allocate
        self._rng = RngState(self.seed, ("init",))
        self._params: dict[str, Tensor] = {}

    def create(
        self,
        name: str,
        shape: tuple[int, ...],
        init: Init = "trunc_normal",
        std: float = INIT_STD,
    ) -> Tensor:
        if name in self._params:
            raise ValueError(f"duplicate parameter name {name!r}")
        if not self.allocate:
            param = Tensor(np.broadcast_to(np.zeros((), np.float32), shape), name=name)
            self._params[name] = param
            return param
        if init == "zeros":
            values = np.zeros(shape)
        elif init == "ones":
            values = np.ones(shape)
        else:
            values = self._rng.substream(name).truncated_normal(shape, std)
        param = Tensor(values.astype(np.float32), requires_grad=True, name=name)
        self._params[name] = param
        return param

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: object) -> bool:
        return name in self._params

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def __len__(self) -> int:
        return len(self._params)

    def items(self) -> Iterator[tuple[str, Tensor]]:
        return iter(self._params.items())

    def names(self) -> list[str]:
        return list(self._params)

    def zero_grad(self) -> None:
        for param in self._params.values():
            param.grad = None

    def state(self) -> dict[str, np.ndarray]:
        return {name: p.data for name, p in self._params.items()}

    def load_state(self, state: Mapping[str, np.ndarray], strict: bool = True) -> None:
        missing = [name for name in self._params if name not in state]
        unexpected = [name for name in state if name not in self._params]
        if strict and (missing or unexpected):
            raise CheckpointError(
                f"parameter sets differ: missing {missing[:5]}, unexpected {unexpected[:5]}"
            )
        for name, param in self._params.items():
            if name not in state:
                continue
            values = np.asarray(state[name])
            if values.shape != param.shape:
                raise CheckpointError(
                    f"{name}: checkpoint shape {values.shape} != model shape {param.shape}"
                )
            param.data[...] = values.astype(param.data.dtype)


def count_parameters(store: ParameterStore, prefix: str = "") -> int:
    """Total number of scalar parameters whose name starts with ``prefix``."""
    return sum(p.size for name, p in store.items() if name.startswith(prefix))


class Linear:
    def __init__(
        self,
        store: ParameterStore,
        name: str,
        in_dim: int,
        out_dim: int,
        init: Init = "trunc_normal",
        bias: bool = True,
    ) -> None:
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.weight = store.create(f"{name}.weight", (in_dim, out_dim), init)
        self.bias = store.create(f"{name}.bias", (out_dim,), "zeros") if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        out = matmul(x, self.weight)
        return out + self.bias if self.bias is not None else out


class MLP:
    """Two linear layers with a GELU in between."""

    def __init__(
        self,
        store: ParameterStore,
        name: str,
        in_dim: int,
        hidden_dim: int,
        out_dim: int,
        zero_output: bool = False,
    ) -> None:
        self.fc1 = Linear(store, f"{name}.fc1", in_dim, hidden_dim)
        self.fc2 = Linear(
            store, f"{name}.fc2", hidden_dim, out_dim, init="zeros" if zero_output else "trunc_normal"
        )

    def __call__(self, x: Tensor) -> Tensor:
        return self.fc2(gelu(self.fc1(x)))


class LayerNorm:
    def __init__(self, store: ParameterStore, name: str, dim: int) -> None:
        self.gain = store.create(f"{name}.gain", (dim,), "ones")
        self.bias = store.create(f"{name}.bias", (dim,), "zeros")

    def __call__(self, x: Tensor) -> Tensor:
        return layer_norm(x, self.gain, self.bias)


class MultiHeadAttention:
    """Query/key/value projections around :func:`poseflow.nncore.attention`."""

    def __init__(
        self,
        store: ParameterStore,
        name: str,
        dim: int,
        heads: int,
        kv_dim: int | None = None,
    ) -> None:
        if dim % heads != 0:
            raise ValueError(f"{name}: width {dim} not divisible by {heads} heads")
        kv_dim = dim if kv_dim is None else kv_dim
        self.heads = heads
        self.q = Linear(store, f"{name}.q", dim, dim)
        self.k = Linear(store, f"{name}.k", kv_dim, dim)
        self.v = Linear(store, f"{name}.v", kv_dim, dim)
        self.out = Linear(store, f"{name}.out", dim, dim)

    def __call__(self, x: Tensor, context: Tensor | None = None) -> Tensor:
        context = x if context is None else context
        mixed = attention(self.q(x), self.k(context), self.v(context), self.heads)
        assert isinstance(mixed, Tensor)
        return self.out(mixed)


class TransformerBlock:
    """Pre-norm self-attention block: ``x + SA(LN(x))`` then ``x + MLP(LN(x))``."""

    def __init__(
        self,
        store: ParameterStore,
        name: str,
        dim: int,
        heads: int,
        mlp_ratio: int = 4,
    ) -> None:
        self.norm1 = LayerNorm(store, f"{name}.norm1", dim)
        self.attn = MultiHeadAttention(store, f"{name}.attn", dim, heads)
        self.norm2 = LayerNorm(store, f"{name}.norm2", dim)
        self.mlp = MLP(store, f"{name}.mlp", dim, dim * mlp_ratio, dim)

    def __call__(self, x: Tensor) -> Tensor:
        x = x + self.attn(self.norm1(x))
        return x + self.mlp(self.norm2(x))


class CrossAttentionBlock:
    """Pre-norm cross-attention from queries to a context set, then an MLP."""

    def __init__(
        self,
        store: ParameterStore,
        name: str,
        dim: int,
        heads: int,
        mlp_ratio: int = 4,
    ) -> None:
        self.norm_q = LayerNorm(store, f"{name}.norm_q", dim)
        self.norm_kv = LayerNorm(store, f"{name}.norm_kv", dim)
        self.attn = MultiHeadAttention(store, f"{name}.attn", dim, heads)
        self.norm2 = LayerNorm(store, f"{name}.norm2", dim)
        self.mlp = MLP(store, f"{name}.mlp", dim, dim * mlp_ratio, dim)

    def __call__(self, x: Tensor, context: Tensor) -> Tensor:
        x = x + self.attn(self.norm_q(x), self.norm_kv(context))
        return x + self.mlp(self.norm2(x))


class Adam:
    """Adam with bias correction over every parameter of a store.

    A parameter without a gradient is treated as having a zero gradient.
    """

    def __init__(
        self,
        store: ParameterStore,
        lr: float,
        betas: tuple[float, float] = ADAM_BETAS,
        eps: float = ADAM_EPS,
    ) -> None:
        self.store = store
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.step_count = 0
        self._m = {name: np.zeros_like(p.data) for name, p in store.items()}
        self._v = {name: np.zeros_like(p.data) for name, p in store.items()}

    def step(self) -> None:
        adam_step(self.store, self._m, self._v, self.step_count + 1, self.lr, self.betas, self.eps)
        self.step_count += 1


def adam_step(
    store: ParameterStore,
    m: dict[str, np.ndarray],
    v: dict[str, np.ndarray],
    step: int,
    lr: float,
    betas: tuple[float, float] = ADAM_BETAS,
    eps: float = ADAM_EPS,
) -> None:
    """Apply one Adam update in place.

    Every gradient is checked before any parameter changes, so a
    non-finite gradient leaves the store untouched.
    """
    for name, param in store.items():
        if param.grad is not None and not np.all(np.isfinite(param.grad)):
            raise NonFiniteError(f"non-finite gradient in {name}", parameter=name)
    beta1, beta2 = betas
    correction1 = 1.0 - beta1**step
    correction2 = 1.0 - beta2**step
    for name, param in store.items():
        grad = param.grad if param.grad is not None else np.zeros_like(param.data)
        m[name] = beta1 * m[name] + (1.0 - beta1) * grad
        v[name] = beta2 * v[name] + (1.0 - beta2) * grad * grad
        update = lr * (m[name] / correction1) / (np.sqrt(v[name] / correction2) + eps)
        param.data -= update.astype(param.data.dtype)


__all__ = [
    "Adam",
    "CrossAttentionBlock",
    "LayerNorm",
    "Linear",
    "MLP",
    "MultiHeadAttention",
    "ParameterStore",
    "TransformerBlock",
    "adam_step",
    "count_parameters",
]
