"""Minimal layer/module machinery on top of the tensor engine.

A :class:`Module` owns parameters (gradient-tracked tensors) and child
modules; ``named_parameters`` walks the tree in deterministic registration
order, which fixes both initialization order and the on-disk tensor order.
"""

from __future__ import annotations

import numpy as np

from .ops import ConvParams, conv2d
from .tensor import Tensor, default_dtype, scalar_weight

__all__ = ["Module", "ModuleList", "Conv2d", "Scale"]


class Module:
    def __init__(self):
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_children", {})

    def __setattr__(self, name, value):
        if isinstance(value, Tensor) and value.requires_grad:
            self._params[name] = value
        elif isinstance(value, Module):
            self._children[name] = value
        object.__setattr__(self, name, value)

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def named_parameters(self, prefix: str = ""):
        for name, t in self._params.items():
            yield prefix + name, t
        for name, child in self._children.items():
            yield from child.named_parameters(f"{prefix}{name}.")

    def parameters(self):
        for _, t in self.named_parameters():
            yield t

    def param_count(self) -> int:
        return sum(t.size for t in self.parameters())

    def zero_grads(self):
        for t in self.parameters():
            t.zero_grad()


class ModuleList(Module):
    def __init__(self, modules=()):
        super().__init__()
        self._items: list[Module] = []
        for m in modules:
            self.append(m)

    def append(self, module: Module):
        setattr(self, str(len(self._items)), module)
        self._items.append(module)

    def __iter__(self):
        return iter(self._items)

    def __len__(self):
        return len(self._items)

    def __getitem__(self, i):
        return self._items[i]


class Conv2d(Module):
    """2-D convolution layer; weights U(-b, b) with b = 1/sqrt(fan_in)."""

    def __init__(self, in_channels: int, out_channels: int, kernel_size: int,
                 rng: np.random.Generator, stride: int = 1, padding: int | None = None,
                 groups: int = 1, bias: bool = True):
        super().__init__()
        if padding is None:
            padding = kernel_size // 2
        self.in_channels = in_channels
        self.out_channels = out_channels
        fan_in = (in_channels // groups) * kernel_size * kernel_size
        bound = 1.0 / np.sqrt(fan_in)
        wshape = (out_channels, in_channels // groups, kernel_size, kernel_size)
        self.weight = Tensor(rng.uniform(-bound, bound, size=wshape), requires_grad=True)
        if bias:
            self.bias = Tensor(rng.uniform(-bound, bound, size=(1, out_channels, 1, 1)),
                               requires_grad=True)
        else:
            self.bias = None
        self._stride = stride
        self._padding = padding
        self._groups = groups

    @property
    def conv_params(self) -> ConvParams:
        return ConvParams(weight=self.weight, bias=self.bias, stride=self._stride,
                          padding=self._padding, groups=self._groups)

    def forward(self, x: Tensor) -> Tensor:
        return conv2d(x, self.conv_params)


class Scale(Module):
    """Learnable scalar branch multiplier (adaptive weight)."""

    def __init__(self, init: float = 1.0):
        super().__init__()
        self.value = Tensor(np.full((1, 1, 1, 1), init, dtype=default_dtype()),
                            requires_grad=True)

    def forward(self, x: Tensor) -> Tensor:
        return scalar_weight(x, self.value)
