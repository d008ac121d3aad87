"""Parameter containers and the two learnable layers the networks need."""

from __future__ import annotations

from collections import OrderedDict
from typing import Dict, Iterator, List, Tuple

import numpy as np

from . import ops
from .autograd import Tensor


class Parameter(Tensor):
    """A trainable leaf tensor."""

    __slots__ = ("trainable",)

    def __init__(self, data, trainable: bool = True):
        super().__init__(data, requires_grad=trainable)
        self.trainable = trainable


class Module:
    """Registers child modules and parameters assigned as attributes,
    in assignment order, so names are stable and hierarchical."""

    def __init__(self) -> None:
        object.__setattr__(self, "_params", OrderedDict())
        object.__setattr__(self, "_children", OrderedDict())

    def __setattr__(self, name, value):
        if isinstance(value, Parameter):
            self._params[name] = value
        elif isinstance(value, Module):
            self._children[name] = value
        object.__setattr__(self, name, value)

    def add_module(self, name: str, module: "Module") -> None:
        self._children[name] = module

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Parameter]]:
        for name, p in self._params.items():
            yield prefix + name, p
        for name, child in self._children.items():
            yield from child.named_parameters(prefix + name + ".")

    def parameters(self) -> List[Parameter]:
        return [p for _, p in self.named_parameters()]

    def num_parameters(self) -> int:
        return sum(p.data.size for p in self.parameters())

    def state_dict(self) -> Dict[str, np.ndarray]:
        return OrderedDict((name, p.data.copy()) for name, p in self.named_parameters())

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        missing = set(own) - set(state)
        unexpected = set(state) - set(own)
        if missing or unexpected:
            raise KeyError(f"state mismatch: missing={sorted(missing)} unexpected={sorted(unexpected)}")
        for name, arr in state.items():
            p = own[name]
            if tuple(arr.shape) != p.shape:
                raise ValueError(f"{name}: shape {tuple(arr.shape)} != expected {p.shape}")
            p.data = np.array(arr, dtype=p.dtype)

    def astype(self, dtype) -> "Module":
        """Cast every parameter in place; returns self."""
        for p in self.parameters():
            p.data = p.data.astype(dtype)
        return self

    @property
    def dtype(self):
        params = self.parameters()
        return params[0].dtype if params else np.float64

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):  # pragma: no cover - abstract
        raise NotImplementedError


def he_normal(rng: np.random.Generator, shape, fan_in: int, dtype=np.float32) -> np.ndarray:
    return (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(dtype)


class Conv2d(Module):
    """Stride-1 zero-padded convolution; padding defaults to 'same' for odd k."""

    def __init__(self, cin: int, cout: int, k: int, rng: np.random.Generator,
                 bias: bool = True, padding: int = None, dtype=np.float32):
        super().__init__()
        self.cin, self.cout, self.k = cin, cout, k
        self.padding = (k - 1) // 2 if padding is None else padding
        self.weight = Parameter(he_normal(rng, (cout, cin, k, k), cin * k * k, dtype))
        if bias:
            self.bias = Parameter(np.zeros(cout, dtype=dtype))
        else:
            self.bias = None

    def forward(self, x: Tensor) -> Tensor:
        return ops.conv2d(x, self.weight, self.bias, padding=self.padding)


class PReLU(Module):
    def __init__(self, channels: int, init: float = 0.25, dtype=np.float32):
        super().__init__()
        self.slope = Parameter(np.full(channels, init, dtype=dtype))

    def forward(self, x: Tensor) -> Tensor:
        return ops.prelu(x, self.slope)


class ModuleList(Module):
    """Indexed children named ``0``, ``1``, ..."""

    def __init__(self, modules=()):
        super().__init__()
        self._items: List[Module] = []
        for m in modules:
            self.append(m)

    def append(self, module: Module) -> None:
        self.add_module(str(len(self._items)), module)
        self._items.append(module)

    def __iter__(self):
        return iter(self._items)

    def __len__(self) -> int:
        return len(self._items)

    def __getitem__(self, i: int) -> Module:
        return self._items[i]
