"""Adam with bias-corrected moments, and the step-halving learning-rate schedule."""

from __future__ import annotations

from collections import OrderedDict
from typing import Dict, Iterable, Optional, Tuple

import numpy as np

from .nn import Parameter


def lr_at(epoch: int, lr0: float = 1e-4, halve_period: int = 200) -> float:
    """``lr0 * 0.5 ** floor(epoch / halve_period)``."""
    if epoch < 0:
        raise ValueError(f"epoch must be >= 0, got {epoch}")
    return lr0 * 0.5 ** (epoch // halve_period)


class NonFiniteGradient(FloatingPointError):
    pass


class Adam:
    def __init__(self, named_params: Iterable[Tuple[str, Parameter]],
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params: Dict[str, Parameter] = OrderedDict(
            (n, p) for n, p in named_params if getattr(p, "trainable", True)
        )
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = OrderedDict((n, np.zeros_like(p.data)) for n, p in self.params.items())
        self.v = OrderedDict((n, np.zeros_like(p.data)) for n, p in self.params.items())

    def step(self, lr: float, grads: Optional[Dict[str, np.ndarray]] = None) -> None:
        """One update. Gradients default to each parameter's ``.grad``;
        a parameter without a gradient is treated as having a zero gradient."""
        for name, p in self.params.items():
            g = grads[name] if grads is not None else p.grad
            if g is not None and not np.all(np.isfinite(g)):
                raise NonFiniteGradient(f"non-finite gradient for parameter {name!r}")
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for name, p in self.params.items():
            g = grads[name] if grads is not None else p.grad
            if g is None:
                g = np.zeros_like(p.data)
            g = g.astype(p.dtype, copy=False)
            m, v = self.m[name], self.v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            update = (m / c1) / (np.sqrt(v / c2) + self.eps)
            p.data = p.data - (lr * update).astype(p.dtype, copy=False)
