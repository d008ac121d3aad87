"""Minimal reverse-mode automatic differentiation over numpy arrays.

A :class:`Tensor` wraps an ``np.ndarray`` and, when it takes part in a graph,
remembers its parents together with a closure mapping the upstream gradient to
one gradient per parent. :func:`backward` walks the graph in reverse
topological order from a scalar loss.
"""

from __future__ import annotations

import contextlib
import threading
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

_state = threading.local()


def _grad_enabled() -> bool:
    return getattr(_state, "grad_enabled", True)


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Disable graph construction inside the block (inference / benchmarking)."""
    prev = _grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = prev


class Tensor:
    """An array that can participate in a differentiation graph.

    ``grad`` is populated by :func:`backward` and has the same shape as ``data``.
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype.kind != "f":
            arr = arr.astype(np.float64)
        self.data: np.ndarray = arr
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self._parents: Tuple["Tensor", ...] = ()
        self._backward: Optional[BackwardFn] = None
        self.op: str = "leaf"

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag}, op={self.op})"

    # arithmetic sugar; the functional forms live in bamsr.ops
    def __add__(self, other):
        from . import ops

        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops

        return ops.sub(self, other)

    def __mul__(self, other):
        from . import ops

        return ops.mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        from . import ops

        return ops.scale(self, -1.0)


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x, dtype=dtype)


def make_result(
    data: np.ndarray,
    parents: Sequence[Tensor],
    backward_fn: BackwardFn,
    op: str,
) -> Tensor:
    """Wrap an op's forward output, attaching graph bookkeeping if needed."""
    out = Tensor(data)
    if _grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    out.op = op
    return out


def _topological_order(root: Tensor) -> List[Tensor]:
    order: List[Tensor] = []
    seen = set()
    stack: List[Tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor) -> Dict[int, np.ndarray]:
    """Back-propagate from a single-element ``loss``.

    Every tensor reachable from ``loss`` that requires grad gets its ``grad``
    overwritten (gradients are reset on each call, never accumulated across
    calls). Returns a map from ``id(tensor)`` to its gradient.
    """
    if loss.data.size != 1:
        raise ValueError(f"backward() needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ValueError("loss does not require grad; nothing to differentiate")

    order = _topological_order(loss)
    grads: Dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = grads.get(id(node))
        if g is None:
            g = np.zeros_like(node.data)
            grads[id(node)] = g
        node.grad = g
        if node._backward is None:
            continue
        parent_grads = node._backward(g)
        factor = fault_factor(node.op)
        for parent, pg in zip(node._parents, parent_grads):
            if pg is None or not parent.requires_grad:
                continue
            if factor != 1.0:
                pg = pg * factor
            if pg.shape != parent.data.shape:
                raise RuntimeError(
                    f"{node.op} produced gradient of shape {pg.shape} "
                    f"for parent of shape {parent.data.shape}"
                )
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
    return grads


# ---------------------------------------------------------------------------
# Operation tally, used to cross-check the analytic FLOP formulas.
# ---------------------------------------------------------------------------


class FlopCounter:
    """Accumulates per-op FLOP tallies reported by ops while active."""

    def __init__(self) -> None:
        self.by_op: Dict[str, int] = {}

    @property
    def total(self) -> int:
        return sum(self.by_op.values())

    def add(self, op: str, flops: int) -> None:
        self.by_op[op] = self.by_op.get(op, 0) + int(flops)


@contextlib.contextmanager
def count_ops() -> Iterator[FlopCounter]:
    counter = FlopCounter()
    prev = getattr(_state, "counter", None)
    _state.counter = counter
    try:
        yield counter
    finally:
        _state.counter = prev


def tally(op: str, flops: int) -> None:
    counter = getattr(_state, "counter", None)
    if counter is not None:
        counter.add(op, flops)


# ---------------------------------------------------------------------------
# Fault injection for the gradient checker's self-test.
# ---------------------------------------------------------------------------

_faults: Dict[str, float] = {}


@contextlib.contextmanager
def inject_gradient_fault(op: str, factor: float = 1.01) -> Iterator[None]:
    """Scale the input gradient produced by ``op``'s backward by ``factor``."""
    _faults[op] = factor
    try:
        yield
    finally:
        _faults.pop(op, None)


def fault_factor(op: str) -> float:
    return _faults.get(op, 1.0)
