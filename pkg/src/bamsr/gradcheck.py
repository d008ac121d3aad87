"""Central finite-difference checks of reverse-mode gradients."""

from __future__ import annotations

from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .autograd import Tensor, backward, no_grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    """``|a - n| / max(|a|, |n|, 1e-8)`` elementwise."""
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return np.abs(analytic - numeric) / denom


def tensor_relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """``||a - n|| / max(||a||, ||n||, 1e-8)`` over a whole gradient tensor.

    Elements whose true gradient is tiny are dominated by finite-difference
    round-off, so an elementwise maximum reports noise rather than bugs.
    """
    denom = max(float(np.linalg.norm(analytic)), float(np.linalg.norm(numeric)), 1e-8)
    return float(np.linalg.norm(analytic - numeric)) / denom


def numeric_gradient(fn: Callable[[], Tensor], target: Tensor, step: float) -> np.ndarray:
    """Central differences of the scalar ``fn()`` w.r.t. every element of ``target``.

    ``target.data`` is perturbed in place and restored afterwards.
    """
    grad = np.zeros_like(target.data)
    flat = target.data.reshape(-1)
    gflat = grad.reshape(-1)
    with no_grad():
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            fp = fn().item()
            flat[i] = orig - step
            fm = fn().item()
            flat[i] = orig
            gflat[i] = (fp - fm) / (2.0 * step)
    return grad


def grad_check(
    fn: Callable[[Tensor], Tensor],
    x,
    step: float = 1e-5,
    params: Optional[Iterable[Tensor]] = None,
) -> float:
    """Worst relative error between reverse-mode and finite-difference gradients,
    measured per tensor with :func:`tensor_relative_error`.

    ``fn`` maps the traced input to a scalar loss. The input is copied to
    float64; ``params`` (tensors ``fn`` closes over) are checked too and must
    already be float64.
    """
    if step <= 0:
        raise ValueError(f"step must be positive, got {step}")
    xt = Tensor(np.array(x.data if isinstance(x, Tensor) else x, dtype=np.float64), requires_grad=True)
    targets: Sequence[Tensor] = [xt] + list(params or [])
    for t in targets:
        if t.dtype != np.float64:
            raise TypeError("grad_check needs float64 tensors")
        t.requires_grad = True
        t.grad = None

    loss = fn(xt)
    backward(loss)
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in targets]

    worst = 0.0
    for t, ga in zip(targets, analytic):
        gn = numeric_gradient(lambda: fn(xt), t, step)
        if ga.size:
            worst = max(worst, tensor_relative_error(ga, gn))
    return worst


GRADCHECK_TOLERANCE = 1e-5


def _probe_loss(rng: np.random.Generator, shape):
    """Scalar ``sum(out * R)`` with a fixed random ``R``: every output element
    gets a distinct, non-degenerate upstream gradient."""
    from . import ops

    r = Tensor(rng.normal(size=shape))
    return lambda out: ops.sum_all(ops.mul(out, r))


def _jitter(module, rng: np.random.Generator) -> None:
    # move parameters off their init values (e.g. PReLU slopes, zero biases)
    for p in module.parameters():
        p.data = p.data + rng.normal(scale=0.1, size=p.shape)


def standard_targets(seed: int = 0):
    """``[(name, thunk)]``; each thunk runs one gradient check and returns
    its worst relative error. Covers the core ops, every attention variant
    on a (2, 8, 12, 10) feature map, and a one-block width-8 host network on
    a (2, 3, 12, 10) image batch."""
    from . import ops
    from .attention import AttentionSpec, build_attention
    from .network import NetworkSpec, build

    def op_case(name, shape, fn, out_shape, params=()):
        def run():
            rng = np.random.default_rng([seed, len(name)])
            probe = _probe_loss(rng, out_shape)
            ps = [Tensor(rng.normal(size=s) if kind == "normal" else rng.uniform(0.05, 0.95, size=s))
                  for kind, s in params]
            x = rng.normal(size=shape)
            return grad_check(lambda t: probe(fn(t, ps)), x, params=ps)
        return name, run

    targets = [
        op_case("conv2d", (2, 3, 6, 5), lambda x, p: ops.conv2d(x, p[0], p[1], padding=1), (2, 4, 6, 5),
                [("normal", (4, 3, 3, 3)), ("normal", (4,))]),
        op_case("global_avg_pool", (2, 3, 4, 5), lambda x, p: ops.global_avg_pool(x), (2, 3, 1, 1)),
        op_case("channel_max_pool", (2, 3, 4, 5), lambda x, p: ops.channel_max_pool(x), (2, 1, 4, 5)),
        op_case("prelu", (2, 3, 4, 5), lambda x, p: ops.prelu(x, p[0]), (2, 3, 4, 5), [("uniform", (3,))]),
        op_case("sigmoid", (2, 3, 4, 5), lambda x, p: ops.sigmoid(x), (2, 3, 4, 5)),
        op_case("broadcast_hadamard", (2, 3, 4, 5), lambda x, p: ops.broadcast_hadamard(p[0], p[1], x),
                (2, 3, 4, 5), [("uniform", (2, 3, 1, 1)), ("uniform", (2, 1, 4, 5))]),
        op_case("pixel_shuffle", (2, 12, 3, 4), lambda x, p: ops.pixel_shuffle(x, 2), (2, 3, 6, 8)),
    ]

    def attention_case(kind):
        def run():
            rng = np.random.default_rng([seed, 100 + len(kind)])
            module = build_attention(AttentionSpec(kind, 8, 16, 7), rng, np.float64)
            _jitter(module, rng)
            probe = _probe_loss(rng, (2, 8, 12, 10))
            x = rng.normal(size=(2, 8, 12, 10))
            return grad_check(lambda t: probe(module(t)), x, params=module.parameters())
        return kind.upper(), run

    targets += [attention_case(k) for k in ("bam", "ca", "se", "cbam")]

    def host():
        rng = np.random.default_rng([seed, 200])
        net = build(NetworkSpec(1, 8, 2, AttentionSpec("bam", 8, 16, 7)), seed, dtype=np.float64)
        _jitter(net, rng)
        probe = _probe_loss(rng, (2, 3, 24, 20))
        x = rng.uniform(size=(2, 3, 12, 10))
        return grad_check(lambda t: probe(net(t)), x, params=net.parameters())

    targets.append(("host-1x8", host))
    return targets
