"""Balanced attention (avgpool channel branch in parallel with a maxpool spatial
branch) and the channel-attention / SE / CBAM variants it is compared against.

All modules map an (N, C, H, W) feature tensor to a tensor of the same shape.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import ops
from .autograd import Tensor
from .nn import Conv2d, Module, PReLU


class AttentionKind(str, enum.Enum):
    BAM = "bam"
    CA = "ca"
    SE = "se"
    CBAM = "cbam"
    NONE = "none"

    @classmethod
    def parse(cls, value) -> "AttentionKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown attention kind {value!r}; expected one of "
                             f"{[k.value for k in cls]}") from None


@dataclass(frozen=True)
class AttentionSpec:
    kind: AttentionKind = AttentionKind.BAM
    channels: int = 64
    reduction: int = 16
    kernel: int = 7

    def __post_init__(self):
        object.__setattr__(self, "kind", AttentionKind.parse(self.kind))
        if self.channels < 1:
            raise ValueError(f"channels must be positive, got {self.channels}")
        if self.reduction < 1:
            raise ValueError(f"reduction must be positive, got {self.reduction}")
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise ValueError(f"spatial kernel must be odd and positive, got {self.kernel}")

    @property
    def bottleneck(self) -> int:
        return max(1, self.channels // self.reduction)


def _check_channels(x: Tensor, n: int) -> None:
    if x.ndim != 4 or x.shape[1] != n:
        raise ValueError(f"expected {n} input channels, got shape {x.shape}")


class ACAM(Module):
    """Global average pool -> 1x1 conv (n -> n/r) -> PReLU -> 1x1 conv (n/r -> n) -> sigmoid."""

    def __init__(self, channels: int, bottleneck: int, rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        self.channels = channels
        self.conv1 = Conv2d(channels, bottleneck, 1, rng, dtype=dtype)
        self.prelu = PReLU(bottleneck, dtype=dtype)
        self.conv2 = Conv2d(bottleneck, channels, 1, rng, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        _check_channels(x, self.channels)
        z = self.conv2(self.prelu(self.conv1(ops.global_avg_pool(x))))
        return ops.sigmoid(z)


class MSAM(Module):
    """Channel-wise max -> k x k conv (1 -> 1, 'same' padding) -> sigmoid."""

    def __init__(self, kernel: int, rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        self.conv = Conv2d(1, 1, kernel, rng, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        return ops.sigmoid(self.conv(ops.channel_max_pool(x)))


class BAM(Module):
    """Both branches read the same input; their outputs are fused by broadcast
    multiplication and applied to the input elementwise."""

    def __init__(self, spec: AttentionSpec, rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        self.spec = spec
        self.acam = ACAM(spec.channels, spec.bottleneck, rng, dtype)
        self.msam = MSAM(spec.kernel, rng, dtype)

    def forward(self, x: Tensor) -> Tensor:
        _check_channels(x, self.spec.channels)
        return ops.broadcast_hadamard(self.acam(x), self.msam(x), x)


class _BottleneckMLP(Module):
    def __init__(self, channels: int, bottleneck: int, rng, dtype):
        super().__init__()
        self.conv1 = Conv2d(channels, bottleneck, 1, rng, dtype=dtype)
        self.conv2 = Conv2d(bottleneck, channels, 1, rng, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        return self.conv2(ops.relu(self.conv1(x)))


class ChannelAttention(Module):
    """Average-pool channel gate with a ReLU bottleneck MLP."""

    mlp_name = "mlp"

    def __init__(self, spec: AttentionSpec, rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        self.spec = spec
        setattr(self, self.mlp_name, _BottleneckMLP(spec.channels, spec.bottleneck, rng, dtype))

    def gate(self, x: Tensor) -> Tensor:
        mlp = getattr(self, self.mlp_name)
        return ops.sigmoid(mlp(ops.global_avg_pool(x)))

    def forward(self, x: Tensor) -> Tensor:
        _check_channels(x, self.spec.channels)
        return ops.mul(x, self.gate(x))


class SqueezeExcitation(ChannelAttention):
    """Same dataflow as :class:`ChannelAttention`, separately named parameters."""

    mlp_name = "excitation"


class CBAM(Module):
    """Sequential channel gate (avg + max through a shared MLP) followed by a
    spatial gate over the concatenated channel mean and channel max."""

    def __init__(self, spec: AttentionSpec, rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        self.spec = spec
        self.mlp = _BottleneckMLP(spec.channels, spec.bottleneck, rng, dtype)
        self.spatial = Conv2d(2, 1, spec.kernel, rng, dtype=dtype)

    def channel_gate(self, x: Tensor) -> Tensor:
        z = ops.add(self.mlp(ops.global_avg_pool(x)), self.mlp(ops.global_max_pool(x)))
        return ops.sigmoid(z)

    def spatial_gate(self, x: Tensor) -> Tensor:
        pooled = ops.concat_channels([ops.channel_mean_pool(x), ops.channel_max_pool(x)])
        return ops.sigmoid(self.spatial(pooled))

    def forward(self, x: Tensor) -> Tensor:
        _check_channels(x, self.spec.channels)
        y = ops.mul(x, self.channel_gate(x))
        return ops.mul(y, self.spatial_gate(y))


def build_attention(spec: AttentionSpec, rng: np.random.Generator, dtype=np.float32) -> Module:
    if spec.kind is AttentionKind.BAM:
        return BAM(spec, rng, dtype)
    if spec.kind is AttentionKind.CA:
        return ChannelAttention(spec, rng, dtype)
    if spec.kind is AttentionKind.SE:
        return SqueezeExcitation(spec, rng, dtype)
    if spec.kind is AttentionKind.CBAM:
        return CBAM(spec, rng, dtype)
    raise ValueError("attention kind NONE has no module; skip the insertion instead")


def count_params(spec: AttentionSpec) -> int:
    """Closed-form count of weight, bias and PReLU-slope elements."""
    n, b, k = spec.channels, spec.bottleneck, spec.kernel
    mlp = (n * b + b) + (b * n + n)
    if spec.kind is AttentionKind.BAM:
        return mlp + b + (k * k + 1)
    if spec.kind in (AttentionKind.CA, AttentionKind.SE):
        return mlp
    if spec.kind is AttentionKind.CBAM:
        return mlp + (2 * k * k + 1)
    return 0


def count_flops(spec: AttentionSpec, height: int, width: int) -> int:
    """Analytic FLOPs of one forward pass on a single C x H x W feature map.

    Convention: a multiply-accumulate is 2 FLOPs (a k x k conv costs
    2 k^2 Cin Cout Hout Wout, bias excluded), pooling costs its reduction
    size, activations and elementwise products 1 FLOP per output element.
    """
    if height < 1 or width < 1:
        raise ValueError("height and width must be positive")
    n, b, k = spec.channels, spec.bottleneck, spec.kernel
    plane = height * width
    volume = n * plane
    mlp = 2 * n * b + b + 2 * b * n  # conv, activation, conv
    if spec.kind is AttentionKind.BAM:
        acam = volume + mlp + n
        msam = volume + 2 * k * k * plane + plane
        return acam + msam + 2 * volume
    if spec.kind in (AttentionKind.CA, AttentionKind.SE):
        return volume + mlp + n + volume
    if spec.kind is AttentionKind.CBAM:
        channel = 2 * volume + 2 * mlp + n + n + volume
        spatial = 2 * volume + 2 * k * k * 2 * plane + plane + volume
        return channel + spatial
    return 0
