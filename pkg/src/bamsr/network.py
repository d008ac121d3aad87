"""A small EDSR-style residual SR network hosting an attention module.

Layout: 3x3 head conv -> residual blocks (conv, PReLU, conv, skip add, then
optional attention) -> long skip adding the head features back -> optional
attention before upsampling -> 3x3 tail conv to 3*s^2 channels -> pixel
shuffle, plus a global bicubic skip of the input. The tail starts at zero,
so an untrained network reproduces bicubic upscaling exactly.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np

from . import ops
from .attention import AttentionKind, AttentionSpec, build_attention, count_flops
from .autograd import Tensor
from .metrics import resize_matrix
from .nn import Conv2d, Module, ModuleList, PReLU

SCALES = (2, 3, 4)


class Insertion(str, enum.Enum):
    PER_BLOCK = "per_block"
    PRE_UPSAMPLE = "pre_upsample"
    BOTH = "both"
    NONE = "none"

    @classmethod
    def parse(cls, value) -> "Insertion":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown insertion {value!r}; expected one of "
                             f"{[k.value for k in cls]}") from None


@dataclass(frozen=True)
class NetworkSpec:
    blocks: int = 4
    width: int = 16
    scale: int = 2
    attention: AttentionSpec = field(default_factory=lambda: AttentionSpec(channels=16))
    insertion: Insertion = Insertion.PER_BLOCK

    def __post_init__(self):
        object.__setattr__(self, "insertion", Insertion.parse(self.insertion))
        if self.blocks < 1:
            raise ValueError(f"blocks must be positive, got {self.blocks}")
        if self.width < 1:
            raise ValueError(f"width must be positive, got {self.width}")
        if self.scale not in SCALES:
            raise ValueError(f"scale must be one of {SCALES}, got {self.scale}")
        if self.has_attention and self.attention.channels != self.width:
            raise ValueError(
                f"attention channels ({self.attention.channels}) must equal width ({self.width})"
            )

    @property
    def has_attention(self) -> bool:
        return self.insertion is not Insertion.NONE and self.attention.kind is not AttentionKind.NONE

    @property
    def per_block(self) -> bool:
        return self.has_attention and self.insertion in (Insertion.PER_BLOCK, Insertion.BOTH)

    @property
    def pre_upsample(self) -> bool:
        return self.has_attention and self.insertion in (Insertion.PRE_UPSAMPLE, Insertion.BOTH)

    def with_attention(self, kind) -> "NetworkSpec":
        """Twin spec differing only in the attention kind."""
        return replace(self, attention=replace(self.attention, kind=AttentionKind.parse(kind)))


class ResidualBlock(Module):
    def __init__(self, width: int, rng, dtype, attention: AttentionSpec = None):
        super().__init__()
        self.conv1 = Conv2d(width, width, 3, rng, dtype=dtype)
        self.act = PReLU(width, dtype=dtype)
        self.conv2 = Conv2d(width, width, 3, rng, dtype=dtype)
        self.attn = build_attention(attention, rng, dtype) if attention is not None else None

    def forward(self, x: Tensor) -> Tensor:
        y = ops.add(x, self.conv2(self.act(self.conv1(x))))
        if self.attn is not None:
            y = self.attn(y)
        return y


class SRNetwork(Module):
    def __init__(self, spec: NetworkSpec, rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        self.spec = spec
        w = spec.width
        self.head = Conv2d(3, w, 3, rng, dtype=dtype)
        block_attn = spec.attention if spec.per_block else None
        self.body = ModuleList(ResidualBlock(w, rng, dtype, block_attn) for _ in range(spec.blocks))
        self.pre_up_attn = build_attention(spec.attention, rng, dtype) if spec.pre_upsample else None
        self.tail = Conv2d(w, 3 * spec.scale ** 2, 3, rng, dtype=dtype)
        # a zero tail makes the untrained network exactly the bicubic skip
        self.tail.weight.data[:] = 0
        self.tail.bias.data[:] = 0

    def upsample(self, x: Tensor) -> Tensor:
        if self.spec.scale == 4:
            return ops.pixel_shuffle(ops.pixel_shuffle(x, 2), 2)
        return ops.pixel_shuffle(x, self.spec.scale)

    def bicubic_skip(self, x: Tensor) -> Tensor:
        s = self.spec.scale
        h, w = x.shape[-2:]
        return ops.resize_separable(x, resize_matrix(h, s * h), resize_matrix(w, s * w))

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 4 or x.shape[1] != 3:
            raise ValueError(f"expected an (N, 3, H, W) batch, got shape {x.shape}")
        if not np.all(np.isfinite(x.data)):
            raise ValueError("input contains non-finite values")
        if x.dtype != self.dtype:
            if x.requires_grad:
                raise TypeError(f"traced input is {x.dtype} but the network is {self.dtype}")
            x = Tensor(x.data.astype(self.dtype))
        f = self.head(x)
        h = f
        for block in self.body:
            h = block(h)
        h = ops.add(h, f)
        if self.pre_up_attn is not None:
            h = self.pre_up_attn(h)
        return ops.add(self.upsample(self.tail(h)), self.bicubic_skip(x))


def build(spec: NetworkSpec, seed: int, dtype=np.float32) -> SRNetwork:
    """Deterministically initialised network: same (spec, seed) gives identical parameters."""
    return SRNetwork(spec, np.random.default_rng(seed), dtype)


def network_flops(spec: NetworkSpec, height: int, width: int) -> int:
    """Analytic FLOPs of one forward pass on a 3 x height x width input
    (same convention as :func:`bamsr.attention.count_flops`)."""
    w, s = spec.width, spec.scale
    plane = height * width
    total = 2 * 9 * 3 * w * plane
    block = 2 * (2 * 9 * w * w * plane) + w * plane + w * plane
    if spec.per_block:
        block += count_flops(spec.attention, height, width)
    total += spec.blocks * block
    total += w * plane  # long skip
    if spec.pre_upsample:
        total += count_flops(spec.attention, height, width)
    total += 2 * 9 * w * 3 * s * s * plane
    ho, wo = s * height, s * width
    total += 2 * 3 * (ho * height * width + ho * width * wo)
    total += 3 * ho * wo
    return total
