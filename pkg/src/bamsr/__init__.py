"""Balanced attention for small single-image super-resolution networks.

A numpy reverse-mode autodiff core, the attention modules and their
ablation variants, an EDSR-style host network, Y-channel metrics, a
training pipeline and a command-line front end.
"""

from .attention import (
    ACAM, BAM, CBAM, MSAM, AttentionKind, AttentionSpec, ChannelAttention,
    SqueezeExcitation, build_attention, count_flops, count_params,
)
from .autograd import Tensor, backward, count_ops, no_grad
from .gradcheck import grad_check
from .metrics import MetricReport, bicubic_resize, psnr, rgb_to_y, ssim
from .network import Insertion, NetworkSpec, SRNetwork, build, network_flops

__version__ = "0.1.0"

__all__ = [
    "ACAM", "BAM", "CBAM", "MSAM", "AttentionKind", "AttentionSpec", "ChannelAttention",
    "SqueezeExcitation", "build_attention", "count_flops", "count_params",
    "Tensor", "backward", "count_ops", "no_grad", "grad_check",
    "MetricReport", "bicubic_resize", "psnr", "rgb_to_y", "ssim",
    "Insertion", "NetworkSpec", "SRNetwork", "build", "network_flops",
]
