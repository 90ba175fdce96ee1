"""Analytic parameter and FLOPs accounting.

Convolutions are counted as ``2 * k^2 * C_in/groups * C_out * H_out * W_out``
(multiply plus add).  Attention contributes only its two matrix products,
counted by :func:`tpcnet.attention.count_attention_flops`.  Element-wise
work (norms, activations, gating, shuffles) is ignored.  Output sizes are
traced by running the network on the ``meta`` device, so no arithmetic is
performed.
"""
from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn

from .attention import CGMSA
from .network import NetworkConfig, TPCNet, check_input_size


def conv_flops(conv: nn.Conv2d, out_hw: tuple[int, int]) -> int:
    kh, kw = conv.kernel_size
    return 2 * kh * kw * (conv.in_channels // conv.groups) * conv.out_channels * out_hw[0] * out_hw[1]


def count_params(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())


@dataclass
class ComplexityReport:
    params: int
    flops: int
    conv_flops: int
    attention_flops: int
    height: int
    width: int

    def summary(self) -> str:
        return (
            f"params {self.params / 1e6:.3f} M | FLOPs {self.flops / 1e9:.3f} G "
            f"(conv {self.conv_flops / 1e9:.3f} G, attention {self.attention_flops / 1e9:.4f} G) "
            f"at {self.height}x{self.width}"
        )


def trace_flops(model: nn.Module, example: torch.Tensor) -> tuple[int, int]:
    """Run ``model(example)`` with hooks and return ``(conv_flops, attention_flops)``."""
    totals = {"conv": 0, "attn": 0}

    def on_conv(mod, inputs, output):
        totals["conv"] += conv_flops(mod, tuple(output.shape[-2:]))

    def on_attn(mod, inputs, output):
        H, W = inputs[0].shape[-2:]
        totals["attn"] += mod.attention_flops(H, W) * inputs[0].shape[0]

    handles = []
    for mod in model.modules():
        if isinstance(mod, nn.Conv2d):
            handles.append(mod.register_forward_hook(on_conv))
        elif isinstance(mod, CGMSA):
            handles.append(mod.register_forward_hook(on_attn))
    try:
        with torch.no_grad():
            model(example)
    finally:
        for h in handles:
            h.remove()
    return totals["conv"] * example.shape[0], totals["attn"]


def count_params_flops(cfg: NetworkConfig | None = None, height: int = 256, width: int = 256) -> ComplexityReport:
    cfg = cfg or NetworkConfig()
    check_input_size(height, width)
    with torch.device("meta"):
        model = TPCNet(cfg)
        example = torch.empty(1, 3, height, width)
    conv, attn = trace_flops(model, example)
    return ComplexityReport(
        params=count_params(model),
        flops=conv + attn,
        conv_flops=conv,
        attention_flops=attn,
        height=height,
        width=width,
    )
