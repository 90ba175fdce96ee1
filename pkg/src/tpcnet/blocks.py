"""Cross-guided attention blocks, the gated feed-forward, and U-net resampling blocks."""
from __future__ import annotations

import enum

import torch
import torch.nn as nn
import torch.nn.functional as F

from .attention import CGMSA


class CgabVariant(str, enum.Enum):
    BASE = "base"
    V = "v"
    M = "m"
    VM = "vm"

    @property
    def uses_pair_downsample(self) -> bool:
        return self in (CgabVariant.BASE, CgabVariant.V)

    @property
    def single_stream_skip(self) -> bool:
        return self in (CgabVariant.V, CgabVariant.VM)


class LayerNorm2d(nn.Module):
    """Normalises over channels at every pixel, then applies a per-channel affine."""

    def __init__(self, channels: int, eps: float = 1e-6):
        super().__init__()
        self.weight = nn.Parameter(torch.ones(channels))
        self.bias = nn.Parameter(torch.zeros(channels))
        self.eps = eps

    def normalize(self, x):
        mu = x.mean(dim=-3, keepdim=True)
        var = x.var(dim=-3, keepdim=True, unbiased=False)
        return (x - mu) / torch.sqrt(var + self.eps)

    def forward(self, x):
        return self.normalize(x) * self.weight.view(-1, 1, 1) + self.bias.view(-1, 1, 1)


class IEL(nn.Module):
    """Gated feed-forward: ``proj(tanh(a) * b)`` with ``a``, ``b`` from conv1x1 + dwconv3x3 branches."""

    def __init__(self, channels: int, expansion: int = 2):
        super().__init__()
        hidden = channels * expansion
        self.point_a = nn.Conv2d(channels, hidden, 1)
        self.depth_a = nn.Conv2d(hidden, hidden, 3, padding=1, groups=hidden)
        self.point_b = nn.Conv2d(channels, hidden, 1)
        self.depth_b = nn.Conv2d(hidden, hidden, 3, padding=1, groups=hidden)
        self.project = nn.Conv2d(hidden, channels, 1)

    def forward(self, x):
        gate = torch.tanh(self.depth_a(self.point_a(x)))
        value = self.depth_b(self.point_b(x))
        return self.project(gate * value)


def iel_forward(x, module: IEL):
    return module(x)


class CGAB(nn.Module):
    """LN -> CG-MSA -> residual, then LN -> IEL -> residual.  Maps two ``C`` streams to ``2C``."""

    def __init__(self, channels: int, heads: int, variant: CgabVariant | str = CgabVariant.BASE):
        super().__init__()
        self.variant = CgabVariant(variant)
        self.norm_a = LayerNorm2d(channels)
        self.norm_b = LayerNorm2d(channels)
        self.attn = CGMSA(
            channels,
            heads,
            pair_downsample=self.variant.uses_pair_downsample,
            pe_from_a=self.variant.single_stream_skip,
        )
        self.skip = nn.Conv2d(channels, 2 * channels, 1) if self.variant.single_stream_skip else None
        self.norm_x = LayerNorm2d(2 * channels)
        self.ffn = IEL(2 * channels)

    def forward(self, fa, fb):
        if self.skip is not None:
            residual = self.skip(fa)
        else:
            residual = torch.cat([fa, fb], dim=-3)
        x = residual + self.attn(self.norm_a(fa), self.norm_b(fb))
        return x + self.ffn(self.norm_x(x))


def cgab_forward(fa, fb, module: CGAB):
    return module(fa, fb)


class DownBlock(nn.Module):
    """conv3x3 channel conversion, bilinear half-scale, PReLU."""

    def __init__(self, c_in: int, c_out: int):
        super().__init__()
        self.conv = nn.Conv2d(c_in, c_out, 3, padding=1)
        self.act = nn.PReLU(num_parameters=1, init=0.25)

    def forward(self, x):
        x = self.conv(x)
        x = F.interpolate(x, scale_factor=0.5, mode="bilinear", align_corners=False)
        return self.act(x)


class UpBlock(nn.Module):
    """conv3x3 channel conversion, bilinear 2x, concat skip, conv1x1 fusion, PReLU."""

    def __init__(self, c_in: int, c_skip: int, c_out: int):
        super().__init__()
        self.conv = nn.Conv2d(c_in, c_out, 3, padding=1)
        self.fuse = nn.Conv2d(c_out + c_skip, c_out, 1)
        self.act = nn.PReLU(num_parameters=1, init=0.25)

    def forward(self, x, skip):
        x = self.conv(x)
        x = F.interpolate(x, scale_factor=2.0, mode="bilinear", align_corners=False)
        if x.shape[-2:] != skip.shape[-2:]:
            raise ValueError(f"skip {tuple(skip.shape[-2:])} does not match upsampled {tuple(x.shape[-2:])}")
        return self.act(self.fuse(torch.cat([x, skip], dim=-3)))


def downsample_block(x, module: DownBlock):
    return module(x)


def upsample_block(x, skip, module: UpBlock):
    return module(x, skip)
