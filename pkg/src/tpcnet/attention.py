"""Cross-guided multi-head self-attention (CG-MSA) and its FLOPs counter."""
from __future__ import annotations

import enum
import math

import torch
import torch.nn as nn
import torch.nn.functional as F
from einops import rearrange


class AttentionVariant(str, enum.Enum):
    CG_MSA = "cg_msa"
    CONVENTIONAL_MSA = "conventional_msa"


def count_attention_flops(H: int, W: int, C: int, k: int, variant=AttentionVariant.CG_MSA) -> int:
    """Multiply count of the two attention matmuls for ``C`` channels in ``k`` heads.

    CG-MSA attends over the ``HW/4`` tokens left by the pair downsampler, giving
    ``H W C^2 / (2k)``; the conventional baseline runs the same channel
    attention on all ``HW`` tokens, ``2 H W C^2 / k``.
    """
    variant = AttentionVariant(variant)
    if min(H, W, C, k) < 1:
        raise ValueError("H, W, C and k must be positive")
    if C % k:
        raise ValueError(f"channels {C} not divisible by heads {k}")
    h_k = C // k
    if variant is AttentionVariant.CG_MSA:
        if H % 2 or W % 2:
            raise ValueError("CG-MSA needs even H and W for the pair downsampler")
        tokens = (H // 2) * (W // 2)
    else:
        tokens = H * W
    return k * (tokens * h_k * h_k) + k * (h_k * h_k * tokens)


def pair_downsample(x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """Split each 2x2 patch into its anti-diagonal and diagonal means.

    Equivalent to stride-2 convolutions with the fixed kernels
    ``[[0, .5], [.5, 0]]`` (first output) and ``[[.5, 0], [0, .5]]`` (second).
    """
    H, W = x.shape[-2:]
    if H % 2 or W % 2:
        raise ValueError(f"pair_downsample needs even H and W, got {H}x{W}")
    tl = x[..., 0::2, 0::2]
    tr = x[..., 0::2, 1::2]
    bl = x[..., 1::2, 0::2]
    br = x[..., 1::2, 1::2]
    return 0.5 * (tr + bl), 0.5 * (tl + br)


def cross_concat(f1a, f2a, f1b, f2b):
    """Pair the half-samples crosswise: ``(f1a | f2b)`` and ``(f2a | f1b)``."""
    shapes = {tuple(t.shape) for t in (f1a, f2a, f1b, f2b)}
    if len(shapes) != 1:
        raise ValueError(f"cross_concat inputs differ in shape: {sorted(shapes)}")
    return torch.cat([f1a, f2b], dim=-3), torch.cat([f2a, f1b], dim=-3)


class PointDepthProjection(nn.Module):
    """conv1x1 followed by a depth-wise conv3x3."""

    def __init__(self, channels: int, bias: bool = True):
        super().__init__()
        self.point = nn.Conv2d(channels, channels, 1, bias=bias)
        self.depth = nn.Conv2d(channels, channels, 3, padding=1, groups=channels, bias=bias)

    def forward(self, x):
        return self.depth(self.point(x))


def project_qv_kv(f1m, f2m, proj_qv: PointDepthProjection, proj_kv: PointDepthProjection):
    """Returns ``(Q, V_star, K, V)``; both projections share the same form, so neither stream dominates."""
    qv = proj_qv(f1m)
    kv = proj_kv(f2m)
    q, v_star = qv.chunk(2, dim=-3)
    k, v = kv.chunk(2, dim=-3)
    return q, v_star, k, v


def fuse_values(v, v_star, fuse: nn.Conv2d):
    if v.shape != v_star.shape:
        raise ValueError(f"V {tuple(v.shape)} and V* {tuple(v_star.shape)} differ")
    return fuse(torch.cat([v, v_star], dim=-3))


def cg_attention(q, k, v_prime, scale, heads: int):
    """Per-head channel attention ``Softmax(Q_j K_j^T / scale_j) V'_j``.

    ``scale`` holds one positive value per head.  Scores are ``h_k x h_k``
    (channels against channels), so cost grows linearly with pixel count.
    """
    C = q.shape[-3]
    if C % heads:
        raise ValueError(f"channels {C} not divisible by heads {heads}")
    h, w = q.shape[-2:]
    q = rearrange(q, "b (n c) h w -> b n c (h w)", n=heads)
    k = rearrange(k, "b (n c) h w -> b n c (h w)", n=heads)
    v = rearrange(v_prime, "b (n c) h w -> b n c (h w)", n=heads)
    attn = (q @ k.transpose(-2, -1)) / scale.view(1, heads, 1, 1)
    attn = attn.softmax(dim=-1)
    out = attn @ v
    return rearrange(out, "b n c (h w) -> b (n c) h w", h=h, w=w)


class CGMSA(nn.Module):
    """Cross-guided attention between two ``C``-channel streams; returns ``2C`` channels.

    ``pair_downsample=False`` gives the (M) variant that attends at full
    resolution with ``F1_M = A|B`` and ``F2_M = B|A``.  ``pe_from_a=True``
    computes the positional encoding from stream A alone, as in the (V)
    variants.
    """

    def __init__(self, channels: int, heads: int, pair_downsample: bool = True, pe_from_a: bool = False):
        super().__init__()
        if channels % heads:
            raise ValueError(f"channels {channels} not divisible by heads {heads}")
        self.channels = channels
        self.heads = heads
        self.use_pair_downsample = pair_downsample
        self.pe_from_a = pe_from_a
        c = channels
        self.proj_qv = PointDepthProjection(2 * c)
        self.proj_kv = PointDepthProjection(2 * c)
        self.fuse = nn.Conv2d(2 * c, c, 3, padding=1)
        # positive per-head score scale, exp-parameterised, starts at sqrt(h_k)
        self.log_scale = nn.Parameter(torch.full((heads,), 0.5 * math.log(c // heads)))
        if pair_downsample:
            self.expand = nn.Conv2d(c, 8 * c, 1)
        else:
            self.expand = nn.Conv2d(c, 2 * c, 1)
        self.pos = nn.Conv2d(c if pe_from_a else 2 * c, 2 * c, 1)

    @property
    def scale(self):
        return self.log_scale.exp()

    def forward(self, fa, fb, probes: dict | None = None):
        if fa.shape != fb.shape:
            raise ValueError(f"streams differ in shape: {tuple(fa.shape)} vs {tuple(fb.shape)}")
        if self.use_pair_downsample:
            f1a, f2a = pair_downsample(fa)
            f1b, f2b = pair_downsample(fb)
            f1m, f2m = cross_concat(f1a, f2a, f1b, f2b)
        else:
            f1m = torch.cat([fa, fb], dim=-3)
            f2m = torch.cat([fb, fa], dim=-3)
        q, v_star, k, v = project_qv_kv(f1m, f2m, self.proj_qv, self.proj_kv)
        v_prime = fuse_values(v, v_star, self.fuse)
        out = cg_attention(q, k, v_prime, self.scale, self.heads)
        out = self.expand(out)
        if self.use_pair_downsample:
            out = F.pixel_shuffle(out, 2)
        pe = self.pos(fa if self.pe_from_a else torch.cat([fa, fb], dim=-3))
        if probes is not None:
            probes.update(q=q, k=k, v=v, v_star=v_star, v_prime=v_prime, f1m=f1m, f2m=f2m)
        return out + pe

    def attention_flops(self, H: int, W: int) -> int:
        variant = AttentionVariant.CG_MSA if self.use_pair_downsample else AttentionVariant.CONVENTIONAL_MSA
        return count_attention_flops(H, W, self.channels, self.heads, variant)


def cg_msa(fa, fb, module: CGMSA):
    return module(fa, fb)
