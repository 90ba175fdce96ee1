"""Light and reflectivity feature estimators."""
from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .blocks import CGAB, CgabVariant
from .physics import complement_split

LOG_EPS = 1e-4
_RADIUS = 3
_MAG_DELTA = 1e-6


def _gaussian_taps(sigma: torch.Tensor, radius: int = _RADIUS) -> torch.Tensor:
    x = torch.arange(-radius, radius + 1, dtype=sigma.dtype, device=sigma.device)
    taps = torch.exp(-0.5 * (x / sigma) ** 2)
    return taps / taps.sum()


def illumination_invariant(img: torch.Tensor, sigma: torch.Tensor | float = 1.0) -> torch.Tensor:
    """Gradient magnitude of the smoothed log intensity, ``(N, 1, H, W)``.

    Intensity is the channel mean divided by its image-wide mean before the
    log, so a global brightness factor cancels exactly instead of being
    perturbed by ``LOG_EPS``.  The magnitude uses ``sqrt(g^2 + d^2) - d``,
    which is zero on flat regions yet stays differentiable there.
    """
    if not torch.is_tensor(sigma):
        if sigma <= 0:
            raise ValueError("sigma must be positive")
        sigma = torch.tensor(float(sigma), dtype=img.dtype, device=img.device)
    intensity = img.mean(dim=-3, keepdim=True)
    level = intensity.mean(dim=(-2, -1), keepdim=True).clamp(min=1e-12)
    logi = torch.log(intensity / level + LOG_EPS)

    taps = _gaussian_taps(sigma)
    k = taps.numel()
    r = _RADIUS
    h, w = logi.shape[-2:]
    mode = "reflect" if min(h, w) > r else "replicate"
    smooth = F.pad(logi, (r, r, 0, 0), mode=mode)
    smooth = F.conv2d(smooth, taps.view(1, 1, 1, k))
    smooth = F.pad(smooth, (0, 0, r, r), mode=mode)
    smooth = F.conv2d(smooth, taps.view(1, 1, k, 1))

    padded = F.pad(smooth, (1, 1, 1, 1), mode="replicate")
    gx = 0.5 * (padded[..., 1:-1, 2:] - padded[..., 1:-1, :-2])
    gy = 0.5 * (padded[..., 2:, 1:-1] - padded[..., :-2, 1:-1])
    d = torch.tensor(_MAG_DELTA, dtype=img.dtype, device=img.device)
    return torch.sqrt(gx * gx + gy * gy + d * d) - d


class IlluminationInvariant(nn.Module):
    def __init__(self, sigma: float = 1.0):
        super().__init__()
        self.log_sigma = nn.Parameter(torch.tensor(math.log(sigma)))

    def forward(self, img):
        # exp keeps the learnable scale positive
        return illumination_invariant(img, self.log_sigma.exp())


@dataclass
class EstimatorOutputs:
    e_hat: torch.Tensor
    alpha_hat: torch.Tensor
    L_hat: torch.Tensor | None
    L_bar_hat: torch.Tensor
    E_hat: torch.Tensor | None = None
    L_prime_hat: torch.Tensor | None = None
    R_hat: torch.Tensor | None = None
    D: torch.Tensor | None = None


class LightFeatureEstimator(nn.Module):
    """Estimates ``e_hat`` and the 1-channel weight ``alpha_hat``, then splits the light.

    With ``use_complement=False`` the complement is a free conv3x3 of ``e_hat``
    instead of ``e_hat - alpha_hat * e_hat``.
    """

    def __init__(self, channels: int, use_complement: bool = True):
        super().__init__()
        self.use_complement = use_complement
        self.invariant = IlluminationInvariant()
        self.fuse = nn.Conv2d(4, channels, 3, padding=1)
        self.to_e = nn.Conv2d(channels, channels, 3, padding=1)
        self.to_alpha = nn.Conv2d(channels, 1, 3, padding=1)
        self.to_l_bar = None if use_complement else nn.Conv2d(channels, channels, 3, padding=1)

    def forward(self, img) -> EstimatorOutputs:
        w = self.invariant(img)
        fused = self.fuse(torch.cat([img, w], dim=-3))
        e_hat = self.to_e(fused)
        alpha_hat = torch.sigmoid(self.to_alpha(fused))
        if self.use_complement:
            L_hat, L_bar_hat = complement_split(e_hat, alpha_hat)
        else:
            L_hat, L_bar_hat = None, self.to_l_bar(e_hat)
        return EstimatorOutputs(e_hat=e_hat, alpha_hat=alpha_hat, L_hat=L_hat, L_bar_hat=L_bar_hat)


def lfe_forward(img, module: LightFeatureEstimator) -> EstimatorOutputs:
    return module(img)


class ReflectivityFeatureEstimator(nn.Module):
    """``R_hat = (E_hat - L_bar_hat / 2) * L'_hat`` with ``L'_hat`` a learned stand-in for ``1 / L_hat``.

    ``E_hat`` comes from conv3x3 + a CGAB fed the same feature on both
    streams, reduced back to ``C`` channels.  With ``use_reciprocal=False`` the
    conv output itself is taken as ``R_hat``.
    """

    def __init__(self, channels: int, heads: int = 1, use_reciprocal: bool = True):
        super().__init__()
        self.use_reciprocal = use_reciprocal
        self.embed = nn.Conv2d(3, channels, 3, padding=1)
        self.block = CGAB(channels, heads, CgabVariant.BASE)
        self.reduce = nn.Conv2d(2 * channels, channels, 1)
        self.to_l_prime = nn.Conv2d(channels, channels, 3, padding=1)

    def estimate_light(self, img):
        x = self.embed(img)
        return self.reduce(self.block(x, x))

    def forward(self, img, L_bar_hat):
        E_hat = self.estimate_light(img)
        if E_hat.shape != L_bar_hat.shape:
            raise ValueError(f"E_hat {tuple(E_hat.shape)} vs L_bar_hat {tuple(L_bar_hat.shape)}")
        D = E_hat - L_bar_hat / 2
        L_prime_hat = self.to_l_prime(D)
        R_hat = D * L_prime_hat if self.use_reciprocal else L_prime_hat
        return E_hat, L_prime_hat, R_hat, D


def rfe_forward(img, L_bar_hat, module: ReflectivityFeatureEstimator):
    E_hat, L_prime_hat, R_hat, _ = module(img, L_bar_hat)
    return E_hat, L_prime_hat, R_hat
