"""Kubelka-Munk image formation and the triple physical constraint.

All functions are elementwise and accept numpy arrays or torch tensors laid
out as ``(..., C, H, W)``.  Single-channel fields (``rho_f``, ``alpha``) are
``(..., 1, H, W)`` and broadcast across the channel axis.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# rho_f must stay below this so that alpha = 1 - 2 rho_f remains positive
RHO_MAX = 0.5


def _check_scalar_field(name, field, ref):
    if field.ndim < 3 or field.shape[-3] != 1:
        raise ValueError(f"{name} must be a single-channel field (..., 1, H, W), got {tuple(field.shape)}")
    if tuple(field.shape[-2:]) != tuple(ref.shape[-2:]):
        raise ValueError(
            f"{name} spatial shape {tuple(field.shape[-2:])} does not match {tuple(ref.shape[-2:])}"
        )


def _check_same(name_a, a, name_b, b):
    if tuple(a.shape) != tuple(b.shape):
        raise ValueError(f"shape mismatch: {name_a}{tuple(a.shape)} vs {name_b}{tuple(b.shape)}")


def alpha_from_rho(rho_f):
    """Map the specular coefficient to the Taylor weight ``alpha = 1 - 2 rho_f``."""
    if (rho_f < 0).any() or (rho_f >= RHO_MAX).any():
        raise ValueError("rho_f must lie in [0, 0.5); larger values break the small-quantity expansion")
    return 1 - 2 * rho_f


def exact_km_reflected(e, rho_f, R):
    """Reflected light without truncation: ``e * ((1 - rho_f)^2 R + rho_f)``."""
    _check_same("e", e, "R", R)
    _check_scalar_field("rho_f", rho_f, e)
    return e * ((1 - rho_f) ** 2 * R + rho_f)


def compose_reflected(e, alpha, R):
    """First-order reflected light ``alpha e R + (1 - alpha) e / 2``."""
    _check_same("e", e, "R", R)
    _check_scalar_field("alpha", alpha, e)
    return alpha * e * R + (1 - alpha) * e / 2


@dataclass(frozen=True)
class IlluminationPair:
    L: object
    L_bar: object


def _where(mask, a, b):
    if isinstance(mask, np.ndarray):
        return np.where(mask, a, b)
    import torch

    return torch.where(mask, a, b)


def complement_split(e, alpha):
    """Return ``(L, L_bar)`` with ``L = alpha e`` and ``L + L_bar == e`` bit-exactly.

    A plain ``e - alpha * e`` rounds, so the sum misses ``e`` by an ulp in a
    few percent of entries.  Whichever of ``alpha e`` or ``(1 - alpha) e`` lies
    in ``[e/2, e]`` is computed directly; the other comes from a subtraction
    that is exact by Sterbenz's lemma, so both halves add back to ``e``.
    Requires ``alpha`` in [0, 1].
    """
    L = _where(alpha >= 0.5, alpha * e, e - (1 - alpha) * e)
    return L, e - L


def split_illumination(e, alpha):
    """Split ``e`` into ``L = alpha e`` and its complement ``L_bar = e - L``."""
    _check_scalar_field("alpha", alpha, e)
    if (alpha < 0).any() or (alpha > 1).any():
        raise ValueError("alpha must lie in [0, 1]")
    L, L_bar = complement_split(e, alpha)
    return IlluminationPair(L=L, L_bar=L_bar)


def recover_reflectivity(E, L_bar, L_inv):
    """Reflectivity via the reciprocal proxy: ``(E - L_bar / 2) * L_inv``."""
    _check_same("E", E, "L_bar", L_bar)
    _check_same("E", E, "L_inv", L_inv)
    return (E - L_bar / 2) * L_inv


@dataclass(frozen=True)
class SceneGroundTruth:
    e: np.ndarray
    rho_f: np.ndarray
    alpha: np.ndarray
    R: np.ndarray
    E_exact: np.ndarray
    E_approx: np.ndarray


def _smooth_field(rng, shape, lo, hi):
    # low-frequency field: bilinear upsampling of a coarse random grid
    c, h, w = shape
    gh, gw = max(2, h // 4 + 1), max(2, w // 4 + 1)
    coarse = rng.uniform(lo, hi, size=(c, gh, gw))
    yi = np.linspace(0, gh - 1, h)
    xi = np.linspace(0, gw - 1, w)
    y0 = np.clip(np.floor(yi).astype(int), 0, gh - 2)
    x0 = np.clip(np.floor(xi).astype(int), 0, gw - 2)
    ty = (yi - y0)[:, None]
    tx = (xi - x0)[None, :]
    a = coarse[:, y0][:, :, x0]
    b = coarse[:, y0][:, :, x0 + 1]
    c_ = coarse[:, y0 + 1][:, :, x0]
    d = coarse[:, y0 + 1][:, :, x0 + 1]
    out = (1 - ty) * ((1 - tx) * a + tx * b) + ty * ((1 - tx) * c_ + tx * d)
    return np.clip(out, lo, hi)


def make_synthetic_scene(seed: int, C: int, H: int, W: int) -> SceneGroundTruth:
    """Deterministic float64 scene with e in [0.5, 2], rho_f in [0, 0.2], R in [0, 1]."""
    if min(C, H, W) < 1:
        raise ValueError("scene dimensions must be >= 1")
    rng = np.random.default_rng(seed)
    e = _smooth_field(rng, (C, H, W), 0.5, 2.0)
    rho_f = _smooth_field(rng, (1, H, W), 0.0, 0.2)
    R = rng.uniform(0.0, 1.0, size=(C, H, W))
    alpha = alpha_from_rho(rho_f)
    return SceneGroundTruth(
        e=e,
        rho_f=rho_f,
        alpha=alpha,
        R=R,
        E_exact=exact_km_reflected(e, rho_f, R),
        E_approx=compose_reflected(e, alpha, R),
    )


def make_degraded_pairs(seed: int, count: int, H: int, W: int, light=(0.08, 0.25)):
    """Synthetic (low, normal) float32 image pairs darkened with ``compose_reflected``.

    The normal-light image plays the reflectivity; a dim smooth illumination
    field and a small specular term produce the low-light input.
    """
    rng = np.random.default_rng(seed)
    pairs = []
    for _ in range(count):
        gt = 0.15 + 0.7 * _smooth_field(rng, (3, H, W), 0.0, 1.0)
        gt = np.clip(gt + rng.uniform(-0.1, 0.1, size=(3, 1, 1)), 0.0, 1.0)
        e = np.repeat(_smooth_field(rng, (1, H, W), *light), 3, axis=0)
        rho = _smooth_field(rng, (1, H, W), 0.0, 0.2)
        low = np.clip(compose_reflected(e, alpha_from_rho(rho), gt), 0.0, 1.0)
        pairs.append((low.astype(np.float32), gt.astype(np.float32)))
    return pairs
