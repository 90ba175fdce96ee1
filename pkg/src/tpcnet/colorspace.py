"""Brightness/chroma color spaces used by the color-association head.

Everything operates on torch tensors shaped ``(..., 3, H, W)`` with values in
[0, 1] so the transforms can sit inside the network and be differentiated.
Built-in spaces are full-range BT.601 YCbCr and CIE LAB (D65) rescaled to
[0, 1]; further spaces can be registered as plugins.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import torch

YCBCR = "ycbcr"
LAB = "lab"

# full-range (JPEG) BT.601, chroma offset +0.5
_YCBCR_FWD = torch.tensor(
    [
        [0.299, 0.587, 0.114],
        [-0.168735891647856, -0.331264108352144, 0.5],
        [0.5, -0.418687589158345, -0.081312410841655],
    ],
    dtype=torch.float64,
)
_YCBCR_INV = torch.linalg.inv(_YCBCR_FWD)
_CHROMA_OFFSET = torch.tensor([0.0, 0.5, 0.5], dtype=torch.float64)

# sRGB primaries, D65 white
_RGB2XYZ = torch.tensor(
    [
        [0.412453, 0.357580, 0.180423],
        [0.212671, 0.715160, 0.072169],
        [0.019334, 0.119193, 0.950227],
    ],
    dtype=torch.float64,
)
_XYZ2RGB = torch.linalg.inv(_RGB2XYZ)
_WHITE = _RGB2XYZ.sum(dim=1)
_LAB_DELTA = 6.0 / 29.0
_AB_SCALE = 256.0


def _mix(x: torch.Tensor, matrix: torch.Tensor) -> torch.Tensor:
    m = matrix.to(dtype=x.dtype, device=x.device)
    return torch.einsum("ij,...jhw->...ihw", m, x)


def _offset(x: torch.Tensor, vec: torch.Tensor) -> torch.Tensor:
    return vec.to(dtype=x.dtype, device=x.device).view(3, 1, 1)


def ycbcr_forward(rgb: torch.Tensor) -> torch.Tensor:
    return _mix(rgb, _YCBCR_FWD) + _offset(rgb, _CHROMA_OFFSET)


def ycbcr_inverse(ycc: torch.Tensor) -> torch.Tensor:
    return _mix(ycc - _offset(ycc, _CHROMA_OFFSET), _YCBCR_INV)


def _srgb_to_linear(c):
    lo = c / 12.92
    hi = ((c.clamp(min=0.04045) + 0.055) / 1.055) ** 2.4
    return torch.where(c <= 0.04045, lo, hi)


def _linear_to_srgb(c):
    lo = c * 12.92
    hi = 1.055 * c.clamp(min=0.0031308) ** (1 / 2.4) - 0.055
    return torch.where(c <= 0.0031308, lo, hi)


def _lab_f(t):
    d3 = _LAB_DELTA**3
    return torch.where(t > d3, t.clamp(min=d3) ** (1 / 3), t / (3 * _LAB_DELTA**2) + 4 / 29)


def _lab_finv(f):
    return torch.where(f > _LAB_DELTA, f.clamp(min=_LAB_DELTA) ** 3, 3 * _LAB_DELTA**2 * (f - 4 / 29))


def lab_forward(rgb: torch.Tensor) -> torch.Tensor:
    xyz = _mix(_srgb_to_linear(rgb), _RGB2XYZ) / _offset(rgb, _WHITE)
    fx, fy, fz = _lab_f(xyz).unbind(dim=-3)
    L = (116 * fy - 16) / 100
    a = 500 * (fx - fy) / _AB_SCALE + 0.5
    b = 200 * (fy - fz) / _AB_SCALE + 0.5
    return torch.stack([L, a, b], dim=-3)


def lab_inverse(lab: torch.Tensor) -> torch.Tensor:
    L, a, b = lab.unbind(dim=-3)
    fy = (L * 100 + 16) / 116
    fx = fy + (a - 0.5) * _AB_SCALE / 500
    fz = fy - (b - 0.5) * _AB_SCALE / 200
    xyz = _lab_finv(torch.stack([fx, fy, fz], dim=-3)) * _offset(lab, _WHITE)
    return _linear_to_srgb(_mix(xyz, _XYZ2RGB))


@dataclass(frozen=True)
class ColorSpace:
    name: str
    forward: Callable[[torch.Tensor], torch.Tensor]
    inverse: Callable[[torch.Tensor], torch.Tensor]
    luma_channel_index: int = 0


_REGISTRY: dict[str, ColorSpace] = {
    YCBCR: ColorSpace(YCBCR, ycbcr_forward, ycbcr_inverse, 0),
    LAB: ColorSpace(LAB, lab_forward, lab_inverse, 0),
}


def register_color_space(space: ColorSpace) -> None:
    """Add a plugin space (e.g. HVI) usable by name in network configs."""
    if space.name in (YCBCR, LAB):
        raise ValueError(f"cannot replace built-in color space {space.name!r}")
    if space.luma_channel_index not in (0, 1, 2):
        raise ValueError("luma_channel_index must be 0, 1 or 2")
    _REGISTRY[space.name] = space


def get_color_space(name: str) -> ColorSpace:
    try:
        return _REGISTRY[name]
    except KeyError:
        raise ValueError(f"unknown color space {name!r}; known: {sorted(_REGISTRY)}") from None


def available_color_spaces() -> list[str]:
    return sorted(_REGISTRY)


@dataclass(frozen=True)
class ColorImage:
    values: torch.Tensor
    space_id: str
    luma_channel_index: int


def _check_rgb(img):
    if img.ndim < 3 or img.shape[-3] != 3:
        raise ValueError(f"expected (..., 3, H, W) image, got {tuple(img.shape)}")


def to_color(img: torch.Tensor, space_id: str) -> ColorImage:
    _check_rgb(img)
    space = get_color_space(space_id)
    return ColorImage(space.forward(img.clamp(0, 1)), space.name, space.luma_channel_index)


def from_color(c: ColorImage, space_id: str | None = None) -> torch.Tensor:
    if space_id is not None and c.space_id != space_id:
        raise ValueError(f"expected a {space_id!r} image, got {c.space_id!r}")
    return get_color_space(c.space_id).inverse(c.values).clamp(0, 1)


def rgb_to_ycbcr(img: torch.Tensor) -> ColorImage:
    return to_color(img, YCBCR)


def ycbcr_to_rgb(c: ColorImage) -> torch.Tensor:
    return from_color(c, YCBCR)


def rgb_to_lab(img: torch.Tensor) -> ColorImage:
    return to_color(img, LAB)


def lab_to_rgb(c: ColorImage) -> torch.Tensor:
    return from_color(c, LAB)


def split_luma_chroma(c: ColorImage) -> tuple[torch.Tensor, torch.Tensor]:
    """Return ``(brightness (...,1,H,W), chroma (...,2,H,W))``; chroma keeps its channel order."""
    i = c.luma_channel_index
    v = c.values
    chroma_idx = [j for j in range(3) if j != i]
    return v[..., i : i + 1, :, :], v[..., chroma_idx, :, :]


def merge_channels(brightness: torch.Tensor, chroma: torch.Tensor, luma_channel_index: int) -> torch.Tensor:
    if brightness.shape[-3] != 1 or chroma.shape[-3] != 2:
        raise ValueError("brightness must have 1 channel and chroma 2")
    if brightness.shape[:-3] != chroma.shape[:-3] or brightness.shape[-2:] != chroma.shape[-2:]:
        raise ValueError(f"shape mismatch: {tuple(brightness.shape)} vs {tuple(chroma.shape)}")
    parts = list(chroma.split(1, dim=-3))
    parts.insert(luma_channel_index, brightness)
    return torch.cat(parts, dim=-3)


def merge_luma_chroma(brightness: torch.Tensor, chroma: torch.Tensor, space_id: str) -> ColorImage:
    space = get_color_space(space_id)
    values = merge_channels(brightness, chroma, space.luma_channel_index)
    return ColorImage(values, space.name, space.luma_channel_index)


def luma(img: torch.Tensor) -> torch.Tensor:
    """BT.601 luma of an RGB tensor, keeping the channel axis."""
    w = _YCBCR_FWD[0].to(dtype=img.dtype, device=img.device).view(3, 1, 1)
    return (img * w).sum(dim=-3, keepdim=True)
