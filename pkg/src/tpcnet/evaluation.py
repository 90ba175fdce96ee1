"""Reference image-quality metrics and paired-directory evaluation."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1, SSIM_K2 = 0.01, 0.03
PSNR_IDENTICAL = math.inf


def _as_tensor(x) -> torch.Tensor:
    if torch.is_tensor(x):
        return x
    return torch.as_tensor(np.asarray(x, dtype=np.float64))


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA, dtype=torch.float64) -> torch.Tensor:
    x = torch.arange(size, dtype=dtype) - (size - 1) / 2
    g = torch.exp(-(x**2) / (2 * sigma**2))
    g = g / g.sum()
    return torch.outer(g, g)


def ssim_map(x: torch.Tensor, y: torch.Tensor, data_range: float = 1.0) -> torch.Tensor:
    """Per-window SSIM over every channel; windows are fully inside the image."""
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch {tuple(x.shape)} vs {tuple(y.shape)}")
    squeeze = x.ndim == 3
    if squeeze:
        x, y = x[None], y[None]
    n, c, h, w = x.shape
    if min(h, w) < SSIM_WINDOW:
        raise ValueError(f"SSIM needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}")
    win = gaussian_window(dtype=x.dtype).to(x.device).expand(c, 1, SSIM_WINDOW, SSIM_WINDOW)

    def blur(t):
        return F.conv2d(t, win, groups=c)

    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    mu_x, mu_y = blur(x), blur(y)
    sxx = blur(x * x) - mu_x * mu_x
    syy = blur(y * y) - mu_y * mu_y
    sxy = blur(x * y) - mu_x * mu_y
    num = (2 * mu_x * mu_y + c1) * (2 * sxy + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (sxx + syy + c2)
    out = num / den
    return out[0] if squeeze else out


def ssim(x, y) -> torch.Tensor:
    """Mean SSIM with an 11x11 Gaussian window (sigma 1.5) on [0, 1] data."""
    return ssim_map(_as_tensor(x), _as_tensor(y)).mean()


def ssim_metric(x, y) -> float:
    return float(ssim(x, y))


def psnr(x, y) -> float:
    """``10 log10(1 / MSE)`` in dB; identical inputs give ``inf``."""
    x = np.asarray(_as_tensor(x).detach().cpu(), dtype=np.float64)
    y = np.asarray(_as_tensor(y).detach().cpu(), dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {y.shape}")
    mse = np.mean((x - y) ** 2)
    if mse == 0:
        return PSNR_IDENTICAL
    return float(10 * np.log10(1.0 / mse))


class PairingError(ValueError):
    pass


@dataclass
class MetricReport:
    per_image: dict[str, dict[str, float]] = field(default_factory=dict)
    params: int | None = None
    flops: int | None = None

    @property
    def mean_psnr(self) -> float:
        return _mean([m["psnr"] for m in self.per_image.values()])

    @property
    def mean_ssim(self) -> float:
        return _mean([m["ssim"] for m in self.per_image.values()])

    def records(self) -> list[dict]:
        rows = [{"image": name, **vals} for name, vals in self.per_image.items()]
        summary = {"summary": True, "count": len(rows), "mean_psnr": self.mean_psnr, "mean_ssim": self.mean_ssim}
        if self.params is not None:
            summary["params"] = self.params
        if self.flops is not None:
            summary["flops"] = self.flops
        return rows + [summary]

    def to_jsonl(self) -> str:
        # inf is written as the JSON-compatible string "inf"
        def clean(v):
            return "inf" if isinstance(v, float) and math.isinf(v) else v

        return "".join(json.dumps({k: clean(v) for k, v in r.items()}) + "\n" for r in self.records())

    def table(self) -> str:
        width = max([5] + [len(n) for n in self.per_image])
        lines = [f"{'image':<{width}}  {'PSNR':>8}  {'SSIM':>7}"]
        for name, m in self.per_image.items():
            lines.append(f"{name:<{width}}  {m['psnr']:>8.3f}  {m['ssim']:>7.4f}")
        lines.append(f"{'mean':<{width}}  {self.mean_psnr:>8.3f}  {self.mean_ssim:>7.4f}")
        return "\n".join(lines)


def _mean(values):
    if not values:
        return math.nan
    return float(sum(values) / len(values))


def evaluate_pairs(pred_dir, gt_dir) -> MetricReport:
    from .data import list_pngs, read_png

    pred_dir, gt_dir = Path(pred_dir), Path(gt_dir)
    pred = {p.name: p for p in list_pngs(pred_dir)}
    gt = {p.name: p for p in list_pngs(gt_dir)}
    missing = sorted(set(pred) ^ set(gt))
    if missing:
        where = ["pred" if n in pred else "gt" for n in missing]
        detail = ", ".join(f"{n} (only in {w})" for n, w in zip(missing, where))
        raise PairingError(f"unpaired files: {detail}")
    if not pred:
        raise PairingError(f"no PNG files in {pred_dir}")
    report = MetricReport()
    for name in sorted(pred):
        x, y = read_png(pred[name]), read_png(gt[name])
        report.per_image[name] = {"psnr": psnr(x, y), "ssim": ssim_metric(x, y)}
    return report
