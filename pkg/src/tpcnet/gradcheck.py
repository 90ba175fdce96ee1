"""Central finite-difference check of autograd gradients on sampled parameter entries.

A central difference only estimates the derivative when the loss is smooth on
``[p - h, p + h]``.  The loss has kinks (L1 residual sign, output clamp, PReLU),
so for every sample the activation pattern of those ops is recorded at both
ends of the window; a sample whose window straddles a kink is flagged and
reported separately instead of being compared.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn

from .network import NetworkConfig, TPCNet, build_model
from .physics import make_degraded_pairs
from .training import LossWeights, total_loss

# parameter name fragment -> module family
FAMILIES = {
    "attention": (".attn.",),
    "blocks": (".norm_", ".ffn.", ".skip.", "down_", "up_", "out_c", "color_embed"),
    "estimators": ("lfe.", "rfe."),
    "color_heads": ("chroma_head", "brightness_head", "to_e_star"),
}

# below this both gradients are at the noise level of the difference quotient
GRAD_FLOOR = 1e-9


def family_of(name: str) -> str:
    # attention parameters live inside blocks and estimators, so check it first
    for fam, keys in FAMILIES.items():
        if any(k in name for k in keys):
            return fam
    raise KeyError(f"parameter {name} belongs to no family")


@dataclass
class GradSample:
    name: str
    index: tuple
    analytic: float
    numeric: float
    smooth: bool = True

    @property
    def family(self) -> str:
        return family_of(self.name)

    @property
    def rel_error(self) -> float:
        denom = max(abs(self.analytic), abs(self.numeric), GRAD_FLOOR)
        return abs(self.analytic - self.numeric) / denom


@dataclass
class GradCheckReport:
    samples: list[GradSample]
    skipped: list[GradSample]

    @property
    def max_rel_error(self) -> float:
        return max(s.rel_error for s in self.samples)

    def passed(self, tol: float = 1e-3, minimum: int = 50) -> bool:
        return len(self.samples) >= minimum and self.max_rel_error < tol


class _KinkRecorder:
    """Collects the branch pattern of every non-smooth op during one loss evaluation."""

    def __init__(self, model: nn.Module):
        self.patterns: list[torch.Tensor] = []
        self.handles = [
            m.register_forward_hook(lambda _m, inp, _out: self.patterns.append(inp[0] >= 0))
            for m in model.modules()
            if isinstance(m, nn.PReLU)
        ]

    def close(self):
        for h in self.handles:
            h.remove()


def model_loss(model: TPCNet, low, high, weights: LossWeights = LossWeights(), recorder: _KinkRecorder | None = None):
    out = model(low, return_all=True)
    space = model.space
    gt_color = space.forward(high)
    loss, _ = total_loss(out.I_en, high, out.I_color_star, gt_color, weights, None, space.luma_channel_index)
    if recorder is not None:
        recorder.patterns += [
            out.I_en > high,
            out.I_en < high,
            out.I_color_star > gt_color,
            out.I_color_star < gt_color,
            out.I_en == 0,
            out.I_en == 1,
        ]
    return loss


def _draw_entry(rng, names, params, seen):
    for _ in range(1000):
        name = names[rng.integers(len(names))]
        index = tuple(int(rng.integers(s)) for s in params[name].shape)
        if (name, index) not in seen:
            break
    seen.add((name, index))
    return name, index


def check_gradients(
    cfg: NetworkConfig | None = None,
    count: int = 52,
    h: float = 1e-4,
    size: int = 32,
    seed: int = 0,
    max_draws: int | None = None,
) -> GradCheckReport:
    """Compare autograd with ``(f(p + h) - f(p - h)) / 2h`` in float64.

    Draws entries round-robin over the parameter families until each family
    has ``ceil(count / n_families)`` kink-free samples.
    """
    cfg = cfg or NetworkConfig(base_channels=8)
    max_draws = max_draws or 4 * count
    model = build_model(cfg, seed=seed, dtype=torch.float64)
    low, high = make_degraded_pairs(seed, 1, size, size)[0]
    low = torch.as_tensor(low, dtype=torch.float64)[None]
    high = torch.as_tensor(high, dtype=torch.float64)[None]

    model.zero_grad()
    model_loss(model, low, high).backward()
    params = dict(model.named_parameters())
    by_family: dict[str, list[str]] = {}
    for name in params:
        by_family.setdefault(family_of(name), []).append(name)
    quota = -(-count // len(by_family))
    filled = {fam: 0 for fam in by_family}
    rng = np.random.default_rng(seed)
    seen: set = set()
    recorder = _KinkRecorder(model)
    samples, skipped = [], []
    try:
        with torch.no_grad():
            for draw in range(max_draws):
                open_fams = sorted(f for f, n in filled.items() if n < quota)
                if not open_fams:
                    break
                fam = open_fams[draw % len(open_fams)]
                name, index = _draw_entry(rng, by_family[fam], params, seen)
                p = params[name]
                analytic = p.grad[index].item()
                orig = p[index].item()
                recorder.patterns.clear()
                p[index] = orig + h
                up = model_loss(model, low, high, recorder=recorder).item()
                up_pattern = list(recorder.patterns)
                recorder.patterns.clear()
                p[index] = orig - h
                down = model_loss(model, low, high, recorder=recorder).item()
                p[index] = orig
                smooth = all(torch.equal(a, b) for a, b in zip(up_pattern, recorder.patterns))
                s = GradSample(name, index, analytic, (up - down) / (2 * h), smooth)
                if smooth:
                    samples.append(s)
                    filled[fam] += 1
                else:
                    skipped.append(s)
    finally:
        recorder.close()
    return GradCheckReport(samples, skipped)
