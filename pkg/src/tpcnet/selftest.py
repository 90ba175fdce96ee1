"""Quick property checks run by ``tpcnet selftest``."""
from __future__ import annotations

import time
from typing import Callable

import numpy as np
import torch

from .attention import count_attention_flops
from .colorspace import lab_to_rgb, rgb_to_lab, rgb_to_ycbcr, ycbcr_to_rgb
from .gradcheck import check_gradients
from .network import ABLATIONS, NetworkConfig, build_model, constraint_residuals
from .physics import make_synthetic_scene, recover_reflectivity, split_illumination


def check_round_trip() -> str:
    worst = 0.0
    for seed in range(20):
        sc = make_synthetic_scene(seed, 3, 32, 32)
        pair = split_illumination(sc.e, sc.alpha)
        R = recover_reflectivity(sc.E_approx, pair.L_bar, 1 / pair.L)
        worst = max(worst, float(np.max(np.abs(R - sc.R))))
    assert worst < 1e-9, worst
    return f"max |R - R0| = {worst:.2e}"


def check_identities() -> str:
    model = build_model(NetworkConfig(base_channels=4), seed=0)
    g = torch.Generator().manual_seed(0)
    with torch.no_grad():
        for _ in range(5):
            out = model(torch.rand(1, 3, 32, 32, generator=g), return_all=True)
            res = constraint_residuals(out, model.cfg)
            assert all(v == 0.0 for v in res.values()), res
    return "light split, reflectivity and output identities exact"


def check_flops_ratio() -> str:
    for H, W, C, k in [(256, 256, 64, 4), (32, 48, 12, 3), (2, 2, 1, 1)]:
        cg = count_attention_flops(H, W, C, k, "cg_msa")
        conv = count_attention_flops(H, W, C, k, "conventional_msa")
        assert 4 * cg == conv and 2 * k * cg == H * W * C * C
    return "CG-MSA / conventional = 0.25"


def check_shapes() -> str:
    g = torch.Generator().manual_seed(1)
    for name, flags in ABLATIONS.items():
        model = build_model(NetworkConfig(base_channels=4, **flags))
        with torch.no_grad():
            for size in (32, 64):
                x = torch.rand(1, 3, size, size, generator=g)
                assert model(x).shape == x.shape, name
    return f"{len(ABLATIONS)} ablations at 32 and 64 px"


def check_color() -> str:
    rgb = torch.rand(3, 1000, 1, generator=torch.Generator().manual_seed(2), dtype=torch.float64)
    e1 = (ycbcr_to_rgb(rgb_to_ycbcr(rgb)) - rgb).abs().max().item()
    e2 = (lab_to_rgb(rgb_to_lab(rgb)) - rgb).abs().max().item()
    assert e1 < 1e-4 and e2 < 1e-3, (e1, e2)
    return f"YCbCr {e1:.1e}, LAB {e2:.1e}"


def check_gradient() -> str:
    report = check_gradients(NetworkConfig(base_channels=8), count=52)
    assert report.passed(), report.max_rel_error
    return f"{len(report.samples)} entries, max rel err {report.max_rel_error:.1e}"


CHECKS: dict[str, Callable[[], str]] = {
    "round-trip": check_round_trip,
    "identities": check_identities,
    "flops-ratio": check_flops_ratio,
    "shapes": check_shapes,
    "color": check_color,
    "gradient": check_gradient,
}


def run_selftest(printer=print) -> bool:
    ok = True
    for name, fn in CHECKS.items():
        t0 = time.perf_counter()
        try:
            detail = fn()
            status = "PASS"
        except Exception as exc:  # report every failure, keep going
            detail = f"{type(exc).__name__}: {exc}"
            status = "FAIL"
            ok = False
        printer(f"{status} {name:<12} {detail} ({time.perf_counter() - t0:.1f}s)")
    return ok
