"""Losses, Adam, cosine schedule, paired augmentation and the training loop."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import torch
import torch.nn.functional as F

from .checkpoint import save_checkpoint
from .colorspace import luma
from .data import DatasetIndex, atomic_write_bytes
from .evaluation import psnr, ssim
from .network import NetworkConfig, build_model, check_input_size

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    lr_init: float = 2.5e-4
    lr_final: float = 1e-7
    epochs: int = 1500
    batch_size: int = 8
    crop: int = 320
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    w_l1: float = 1.0
    w_ssim: float = 0.2
    w_edge: float = 0.1
    w_perc: float = 0.0
    augment: bool = True
    checkpoint_every: int = 0
    seed: int = 0

    def __post_init__(self):
        if not self.lr_final < self.lr_init:
            raise ValueError("lr_final must be below lr_init")
        if self.crop % 16:
            raise ValueError("crop must be divisible by 16")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")

    @classmethod
    def desk_scale(cls, **overrides) -> "TrainConfig":
        """CPU-sized profile: 64 px crops, batch 2, at most 200 epochs."""
        base = dict(crop=64, batch_size=2, epochs=200)
        base.update(overrides)
        return cls(**base)

    @property
    def weights(self) -> "LossWeights":
        return LossWeights(self.w_l1, self.w_ssim, self.w_edge, self.w_perc)


def lr_at(step: int, total_steps: int, cfg: TrainConfig) -> float:
    """Cosine annealing from ``lr_init`` at step 0 to ``lr_final`` at ``total_steps``."""
    t = min(max(step, 0), total_steps) / max(total_steps, 1)
    return cfg.lr_final + 0.5 * (cfg.lr_init - cfg.lr_final) * (1 + math.cos(math.pi * t))


@dataclass
class AdamState:
    step: int
    m: dict[str, torch.Tensor]
    v: dict[str, torch.Tensor]

    @classmethod
    def zeros_like(cls, params: dict[str, torch.Tensor]) -> "AdamState":
        return cls(
            0,
            {k: torch.zeros_like(p) for k, p in params.items()},
            {k: torch.zeros_like(p) for k, p in params.items()},
        )


def adam_step(params, grads, state: AdamState, lr: float, cfg: TrainConfig):
    """One bias-corrected Adam update; returns new ``(params, state)`` without mutating inputs."""
    b1, b2 = cfg.beta1, cfg.beta2
    t = state.step + 1
    new_p, new_m, new_v = {}, {}, {}
    for name, p in params.items():
        g = grads[name]
        m = b1 * state.m[name] + (1 - b1) * g
        v = b2 * state.v[name] + (1 - b2) * g * g
        m_hat = m / (1 - b1**t)
        v_hat = v / (1 - b2**t)
        new_p[name] = p - lr * m_hat / (v_hat.sqrt() + cfg.adam_eps)
        new_m[name], new_v[name] = m, v
    return new_p, AdamState(t, new_m, new_v)


# --- losses -------------------------------------------------------------------

_SOBEL_X = torch.tensor([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]], dtype=torch.float64)
_EDGE_DELTA = 1e-6


def l1_loss(x, y):
    return (x - y).abs().mean()


def ssim_loss(x, y):
    return 1 - ssim(x, y)


def sobel_magnitude(gray: torch.Tensor) -> torch.Tensor:
    kx = _SOBEL_X.to(dtype=gray.dtype, device=gray.device)
    kernel = torch.stack([kx, kx.t()]).unsqueeze(1)
    squeeze = gray.ndim == 3
    g = gray[None] if squeeze else gray
    grads = F.conv2d(F.pad(g, (1, 1, 1, 1), mode="replicate"), kernel)
    d = torch.tensor(_EDGE_DELTA, dtype=gray.dtype, device=gray.device)
    mag = torch.sqrt((grads * grads).sum(dim=1, keepdim=True) + d * d) - d
    return mag[0] if squeeze else mag


def edge_loss(x, y, luma_index: int | None = None):
    """Mean absolute difference of Sobel magnitudes on the brightness channel.

    ``luma_index=None`` treats inputs as RGB and uses BT.601 luma; otherwise
    the given channel is the brightness channel of a color-space image.
    """
    if luma_index is None:
        gx, gy = luma(x), luma(y)
    else:
        gx = x[..., luma_index : luma_index + 1, :, :]
        gy = y[..., luma_index : luma_index + 1, :, :]
    return (sobel_magnitude(gx) - sobel_magnitude(gy)).abs().mean()


@dataclass(frozen=True)
class LossWeights:
    l1: float = 1.0
    ssim: float = 0.2
    edge: float = 0.1
    perc: float = 0.0

    def __post_init__(self):
        if min(self.l1, self.ssim, self.edge, self.perc) < 0:
            raise ValueError("loss weights must be non-negative")


def total_loss(
    pred_rgb,
    gt_rgb,
    pred_color,
    gt_color,
    weights: LossWeights = LossWeights(),
    perceptual: Callable | None = None,
    luma_index: int = 0,
):
    """Weighted L1 + SSIM + edge (+ optional perceptual) in RGB and in the color space.

    Returns ``(total, parts)`` where ``parts`` maps ``"<space>/<term>"`` to the
    unweighted term value.
    """
    parts = {}
    total = pred_rgb.new_zeros(())
    for space, p, g, li in (("rgb", pred_rgb, gt_rgb, None), ("color", pred_color, gt_color, luma_index)):
        terms = {"l1": l1_loss(p, g)}
        if weights.ssim:
            terms["ssim"] = ssim_loss(p, g)
        if weights.edge:
            terms["edge"] = edge_loss(p, g, li)
        if weights.perc and perceptual is not None:
            terms["perc"] = perceptual(p, g)
        for name, value in terms.items():
            parts[f"{space}/{name}"] = value
            total = total + getattr(weights, name) * value
    return total, parts


# --- augmentation -------------------------------------------------------------


def augment(pair, rng):
    """Apply the same random flips and quarter-turn rotation to both images.

    ``rng`` is a ``numpy.random.Generator`` or an integer seed.  Arrays are
    ``(C, H, W)``.
    """
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    hflip = rng.random() < 0.5
    vflip = rng.random() < 0.5
    quarter_turns = int(rng.integers(4))

    def apply(img):
        if hflip:
            img = img[..., :, ::-1]
        if vflip:
            img = img[..., ::-1, :]
        return np.ascontiguousarray(np.rot90(img, quarter_turns, axes=(-2, -1)))

    return tuple(apply(img) for img in pair)


def random_crop(pair, size: int, rng: np.random.Generator):
    h, w = pair[0].shape[-2:]
    if size > min(h, w):
        raise ValueError(f"crop {size} larger than image {h}x{w}")
    top = int(rng.integers(h - size + 1))
    left = int(rng.integers(w - size + 1))
    return tuple(img[..., top : top + size, left : left + size] for img in pair)


# --- loop ---------------------------------------------------------------------


@dataclass
class TrainLogEntry:
    step: int
    epoch: int
    lr: float
    loss: float
    parts: dict
    psnr: float

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def _validate_dataset(pairs, crop):
    if len(pairs) == 0:
        raise ValueError("dataset is empty")
    for lo, hi in pairs:
        if lo.shape != hi.shape:
            raise ValueError(f"pair shapes differ: {lo.shape} vs {hi.shape}")
        if crop > min(lo.shape[-2:]):
            raise ValueError(f"crop {crop} larger than image {lo.shape[-2]}x{lo.shape[-1]}")


def train(
    dataset: DatasetIndex | Sequence[tuple[np.ndarray, np.ndarray]],
    net_cfg: NetworkConfig,
    train_cfg: TrainConfig,
    out_dir=None,
    max_steps: int | None = None,
    perceptual: Callable | None = None,
    dtype=torch.float32,
):
    """Train from scratch; returns ``(model, log_entries, checkpoint_path)``.

    One epoch visits every pair once in shuffled order.  With ``out_dir`` set,
    ``log.jsonl`` and ``final.ckpt`` (plus ``epoch_XXXX.ckpt`` every
    ``checkpoint_every`` epochs) are written there.
    """
    pairs = dataset.load() if isinstance(dataset, DatasetIndex) else list(dataset)
    _validate_dataset(pairs, train_cfg.crop)
    check_input_size(train_cfg.crop, train_cfg.crop)
    out_dir = Path(out_dir) if out_dir is not None else None

    model = build_model(net_cfg, seed=train_cfg.seed, dtype=dtype)
    model.train()
    space = model.space
    rng = np.random.default_rng(train_cfg.seed)
    weights = train_cfg.weights

    n = len(pairs)
    bs = min(train_cfg.batch_size, n)
    steps_per_epoch = math.ceil(n / bs)
    total_steps = train_cfg.epochs * steps_per_epoch
    if max_steps is not None:
        total_steps = min(total_steps, max_steps)

    params = dict(model.named_parameters())
    state = AdamState.zeros_like({k: p.detach() for k, p in params.items()})
    entries: list[TrainLogEntry] = []
    log_lines: list[str] = []
    ckpt_path = None
    step = 0
    epoch = 0
    while step < total_steps:
        order = rng.permutation(n)
        for start in range(0, n, bs):
            if step >= total_steps:
                break
            lows, highs = [], []
            for idx in order[start : start + bs]:
                pair = random_crop(pairs[idx], train_cfg.crop, rng)
                if train_cfg.augment:
                    pair = augment(pair, rng)
                lows.append(pair[0])
                highs.append(pair[1])
            low = torch.as_tensor(np.stack(lows), dtype=dtype)
            high = torch.as_tensor(np.stack(highs), dtype=dtype)

            out = model(low, return_all=True)
            gt_color = space.forward(high)
            loss, parts = total_loss(
                out.I_en, high, out.I_color_star, gt_color, weights, perceptual, space.luma_channel_index
            )
            model.zero_grad(set_to_none=False)
            loss.backward()

            lr = lr_at(step, total_steps, train_cfg)
            with torch.no_grad():
                current = {k: p.detach() for k, p in params.items()}
                grads = {k: p.grad for k, p in params.items()}
                updated, state = adam_step(current, grads, state, lr, train_cfg)
                for k, p in params.items():
                    p.copy_(updated[k])

            entry = TrainLogEntry(
                step=step,
                epoch=epoch,
                lr=lr,
                loss=loss.item(),
                parts={k: v.item() for k, v in parts.items()},
                psnr=psnr(out.I_en.detach(), high),
            )
            entries.append(entry)
            log_lines.append(entry.to_json())
            if step % 50 == 0:
                log.info("step %d epoch %d lr %.3e loss %.5f psnr %.2f", step, epoch, lr, entry.loss, entry.psnr)
            step += 1
        epoch += 1
        if out_dir is not None and train_cfg.checkpoint_every and epoch % train_cfg.checkpoint_every == 0:
            save_checkpoint(out_dir / f"epoch_{epoch:04d}.ckpt", model, net_cfg, step)

    if out_dir is not None:
        atomic_write_bytes(out_dir / "log.jsonl", ("\n".join(log_lines) + "\n").encode("utf-8"))
        ckpt_path = out_dir / "final.ckpt"
        save_checkpoint(ckpt_path, model, net_cfg, step)
    return model, entries, ckpt_path


def epoch_means(entries: Sequence[TrainLogEntry]) -> list[float]:
    by_epoch: dict[int, list[float]] = {}
    for e in entries:
        by_epoch.setdefault(e.epoch, []).append(e.loss)
    return [float(np.mean(v)) for _, v in sorted(by_epoch.items())]


def train_config_fields() -> list[str]:
    return [f.name for f in fields(TrainConfig)]
