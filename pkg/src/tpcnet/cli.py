"""Command-line entry point: train, enhance, eval, flops, selftest."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
import torch

from .attention import AttentionVariant, count_attention_flops
from .checkpoint import CheckpointError, load_model
from .complexity import count_params_flops
from .config import RunConfig
from .data import DatasetError, atomic_write_bytes, list_pngs, load_pairs, read_png, write_png
from .evaluation import PairingError, evaluate_pairs
from .network import SIZE_MULTIPLE, NetworkConfig

log = logging.getLogger("tpcnet")


class UsageError(Exception):
    pass


def pad_to_multiple(img: np.ndarray, multiple: int = SIZE_MULTIPLE) -> np.ndarray:
    """Reflect-pad the bottom and right edges of a ``(C, H, W)`` array up to ``multiple``."""
    h, w = img.shape[-2:]
    ph, pw = -h % multiple, -w % multiple
    if ph == 0 and pw == 0:
        return img
    # reflect needs pad < size; fall back to symmetric for tiny images
    mode = "reflect" if ph < h and pw < w else "symmetric"
    return np.pad(img, ((0, 0), (0, ph), (0, pw)), mode=mode)


def enhance_array(model, img: np.ndarray) -> np.ndarray:
    h, w = img.shape[-2:]
    x = torch.as_tensor(pad_to_multiple(img), dtype=torch.float32)[None]
    with torch.no_grad():
        y = model(x)[0, :, :h, :w]
    return y.numpy()


def cmd_train(args) -> int:
    cfg = RunConfig.load(args.config)
    data = args.data or cfg.data
    out = args.out or cfg.out
    if not data or not out:
        raise UsageError("--data and --out are required (or set 'data'/'out' in the config)")
    from .training import train

    index = load_pairs(data)
    Path(out).mkdir(parents=True, exist_ok=True)
    atomic_write_bytes(Path(out) / "config.json", (json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n").encode())
    _, entries, ckpt = train(index, cfg.network, cfg.train, out_dir=out, max_steps=cfg.max_steps)
    print(f"trained {len(entries)} steps; final loss {entries[-1].loss:.5f}; checkpoint {ckpt}")
    return 0


def cmd_enhance(args) -> int:
    model, _ = load_model(args.ckpt)
    model.eval()
    src = Path(args.input)
    if src.is_dir():
        inputs = list_pngs(src)
    elif src.is_file():
        inputs = [src]
    else:
        raise UsageError(f"input {src} does not exist")
    if not inputs:
        raise UsageError(f"no PNG files in {src}")
    images = [(p, read_png(p)) for p in inputs]  # decode everything before writing anything
    out_dir = Path(args.output)
    for path, img in images:
        result = enhance_array(model, img)
        write_png(out_dir / path.name, result)
        if args.save_sidebyside:
            write_png(out_dir / "sidebyside" / path.name, np.concatenate([img, result], axis=-1))
        print(f"{path.name} -> {out_dir / path.name}")
    return 0


def cmd_eval(args) -> int:
    report = evaluate_pairs(args.pred, args.gt)
    atomic_write_bytes(Path(args.report), report.to_jsonl().encode("utf-8"))
    print(report.table())
    return 0


def cmd_flops(args) -> int:
    H, W, C, k = args.height, args.width, args.channels, args.heads
    cg = count_attention_flops(H, W, C, k, AttentionVariant.CG_MSA)
    conv = count_attention_flops(H, W, C, k, AttentionVariant.CONVENTIONAL_MSA)
    print(f"CG-MSA FLOPs:           {cg}")
    print(f"conventional MSA FLOPs: {conv}")
    print(f"ratio: {cg / conv:g}")
    if args.full_model:
        net = RunConfig.load(args.config).network if args.config else NetworkConfig()
        print(count_params_flops(net, H, W).summary())
    return 0


def cmd_selftest(args) -> int:
    from .selftest import run_selftest

    return 0 if run_selftest() else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tpcnet", description="Low-light enhancement with physically constrained features.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a model from a paired dataset")
    t.add_argument("--config", required=True)
    t.add_argument("--data")
    t.add_argument("--out")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("enhance", help="enhance a PNG file or directory")
    e.add_argument("--ckpt", required=True)
    e.add_argument("--input", required=True)
    e.add_argument("--output", required=True)
    e.add_argument("--save-sidebyside", action="store_true")
    e.set_defaults(func=cmd_enhance)

    v = sub.add_parser("eval", help="PSNR/SSIM between two PNG directories")
    v.add_argument("--pred", required=True)
    v.add_argument("--gt", required=True)
    v.add_argument("--report", required=True)
    v.set_defaults(func=cmd_eval)

    f = sub.add_parser("flops", help="attention FLOPs, optionally the full model")
    f.add_argument("--height", type=int, required=True)
    f.add_argument("--width", type=int, required=True)
    f.add_argument("--channels", type=int, required=True)
    f.add_argument("--heads", type=int, required=True)
    f.add_argument("--full-model", action="store_true")
    f.add_argument("--config")
    f.set_defaults(func=cmd_flops)

    s = sub.add_parser("selftest", help="run the built-in property checks")
    s.set_defaults(func=cmd_selftest)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (UsageError, ValueError, DatasetError, PairingError, CheckpointError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
