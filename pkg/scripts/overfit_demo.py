"""Overfit a tiny network on four synthetic pairs and print the epoch-mean loss curve."""
import argparse
import time

import numpy as np
import torch

from tpcnet.evaluation import psnr
from tpcnet.network import NetworkConfig
from tpcnet.physics import make_degraded_pairs
from tpcnet.training import TrainConfig, epoch_means, train


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--steps", type=int, default=500)
    p.add_argument("--lr", type=float, default=4e-5)
    p.add_argument("--channels", type=int, default=8)
    args = p.parse_args()

    pairs = make_degraded_pairs(0, 4, 32, 32)
    cfg = TrainConfig(lr_init=args.lr, epochs=args.steps, batch_size=4, crop=32, augment=False)
    t0 = time.perf_counter()
    model, entries, _ = train(pairs, NetworkConfig(base_channels=args.channels), cfg, max_steps=args.steps)
    model.eval()
    with torch.no_grad():
        final = np.mean([psnr(model(torch.as_tensor(lo)[None])[0], hi) for lo, hi in pairs])
    base = np.mean([psnr(lo, hi) for lo, hi in pairs])
    means = epoch_means(entries)
    for i in range(0, len(means), max(1, len(means) // 20)):
        print(f"epoch {i:4d}  loss {means[i]:.5f}")
    rises = sum(b >= a for a, b in zip(means, means[1:]))
    print(f"input PSNR {base:.2f} dB -> {final:.2f} dB; {rises} non-decreasing epochs; {time.perf_counter() - t0:.0f}s")


if __name__ == "__main__":
    main()
