"""Write synthetic low/normal-light PNG pairs in the root/low + root/high layout."""
import argparse
from pathlib import Path

from tpcnet.data import write_png
from tpcnet.physics import make_degraded_pairs


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("root")
    p.add_argument("--count", type=int, default=8)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()
    root = Path(args.root)
    for i, (low, high) in enumerate(make_degraded_pairs(args.seed, args.count, args.size, args.size)):
        write_png(root / "low" / f"{i:04d}.png", low)
        write_png(root / "high" / f"{i:04d}.png", high)
    print(f"wrote {args.count} pairs under {root}")


if __name__ == "__main__":
    main()
