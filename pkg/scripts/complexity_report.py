"""Parameter and FLOPs table for several channel widths at a given resolution."""
import argparse

from tpcnet.complexity import count_params_flops
from tpcnet.network import NetworkConfig


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--size", type=int, default=256)
    p.add_argument("--widths", type=int, nargs="+", default=[8, 10, 12, 16])
    args = p.parse_args()
    print(f"{'C':>3}  {'params (M)':>10}  {'FLOPs (G)':>9}  {'attention (G)':>13}")
    for c in args.widths:
        r = count_params_flops(NetworkConfig(base_channels=c), args.size, args.size)
        print(f"{c:>3}  {r.params / 1e6:>10.3f}  {r.flops / 1e9:>9.3f}  {r.attention_flops / 1e9:>13.4f}")


if __name__ == "__main__":
    main()
