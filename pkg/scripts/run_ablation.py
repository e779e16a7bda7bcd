"""Train the three ablation variants at tiny scale and tabulate mean PSNR."""
import argparse
import time

import numpy as np

from fanet.experiments import ABLATIONS, ablation_study, mean_psnr, synthetic_pairs
from fanet.model import NetConfig, zero_params


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--pairs", type=int, default=20)
    args = ap.parse_args()
    start = time.perf_counter()
    table = ablation_study(seeds=tuple(args.seeds), pair_count=args.pairs, echo=lambda s: print(s, flush=True))
    identity = NetConfig(groups=1, blocks=1, filters=4)
    baseline = mean_psnr(synthetic_pairs(args.pairs, 64, 100), zero_params(identity), identity)
    print(f"\n{'variant':8s} " + " ".join(f"seed{s:<5d}" for s in args.seeds) + " mean")
    for name in ABLATIONS:
        vals = table[name]
        print(f"{name:8s} " + " ".join(f"{v:9.3f}" for v in vals) + f" {np.mean(vals):.3f}")
    print(f"hazy input (no enhancement): {baseline:.3f} dB")
    print(f"{time.perf_counter() - start:.0f}s")


if __name__ == "__main__":
    main()
