"""Overfit the tiny network to one synthetic pair and report loss and PSNR."""
import argparse
import time
from dataclasses import replace

from fanet.experiments import OVERFIT_CONFIG, overfit_regression


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--scene-seed", type=int, default=0)
    ap.add_argument("--steps", type=int, default=OVERFIT_CONFIG.steps)
    ap.add_argument("--lr", type=float, default=OVERFIT_CONFIG.lr_initial)
    args = ap.parse_args()
    cfg = replace(OVERFIT_CONFIG, steps=args.steps, lr_initial=args.lr)
    start = time.perf_counter()
    res = overfit_regression(cfg, scene_seed=args.scene_seed)
    print(f"total loss {res.initial_loss:.4f} -> {res.final_loss:.4f} (ratio {res.loss_ratio:.3f})")
    print(f"PSNR hazy {res.psnr_hazy:.2f} dB, enhanced {res.psnr_enhanced:.2f} dB (gain {res.psnr_gain:+.2f})")
    print(f"{time.perf_counter() - start:.1f}s")


if __name__ == "__main__":
    main()
