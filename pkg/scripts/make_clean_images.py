"""Write procedural clean scenes as PNGs, a stand-in for a real clean-image corpus.

    python scripts/make_clean_images.py --out data/clean_src --count 20 --size 96
"""
import argparse
from pathlib import Path

from fanet.degradation import procedural_scene
from fanet.images import save_image


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", required=True)
    ap.add_argument("--count", type=int, default=20)
    ap.add_argument("--size", type=int, default=96)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i in range(args.count):
        save_image(procedural_scene(args.size, args.size, args.seed + i), out / f"scene{i:04d}.png")
    print(f"wrote {args.count} scenes to {out}")


if __name__ == "__main__":
    main()
