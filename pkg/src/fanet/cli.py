"""Command line: ``fanet synth | train | enhance | eval``.

Errors print one line ``ERROR:<kind>: message`` on stderr. Exit codes:
0 success, 1 usage, 2 data error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import contextlib
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import images
from .degradation import SynthSpec, make_dataset
from .metrics import COLUMNS, MetricsReport, evaluate_pair
from .model import NetConfig, fanet_forward
from .tensor import Tensor
from .train import CheckpointError, NumericError, TrainConfig, load_checkpoint, train_loop

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
TILE_OVERLAP = 16


class CliError(Exception):
    def __init__(self, kind: str, message: str, code: int = EXIT_DATA):
        super().__init__(message)
        self.kind = kind
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("usage", message, EXIT_USAGE)


# --------------------------------------------------------------------------
# tiled inference


def _tile_starts(size: int, tile: int, overlap: int) -> list:
    if tile >= size:
        return [0]
    stride = max(1, tile - overlap)
    starts = list(range(0, size - tile, stride))
    starts.append(size - tile)
    return starts


def _ramp(length: int, start: int, size: int, overlap: int) -> np.ndarray:
    """1-D blend weight: linear rise over ``overlap`` pixels on interior edges only."""
    w = np.ones(length)
    ramp = (np.arange(overlap) + 1) / (overlap + 1)
    n = min(overlap, length)
    if start > 0:
        w[:n] = np.minimum(w[:n], ramp[:n])
    if start + length < size:
        w[length - n :] = np.minimum(w[length - n :], ramp[:n][::-1])
    return w


def enhance_image(image: np.ndarray, params: dict, net: NetConfig, tile: int | None = None,
                  overlap: int = TILE_OVERLAP) -> np.ndarray:
    """Network output for an ``(H, W, 3)`` image, optionally tile by tile with linear blending."""

    def run(patch):
        x = Tensor(np.asarray(patch, dtype=np.float32).transpose(2, 0, 1)[None])
        return fanet_forward(x, params, net).data[0].transpose(1, 2, 0).astype(np.float64)

    if not tile:
        return run(image)
    h, w = image.shape[:2]
    acc = np.zeros((h, w, 3))
    weight = np.zeros((h, w, 1))
    for top in _tile_starts(h, tile, overlap):
        for left in _tile_starts(w, tile, overlap):
            th, tw = min(tile, h), min(tile, w)
            out = run(image[top : top + th, left : left + tw])
            wy = _ramp(th, top, h, overlap)
            wx = _ramp(tw, left, w, overlap)
            wt = (wy[:, None] * wx[None, :])[..., None]
            acc[top : top + th, left : left + tw] += out * wt
            weight[top : top + th, left : left + tw] += wt
    return acc / weight


# --------------------------------------------------------------------------
# commands


def cmd_synth(args) -> int:
    spec = SynthSpec.from_file(args.spec) if args.spec else SynthSpec()
    spec.seed = args.seed
    spec.count = args.count
    records = make_dataset(args.clean, args.out, spec, echo=print)
    print(f"wrote {len(records)} pairs to {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = TrainConfig.from_file(args.config) if args.config else TrainConfig()
    overrides = {"seed": args.seed}
    if args.steps is not None:
        overrides["steps"] = args.steps
    net = cfg.net
    if args.ablation:
        net = NetConfig.ablation(args.ablation, groups=net.groups, blocks=net.blocks,
                                 filters=net.filters, reduction=net.reduction)
    cfg = TrainConfig(**{**{k: getattr(cfg, k) for k in cfg.__dataclass_fields__}, **overrides, "net": net})
    pairs = images.load_pairs(args.data)
    out = Path(args.out)
    log_path = Path(args.log) if args.log else out.with_suffix(".log.csv")
    print(f"training G={net.groups} B={net.blocks} F={net.filters} "
          f"ca={net.use_channel_attention} pa={net.use_pixel_attention} res={net.use_local_residual} "
          f"on {len(pairs)} pairs for {cfg.steps} steps")
    echo = print if args.verbose else None
    train_loop(pairs, cfg, checkpoint_path=out, log_path=log_path, echo=echo)
    print(f"checkpoint {out}, loss log {log_path}")
    return EXIT_OK


def _inputs(path: Path) -> list:
    if path.is_dir():
        found = images.list_images(path)
        if not found:
            raise CliError("dataset", f"{path}: no PNG or PPM images found")
        return found
    if not path.exists():
        raise CliError("dataset", f"{path}: no such file or directory")
    return [path]


def cmd_enhance(args) -> int:
    params, net = load_checkpoint(args.ckpt)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for src in _inputs(Path(args.in_path)):
        image = images.load_image(src)
        result = enhance_image(image, params, net, tile=args.tile)
        if not np.all(np.isfinite(result)):
            raise NumericError(f"{src.name}: network produced non-finite values")
        images.save_image(np.clip(result, 0.0, 1.0), out_dir / src.name)
        print(f"{src.name}: {image.shape[1]}x{image.shape[0]} -> {out_dir / src.name}")
    return EXIT_OK


def evaluate_dirs(pred_dir, ref_dir) -> MetricsReport:
    pred = {p.name: p for p in images.list_images(pred_dir)}
    ref = {p.name: p for p in images.list_images(ref_dir)}
    only_pred = sorted(set(pred) - set(ref))
    only_ref = sorted(set(ref) - set(pred))
    if only_pred or only_ref:
        parts = []
        if only_pred:
            parts.append("missing in ref: " + ", ".join(only_pred))
        if only_ref:
            parts.append("missing in pred: " + ", ".join(only_ref))
        raise CliError("basename_mismatch", "; ".join(parts))
    if not pred:
        raise CliError("dataset", f"{pred_dir}: no PNG or PPM images found")
    report = MetricsReport()
    for name in sorted(pred):
        a, b = images.load_image(pred[name]), images.load_image(ref[name])
        if a.shape != b.shape:
            raise CliError("dataset", f"{name}: prediction {a.shape} and reference {b.shape} differ in size")
        report.add(name, evaluate_pair(a, b))
    return report


def cmd_eval(args) -> int:
    report = evaluate_dirs(args.pred, args.ref)
    report_path = Path(args.report)
    report.write_table(report_path)
    report.write_summary(report_path.with_suffix(".json"))
    means = report.means
    print(f"{len(report.rows)} images")
    print("mean " + " ".join(f"{k}={means[k]:.6f}" for k in COLUMNS))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fanet", description="Feature-attention underwater image enhancement")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="synthesize hazy/clean pairs from clean images")
    p.add_argument("--clean", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--spec", help="JSON file overriding SynthSpec fields")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train on a paired dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=int)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--config", help="key = value file of TrainConfig/NetConfig fields")
    p.add_argument("--ablation", choices=("ca", "ca+pa", "full"))
    p.add_argument("--log", help="loss log path (default: <out>.log.csv)")
    p.add_argument("--verbose", action="store_true", help="print every step")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("enhance", help="enhance images with a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--tile", type=int)
    p.set_defaults(func=cmd_enhance)

    p = sub.add_parser("eval", help="MAE/PSNR/SSIM/UIQM report for prediction vs reference")
    p.add_argument("--pred", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--report", required=True)
    p.set_defaults(func=cmd_eval)
    return parser


def _thread_limit():
    raw = os.environ.get("FANET_THREADS", "").strip()
    n = int(raw) if raw.isdigit() else 0
    if n <= 0:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def _fail(kind: str, message, code: int) -> int:
    text = " ".join(str(message).split())
    print(f"ERROR:{kind}: {text}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
        if getattr(args, "tile", None) is not None and args.tile < 1:
            raise CliError("usage", "--tile must be positive", EXIT_USAGE)
        with _thread_limit():
            return args.func(args)
    except CliError as exc:
        return _fail(exc.kind, exc, exc.code)
    except (images.ImageError, images.DatasetError, CheckpointError) as exc:
        return _fail(exc.kind, exc, EXIT_DATA)
    except NumericError as exc:
        return _fail(exc.kind, exc, EXIT_NUMERIC)
    except ValueError as exc:
        return _fail("config", exc, EXIT_DATA)
    except OSError as exc:
        return _fail("io", exc, EXIT_DATA)


if __name__ == "__main__":
    sys.exit(main())
