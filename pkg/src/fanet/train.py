"""Adam training loop, learning-rate schedule, cropping and checkpoints."""
from __future__ import annotations

import csv
import logging
import math
import struct
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .losses import loss_terms
from .model import NetConfig, fanet_forward, init_params, param_count, param_specs
from .tensor import Tape, Tensor, backward

log = logging.getLogger(__name__)

LOG_COLUMNS = ("step", "epoch", "lr", "l1", "ssim_loss", "total")


class NumericError(FloatingPointError):
    kind = "numeric"


@dataclass(frozen=True)
class TrainConfig:
    lr_initial: float = 0.0005
    lr_floor: float = 0.00002
    decay_interval_epochs: int = 20
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    crop: int = 256
    steps: int = 500
    batch_size: int = 4
    seed: int = 0
    checkpoint_every: int = 100
    net: NetConfig = field(default_factory=NetConfig)

    def __post_init__(self):
        if self.lr_floor > self.lr_initial:
            raise ValueError(f"lr_floor {self.lr_floor} exceeds lr_initial {self.lr_initial}")
        if self.batch_size < 1 or self.crop < 1 or self.steps < 0:
            raise ValueError("batch_size and crop must be >= 1 and steps >= 0")

    @classmethod
    def from_mapping(cls, values: dict) -> "TrainConfig":
        """Build from flat ``key -> str`` pairs naming TrainConfig or NetConfig fields."""
        train_types = {f.name: f.type for f in fields(cls) if f.name != "net"}
        net_types = {f.name: f.type for f in fields(NetConfig)}
        train_kw, net_kw = {}, {}
        for key, raw in values.items():
            if key in train_types:
                train_kw[key] = _parse_value(raw, train_types[key])
            elif key in net_types:
                net_kw[key] = _parse_value(raw, net_types[key])
            else:
                raise ValueError(f"unknown config key {key!r}")
        return cls(net=NetConfig(**net_kw), **train_kw)

    @classmethod
    def from_file(cls, path) -> "TrainConfig":
        return cls.from_mapping(read_key_values(Path(path).read_text()))


def _parse_value(raw, kind):
    if not isinstance(raw, str):
        return raw
    kind = kind if isinstance(kind, str) else kind.__name__
    if kind == "bool":
        low = raw.strip().lower()
        if low not in ("true", "false", "1", "0", "yes", "no"):
            raise ValueError(f"not a boolean: {raw!r}")
        return low in ("true", "1", "yes")
    if kind == "int":
        return int(raw)
    return float(raw)


def read_key_values(text: str) -> dict:
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key = value, got {line!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


# --------------------------------------------------------------------------
# optimizer


@dataclass
class AdamState:
    m: dict
    v: dict
    t: int = 0

    @classmethod
    def zeros_like(cls, params: dict) -> "AdamState":
        return cls({k: np.zeros_like(p) for k, p in params.items()},
                   {k: np.zeros_like(p) for k, p in params.items()})


def adam_step(params: dict, grads: dict, state: AdamState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> tuple:
    """One bias-corrected Adam update. Returns new ``(params, state)``."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for parameter {name!r}")
    t = state.t + 1
    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - beta2**t
    new_params, m_out, v_out = {}, {}, {}
    for name, p in params.items():
        g = grads[name]
        m = beta1 * state.m[name] + (1 - beta1) * g
        v = beta2 * state.v[name] + (1 - beta2) * g * g
        step = lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
        new_params[name] = (p - step).astype(p.dtype)
        m_out[name] = m.astype(p.dtype)
        v_out[name] = v.astype(p.dtype)
    return new_params, AdamState(m_out, v_out, t)


def lr_schedule(epoch: int, cfg: TrainConfig) -> float:
    """Initial rate until ``decay_interval_epochs``, the floor afterwards."""
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    return cfg.lr_initial if epoch < cfg.decay_interval_epochs else cfg.lr_floor


# --------------------------------------------------------------------------
# data


def sample_crops(pair: tuple, crop: int, rng: np.random.Generator) -> tuple:
    """Cut the same random ``crop x crop`` window from both images of a pair."""
    hazy, clean = pair
    if hazy.shape != clean.shape:
        raise ValueError(f"pair shapes differ: {hazy.shape} vs {clean.shape}")
    h, w = hazy.shape[:2]
    if crop > min(h, w):
        log.warning("crop %d exceeds image %dx%d; using the full image", crop, h, w)
        return hazy, clean
    top = int(rng.integers(0, h - crop + 1))
    left = int(rng.integers(0, w - crop + 1))
    win = (slice(top, top + crop), slice(left, left + crop))
    return hazy[win], clean[win]


def _batch(images: list) -> Tensor:
    return Tensor(np.stack([np.asarray(im, dtype=np.float32).transpose(2, 0, 1) for im in images]))


# --------------------------------------------------------------------------
# training


@dataclass
class TrainResult:
    params: dict
    log: list
    config: TrainConfig


def train_step(params: dict, hazy: Tensor, clean: Tensor, net: NetConfig) -> tuple:
    """Forward and backward on one batch. Returns ``(grads, (l1, ls, total))``."""
    tape = Tape()
    watched = {k: tape.watch(v) for k, v in params.items()}
    pred = fanet_forward(hazy, watched, net)
    l1, ls, lt = loss_terms(pred, clean)
    grads = backward(tape, lt)
    return {k: grads[t.node] for k, t in watched.items()}, (l1.item(), ls.item(), lt.item())


def train_loop(pairs: list, cfg: TrainConfig, checkpoint_path=None, log_path=None,
               params: dict | None = None, echo=None) -> TrainResult:
    """Train on ``(hazy, clean)`` array pairs.

    The checkpoint is written every ``checkpoint_every`` steps and at the
    end. A non-finite loss raises :class:`NumericError` after saving the
    last good parameters.
    """
    if not pairs:
        raise ValueError("training needs at least one image pair")
    rng = np.random.default_rng(cfg.seed)
    if params is None:
        params = init_params(cfg.net, cfg.seed)
    smallest = min(min(h.shape[:2]) for h, _ in pairs)
    crop = cfg.crop
    if crop > smallest:
        log.warning("crop %d exceeds smallest training image side %d; using %d", crop, smallest, smallest)
        crop = smallest
    steps_per_epoch = max(1, math.ceil(len(pairs) / cfg.batch_size))
    state = AdamState.zeros_like(params)
    rows = []

    def save(p):
        if checkpoint_path is not None:
            save_checkpoint(p, cfg.net, checkpoint_path, seed=cfg.seed)

    for step in range(cfg.steps):
        epoch = step // steps_per_epoch
        lr = lr_schedule(epoch, cfg)
        crops = [sample_crops(pairs[int(rng.integers(len(pairs)))], crop, rng) for _ in range(cfg.batch_size)]
        hazy = _batch([c[0] for c in crops])
        clean = _batch([c[1] for c in crops])
        grads, (l1, ls, lt) = train_step(params, hazy, clean, cfg.net)
        if not math.isfinite(lt):
            save(params)
            raise NumericError(f"non-finite loss at step {step + 1}")
        params, state = adam_step(params, grads, state, lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
        row = {"step": step + 1, "epoch": epoch, "lr": lr, "l1": l1, "ssim_loss": ls, "total": lt}
        rows.append(row)
        if echo:
            echo(f"step {step + 1:5d} epoch {epoch:3d} lr {lr:.2e} l1 {l1:.5f} ssim {ls:.5f} total {lt:.5f}")
        if cfg.checkpoint_every and (step + 1) % cfg.checkpoint_every == 0:
            save(params)

    save(params)
    if log_path is not None:
        write_loss_log(rows, log_path)
    return TrainResult(params, rows, cfg)


def write_loss_log(rows: list, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(LOG_COLUMNS)
        for r in rows:
            writer.writerow([r["step"], r["epoch"], repr(r["lr"]), f"{r['l1']:.8f}", f"{r['ssim_loss']:.8f}", f"{r['total']:.8f}"])


def enhance(image: np.ndarray, params: dict, net: NetConfig) -> np.ndarray:
    out = fanet_forward(_batch([image]), params, net)
    return out.data[0].transpose(1, 2, 0)


# --------------------------------------------------------------------------
# checkpoints

MAGIC = b"FANETCKP"
VERSION = 1


class CheckpointError(Exception):
    kind = "checkpoint"


class CheckpointMagicError(CheckpointError):
    kind = "checkpoint_magic"


class CheckpointVersionError(CheckpointError):
    kind = "checkpoint_version"


class CheckpointTruncatedError(CheckpointError):
    kind = "checkpoint_truncated"


class CheckpointCountError(CheckpointError):
    kind = "checkpoint_count"


def checkpoint_bytes(params: dict, net: NetConfig, seed: int = 0) -> bytes:
    specs = param_specs(net)
    if [n for n, _ in specs] != list(params):
        raise ValueError("parameter names do not match the config's declaration order")
    header = {k: v for k, v in net.to_dict().items()}
    header["param_count"] = param_count(net)
    header["seed"] = seed
    text = "".join(f"{k}={str(v).lower() if isinstance(v, bool) else v}\n" for k, v in header.items()).encode()
    body = b"".join(np.asarray(params[n], dtype="<f4").reshape(-1).tobytes() for n, _ in specs)
    return MAGIC + bytes([VERSION]) + struct.pack("<I", len(text)) + text + body


def save_checkpoint(params: dict, net: NetConfig, path, seed: int = 0):
    Path(path).write_bytes(checkpoint_bytes(params, net, seed))


def parse_checkpoint(raw: bytes) -> tuple:
    if raw[: len(MAGIC)] != MAGIC:
        if len(raw) < len(MAGIC) and MAGIC.startswith(raw):
            raise CheckpointTruncatedError("file ends inside the magic bytes")
        raise CheckpointMagicError("not a checkpoint (bad magic bytes)")
    pos = len(MAGIC)
    if len(raw) < pos + 5:
        raise CheckpointTruncatedError("file ends inside the version/header length")
    if raw[pos] != VERSION:
        raise CheckpointVersionError(f"unsupported checkpoint version {raw[pos]}")
    (hlen,) = struct.unpack("<I", raw[pos + 1 : pos + 5])
    pos += 5
    if len(raw) < pos + hlen:
        raise CheckpointTruncatedError("file ends inside the header")
    net_keys = {f.name for f in fields(NetConfig)}
    try:
        header = read_key_values(raw[pos : pos + hlen].decode("utf-8"))
        net = TrainConfig.from_mapping({k: v for k, v in header.items() if k in net_keys}).net
        declared = int(header["param_count"])
    except (KeyError, ValueError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"malformed checkpoint header: {exc}") from exc
    pos += hlen
    expected = param_count(net)
    if declared != expected:
        raise CheckpointCountError(f"header declares {declared} parameters, config implies {expected}")
    need = expected * 4
    body = raw[pos:]
    if len(body) < need:
        raise CheckpointTruncatedError(f"parameter data has {len(body)} bytes, expected {need}")
    if len(body) > need:
        raise CheckpointCountError(f"{len(body) - need} trailing bytes after parameter data")

    values = np.frombuffer(body, dtype="<f4")
    params, offset = {}, 0
    for name, shape in param_specs(net):
        size = int(np.prod(shape))
        params[name] = values[offset : offset + size].astype(np.float32).reshape(shape)
        offset += size
    return params, net, int(header.get("seed", 0))


def load_checkpoint(path) -> tuple:
    """Read ``(params, net_config)``; raises a :class:`CheckpointError` subclass."""
    params, net, _ = parse_checkpoint(Path(path).read_bytes())
    return params, net


def with_net(cfg: TrainConfig, **net_changes) -> TrainConfig:
    return replace(cfg, net=replace(cfg.net, **net_changes))
