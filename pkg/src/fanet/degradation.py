"""Synthetic underwater degradation for generating paired training data.

Forward model per pixel and channel::

    I = J * exp(-beta_d * z) + B_inf * (1 - exp(-beta_b * z))

with per-channel constant coefficients and a smooth range map ``z``.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .images import DatasetError, ImageError, list_images, load_image, save_image

log = logging.getLogger(__name__)


@dataclass
class WaterParams:
    beta_d: np.ndarray
    beta_b: np.ndarray
    b_inf: np.ndarray
    depth: np.ndarray

    def __post_init__(self):
        self.beta_d = np.asarray(self.beta_d, dtype=np.float64).reshape(3)
        self.beta_b = np.asarray(self.beta_b, dtype=np.float64).reshape(3)
        self.b_inf = np.asarray(self.b_inf, dtype=np.float64).reshape(3)
        self.depth = np.asarray(self.depth, dtype=np.float64)
        if np.any(self.beta_d < 0) or np.any(self.beta_b < 0):
            raise ValueError("attenuation coefficients must be non-negative")
        if np.any(self.b_inf < 0) or np.any(self.b_inf > 1):
            raise ValueError("veiling light must lie in [0, 1]")
        if self.depth.ndim != 2 or np.any(self.depth < 0):
            raise ValueError("depth must be a non-negative (H, W) field")


def synthesize_hazy(clean: np.ndarray, params: WaterParams) -> np.ndarray:
    clean = np.asarray(clean, dtype=np.float64)
    if clean.ndim != 3 or clean.shape[2] != 3 or clean.shape[:2] != params.depth.shape:
        raise ValueError(f"clean image {clean.shape} does not align with depth {params.depth.shape}")
    z = params.depth[..., None]
    direct = clean * np.exp(-params.beta_d * z)
    backscatter = params.b_inf * (1.0 - np.exp(-params.beta_b * z))
    return np.clip(direct + backscatter, 0.0, 1.0)


def _bilinear(grid: np.ndarray, h: int, w: int) -> np.ndarray:
    gh, gw = grid.shape
    ys = np.linspace(0, gh - 1, h)
    xs = np.linspace(0, gw - 1, w)
    y0 = np.minimum(np.floor(ys).astype(int), gh - 2)
    x0 = np.minimum(np.floor(xs).astype(int), gw - 2)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    g00 = grid[np.ix_(y0, x0)]
    g01 = grid[np.ix_(y0, x0 + 1)]
    g10 = grid[np.ix_(y0 + 1, x0)]
    g11 = grid[np.ix_(y0 + 1, x0 + 1)]
    return (g00 * (1 - fx) + g01 * fx) * (1 - fy) + (g10 * (1 - fx) + g11 * fx) * fy


def gen_depth(shape, roughness: float = 0.3, seed: int = 0, z_min: float = 0.5, z_max: float = 10.0,
              octaves: int = 4) -> np.ndarray:
    """Value-noise range map rescaled to ``[z_min, z_max]``.

    ``roughness`` is the amplitude ratio between successive octaves, so 0
    leaves only the coarsest 3x3 lattice.
    """
    if not 0 <= z_min <= z_max:
        raise ValueError(f"need 0 <= z_min <= z_max, got {z_min}, {z_max}")
    h, w = shape
    rng = np.random.default_rng(seed)
    field = np.zeros((h, w))
    amp = 1.0
    for o in range(octaves):
        cells = 2 ** (o + 1) + 1
        field += amp * _bilinear(rng.random((cells, cells)), h, w)
        amp *= roughness
    lo, hi = field.min(), field.max()
    unit = (field - lo) / (hi - lo) if hi > lo else np.zeros_like(field)
    return z_min + unit * (z_max - z_min)


@dataclass
class SynthSpec:
    beta_d_range: tuple = (0.05, 1.0)
    beta_b_range: tuple = (0.05, 1.0)
    b_inf_range: tuple = (0.05, 0.6)
    z_range: tuple = (0.5, 10.0)
    roughness: float = 0.3
    seed: int = 0
    count: int | None = None

    def __post_init__(self):
        for name in ("beta_d_range", "beta_b_range", "b_inf_range", "z_range"):
            lo, hi = getattr(self, name)
            if lo > hi or lo < 0:
                raise ValueError(f"{name} must be a non-empty non-negative interval, got {(lo, hi)}")
            setattr(self, name, (float(lo), float(hi)))
        if self.b_inf_range[1] > 1:
            raise ValueError("b_inf_range must lie within [0, 1]")

    @classmethod
    def from_file(cls, path) -> "SynthSpec":
        return cls(**json.loads(Path(path).read_text()))


def sample_water(spec: SynthSpec, seed: int) -> dict:
    """Draw one image's coefficients; the record is JSON-serializable."""
    rng = np.random.default_rng(seed)
    # red attenuates fastest, blue slowest
    beta_d = np.sort(rng.uniform(*spec.beta_d_range, size=3))[::-1]
    beta_b = rng.uniform(*spec.beta_b_range, size=3)
    b_inf = rng.uniform(*spec.b_inf_range, size=3)
    return {
        "seed": int(seed),
        "beta_d": beta_d.tolist(),
        "beta_b": beta_b.tolist(),
        "b_inf": b_inf.tolist(),
        "z_min": spec.z_range[0],
        "z_max": spec.z_range[1],
        "roughness": spec.roughness,
    }


def params_from_record(record: dict, shape) -> WaterParams:
    depth = gen_depth(shape, record["roughness"], record["seed"], record["z_min"], record["z_max"])
    return WaterParams(record["beta_d"], record["beta_b"], record["b_inf"], depth)


def make_dataset(clean_dir, out_dir, spec: SynthSpec, echo=None) -> list:
    """Write ``clean/``, ``hazy/`` and ``params/`` for each clean image.

    With ``spec.count`` set, the first ``count`` inputs are used, cycling
    through the inputs again when there are fewer. Returns the records.
    """
    sources = list_images(clean_dir)
    if not sources:
        raise DatasetError(f"{clean_dir}: no PNG or PPM images found")
    count = len(sources) if spec.count is None else spec.count
    out = Path(out_dir)
    for sub in ("clean", "hazy", "params"):
        (out / sub).mkdir(parents=True, exist_ok=True)

    records = []
    for i in range(count):
        src = sources[i % len(sources)]
        try:
            clean = load_image(src)
        except ImageError as exc:
            log.warning("skipping %s: %s", src, exc)
            continue
        idx = len(records)
        record = sample_water(spec, spec.seed + idx)
        record.update(index=idx, source=src.name, shape=list(clean.shape[:2]))
        hazy = synthesize_hazy(clean, params_from_record(record, clean.shape[:2]))
        name = f"{idx:04d}"
        save_image(clean, out / "clean" / f"{name}.png")
        save_image(hazy, out / "hazy" / f"{name}.png")
        (out / "params" / f"{name}.json").write_text(json.dumps(record, indent=2) + "\n")
        records.append(record)
        if echo:
            echo(f"{name}: {src.name} beta_d={_fmt(record['beta_d'])} b_inf={_fmt(record['b_inf'])}")
    if not records:
        raise DatasetError(f"{clean_dir}: none of the images could be decoded")
    return records


def _fmt(v) -> str:
    return "(" + ", ".join(f"{x:.3f}" for x in v) + ")"


def procedural_scene(height: int, width: int, seed: int = 0) -> np.ndarray:
    """Colourful clean test scene: smooth backdrop plus textured shapes."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:height, 0:width] / max(height, width)
    img = np.empty((height, width, 3))
    for c in range(3):
        a, b, base = rng.uniform(-0.4, 0.4, size=3)
        img[..., c] = 0.5 + 0.3 * base + a * yy + b * xx
    for _ in range(rng.integers(3, 7)):
        cy, cx = rng.uniform(0, 1, size=2) * (height / max(height, width), width / max(height, width))
        ry, rx = rng.uniform(0.05, 0.25, size=2)
        mask = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1
        color = rng.uniform(0.05, 0.95, size=3)
        freq = rng.uniform(10, 40)
        stripes = 0.08 * np.sin(freq * (xx + yy))[..., None]
        img = np.where(mask[..., None], color + stripes, img)
    return np.clip(img, 0.0, 1.0).astype(np.float32)
