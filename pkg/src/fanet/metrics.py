"""Full-reference (MAE, PSNR, SSIM) and no-reference (UIQM) image metrics.

All functions take ``(H, W, 3)`` float arrays in [0, 1].
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .losses import DEFAULT_SSIM, SsimConstants, ssim_index
from .tensor import Tensor

PSNR_CAP = 99.0
COLUMNS = ("MAE", "PSNR", "SSIM", "UIQM", "UICM", "UISM", "UIConM")

LUMA = (0.299, 0.587, 0.114)
PLIP_GAMMA = 1026.0


@dataclass(frozen=True)
class UiqmCoefficients:
    c1: float = 0.0282
    c2: float = 0.2953
    c3: float = 3.5753


def _check_pair(pred: np.ndarray, gt: np.ndarray):
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {gt.shape}")


def _to_nchw(img: np.ndarray) -> Tensor:
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[..., None]
    return Tensor(arr.transpose(2, 0, 1)[None], dtype=np.float64)


def mae(pred: np.ndarray, gt: np.ndarray) -> float:
    _check_pair(pred, gt)
    return float(np.mean(np.abs(np.asarray(pred, np.float64) - np.asarray(gt, np.float64))))


def psnr(pred: np.ndarray, gt: np.ndarray, peak: float = 1.0) -> float:
    """PSNR in dB; identical inputs report :data:`PSNR_CAP`."""
    _check_pair(pred, gt)
    mse = float(np.mean((np.asarray(pred, np.float64) - np.asarray(gt, np.float64)) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return 10.0 * math.log10(peak**2 / mse)


def ssim(a: np.ndarray, b: np.ndarray, consts: SsimConstants = DEFAULT_SSIM) -> float:
    """Gaussian-window SSIM averaged over valid windows and channels."""
    _check_pair(a, b)
    return ssim_index(_to_nchw(a), _to_nchw(b), consts).item()


# --------------------------------------------------------------------------
# UIQM components


def _check_rgb(image: np.ndarray) -> np.ndarray:
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"expected an (H, W, 3) image, got shape {arr.shape}")
    return arr * 255.0


def trimmed_mean(values: np.ndarray, alpha_l: float = 0.1, alpha_r: float = 0.1) -> float:
    """Asymmetric alpha-trimmed mean: drop ceil(aL*K) lowest and floor(aR*K) highest."""
    x = np.sort(np.ravel(values))
    k = x.size
    lo = math.ceil(alpha_l * k)
    hi = math.floor(alpha_r * k)
    return float(x[lo : k - hi].mean())


def uicm(image: np.ndarray, alpha: float = 0.1) -> float:
    """Colorfulness from the RG and YB opponent channels."""
    rgb = _check_rgb(image)
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    rg = r - g
    yb = (r + g) / 2 - b
    mu_rg = trimmed_mean(rg, alpha, alpha)
    mu_yb = trimmed_mean(yb, alpha, alpha)
    var_rg = float(np.mean((rg - mu_rg) ** 2))
    var_yb = float(np.mean((yb - mu_yb) ** 2))
    return -0.0268 * math.sqrt(mu_rg**2 + mu_yb**2) + 0.1586 * math.sqrt(var_rg + var_yb)


def sobel_magnitude(channel: np.ndarray) -> np.ndarray:
    p = np.pad(channel, 1, mode="symmetric")
    gx = (p[:-2, 2:] + 2 * p[1:-1, 2:] + p[2:, 2:]) - (p[:-2, :-2] + 2 * p[1:-1, :-2] + p[2:, :-2])
    gy = (p[2:, :-2] + 2 * p[2:, 1:-1] + p[2:, 2:]) - (p[:-2, :-2] + 2 * p[:-2, 1:-1] + p[:-2, 2:])
    return np.hypot(gx, gy)


def _blocks(plane: np.ndarray, size: int) -> np.ndarray:
    """``(k1*k2, size*size)`` view of non-overlapping blocks; the remainder is cropped."""
    h, w = plane.shape
    k1, k2 = h // size, w // size
    if k1 == 0 or k2 == 0:
        raise ValueError(f"image {h}x{w} smaller than the {size}x{size} block")
    cropped = plane[: k1 * size, : k2 * size]
    return cropped.reshape(k1, size, k2, size).transpose(0, 2, 1, 3).reshape(k1 * k2, size * size)


def eme(plane: np.ndarray, block: int = 8) -> float:
    """Block contrast measure ``2/(k1 k2) * sum log(max/min)``; blocks with a zero extreme add 0."""
    blocks = _blocks(plane, block)
    hi = blocks.max(axis=1)
    lo = blocks.min(axis=1)
    ok = (lo > 0) & (hi > 0)
    total = np.sum(np.log(hi[ok] / lo[ok]))
    return float(2.0 / blocks.shape[0] * total)


def uism(image: np.ndarray, block: int = 8) -> float:
    """Sharpness: luminance-weighted EME of each channel's Sobel-weighted edge map."""
    rgb = _check_rgb(image)
    out = 0.0
    for c, weight in enumerate(LUMA):
        ch = rgb[..., c]
        out += weight * eme(ch * sobel_magnitude(ch), block)
    return out


def plip_add(a, b, gamma: float = PLIP_GAMMA):
    return a + b - a * b / gamma


def plip_sub(a, b, k: float = PLIP_GAMMA):
    return k * (a - b) / (k - b)


def uiconm(image: np.ndarray, block: int = 8) -> float:
    """Contrast: logAMEE over intensity blocks with PLIP difference/sum."""
    rgb = _check_rgb(image)
    lum = LUMA[0] * rgb[..., 0] + LUMA[1] * rgb[..., 1] + LUMA[2] * rgb[..., 2]
    blocks = _blocks(lum, block)
    hi = blocks.max(axis=1)
    lo = blocks.min(axis=1)
    top = plip_sub(hi, lo)
    bottom = plip_add(hi, lo)
    ok = (top > 0) & (bottom > 0)
    m = top[ok] / bottom[ok]
    return float(-np.sum(m * np.log(m)) / blocks.shape[0])


def combine_uiqm(uicm_value: float, uism_value: float, uiconm_value: float,
                 coeffs: UiqmCoefficients = UiqmCoefficients()) -> float:
    return coeffs.c1 * uicm_value + coeffs.c2 * uism_value + coeffs.c3 * uiconm_value


def uiqm_components(image: np.ndarray) -> dict:
    parts = {"UICM": uicm(image), "UISM": uism(image), "UIConM": uiconm(image)}
    parts["UIQM"] = combine_uiqm(parts["UICM"], parts["UISM"], parts["UIConM"])
    return parts


def uiqm(image: np.ndarray, coeffs: UiqmCoefficients = UiqmCoefficients()) -> float:
    return combine_uiqm(uicm(image), uism(image), uiconm(image), coeffs)


# --------------------------------------------------------------------------
# reports


def evaluate_pair(pred: np.ndarray, gt: np.ndarray) -> dict:
    """One report row. UIQM and its parts are computed on ``pred`` alone."""
    _check_pair(pred, gt)
    row = {"MAE": mae(pred, gt), "PSNR": psnr(pred, gt), "SSIM": ssim(pred, gt)}
    row.update(uiqm_components(pred))
    return {k: row[k] for k in COLUMNS}


@dataclass
class MetricsReport:
    names: list = field(default_factory=list)
    rows: list = field(default_factory=list)

    def add(self, name: str, row: dict):
        self.names.append(name)
        self.rows.append(row)

    @property
    def means(self) -> dict:
        if not self.rows:
            return {k: float("nan") for k in COLUMNS}
        return {k: sum(r[k] for r in self.rows) / len(self.rows) for k in COLUMNS}

    def write_table(self, path, precision: int = 6):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(("image",) + COLUMNS)
            for name, row in zip(self.names, self.rows):
                writer.writerow([name] + [f"{row[k]:.{precision}f}" for k in COLUMNS])
            writer.writerow(["mean"] + [f"{v:.{precision}f}" for v in self.means.values()])

    def write_summary(self, path):
        Path(path).write_text(json.dumps({"count": len(self.rows), "means": self.means}, indent=2) + "\n")

    @classmethod
    def read_table(cls, path) -> tuple:
        """Parse a written table back into ``(report, means_row)``."""
        report = cls()
        means = None
        with open(path, newline="") as fh:
            for rec in csv.DictReader(fh):
                vals = {k: float(rec[k]) for k in COLUMNS}
                if rec["image"] == "mean":
                    means = vals
                else:
                    report.add(rec["image"], vals)
        return report, means
