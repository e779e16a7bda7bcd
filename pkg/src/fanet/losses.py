"""Differentiable training losses: L1, SSIM and their sum."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .tensor import ShapeError, Tensor, absolute, add, div, filter_valid, mean, mul, scale, shift, sub


@dataclass(frozen=True)
class SsimConstants:
    window_size: int = 11
    sigma: float = 1.5
    dynamic_range: float = 1.0
    k1: float = 0.01
    k2: float = 0.03

    @property
    def c1(self) -> float:
        return (self.k1 * self.dynamic_range) ** 2

    @property
    def c2(self) -> float:
        return (self.k2 * self.dynamic_range) ** 2

    @cached_property
    def window(self) -> np.ndarray:
        r = np.arange(self.window_size, dtype=np.float64) - (self.window_size - 1) / 2
        g = np.exp(-(r**2) / (2 * self.sigma**2))
        g /= g.sum()
        return np.outer(g, g)


DEFAULT_SSIM = SsimConstants()


def _same_shape(a: Tensor, b: Tensor, what: str):
    if a.shape != b.shape:
        raise ShapeError(f"{what}: shape mismatch {a.shape} vs {b.shape}")


def l1_loss(pred: Tensor, gt: Tensor) -> Tensor:
    _same_shape(pred, gt, "l1_loss")
    return mean(absolute(sub(gt, pred)))


def ssim_map(a: Tensor, b: Tensor, consts: SsimConstants = DEFAULT_SSIM) -> Tensor:
    """Per-window SSIM, ``(N, C, H - w + 1, W - w + 1)``."""
    _same_shape(a, b, "ssim")
    win = consts.window
    mu_a = filter_valid(a, win)
    mu_b = filter_valid(b, win)
    mu_aa = mul(mu_a, mu_a)
    mu_bb = mul(mu_b, mu_b)
    mu_ab = mul(mu_a, mu_b)
    var_a = sub(filter_valid(mul(a, a), win), mu_aa)
    var_b = sub(filter_valid(mul(b, b), win), mu_bb)
    cov = sub(filter_valid(mul(a, b), win), mu_ab)

    num = mul(shift(scale(mu_ab, 2.0), consts.c1), shift(scale(cov, 2.0), consts.c2))
    den = mul(shift(add(mu_aa, mu_bb), consts.c1), shift(add(var_a, var_b), consts.c2))
    return div(num, den)


def ssim_index(a: Tensor, b: Tensor, consts: SsimConstants = DEFAULT_SSIM) -> Tensor:
    return mean(ssim_map(a, b, consts))


def ssim_loss(pred: Tensor, gt: Tensor, consts: SsimConstants = DEFAULT_SSIM) -> Tensor:
    return shift(scale(ssim_index(pred, gt, consts), -1.0), 1.0)


def loss_terms(pred: Tensor, gt: Tensor, consts: SsimConstants = DEFAULT_SSIM) -> tuple:
    """``(l1, ssim_loss, total)`` as tensors sharing one tape."""
    l1 = l1_loss(pred, gt)
    ls = ssim_loss(pred, gt, consts)
    return l1, ls, add(l1, ls)


def total_loss(pred: Tensor, gt: Tensor, consts: SsimConstants = DEFAULT_SSIM) -> Tensor:
    return loss_terms(pred, gt, consts)[2]
