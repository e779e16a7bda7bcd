"""Desk-scale experiments: single-pair overfit and the ablation sweep."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .degradation import SynthSpec, params_from_record, procedural_scene, sample_water, synthesize_hazy
from .metrics import psnr
from .model import NetConfig
from .train import TrainConfig, enhance, train_loop

TINY_NET = NetConfig(groups=1, blocks=2, filters=8)
# moderate water: red is still partly recoverable at the far range
MODERATE_WATER = SynthSpec(z_range=(0.5, 4.0))


def synthetic_pairs(count: int, size: int = 64, seed: int = 0, spec: SynthSpec = MODERATE_WATER) -> list:
    """``(hazy, clean)`` float32 pairs from procedural scenes."""
    pairs = []
    for i in range(count):
        clean = procedural_scene(size, size, seed + i)
        record = sample_water(spec, seed + i)
        hazy = synthesize_hazy(clean, params_from_record(record, clean.shape[:2]))
        pairs.append((hazy.astype(np.float32), clean))
    return pairs


def mean_psnr(pairs: list, params: dict, net: NetConfig) -> float:
    return float(np.mean([psnr(np.clip(enhance(h, params, net), 0, 1), c) for h, c in pairs]))


@dataclass
class OverfitResult:
    initial_loss: float
    final_loss: float
    psnr_hazy: float
    psnr_enhanced: float

    @property
    def loss_ratio(self) -> float:
        return self.final_loss / self.initial_loss

    @property
    def psnr_gain(self) -> float:
        return self.psnr_enhanced - self.psnr_hazy


OVERFIT_CONFIG = TrainConfig(net=TINY_NET, crop=64, steps=200, batch_size=1, seed=0,
                             lr_initial=0.002, decay_interval_epochs=10**9)


def overfit_regression(cfg: TrainConfig = OVERFIT_CONFIG, scene_seed: int = 0, size: int = 64) -> OverfitResult:
    pair = synthetic_pairs(1, size, scene_seed)[0]
    result = train_loop([pair], cfg)
    hazy, clean = pair
    return OverfitResult(
        initial_loss=result.log[0]["total"],
        final_loss=result.log[-1]["total"],
        psnr_hazy=psnr(hazy, clean),
        psnr_enhanced=psnr(np.clip(enhance(hazy, result.params, cfg.net), 0, 1), clean),
    )


ABLATIONS = ("ca", "ca+pa", "full")
ABLATION_CONFIG = TrainConfig(net=TINY_NET, crop=32, steps=500, batch_size=4, seed=0,
                              lr_initial=0.002, decay_interval_epochs=10**9)


def ablation_study(seeds=(0, 1, 2), pair_count: int = 20, size: int = 64,
                   base: TrainConfig = ABLATION_CONFIG, data_seed: int = 100, echo=None) -> dict:
    """Mean PSNR over the pair set for each ablation, per training seed."""
    pairs = synthetic_pairs(pair_count, size, data_seed)
    table = {name: [] for name in ABLATIONS}
    for seed in seeds:
        for name in ABLATIONS:
            net = NetConfig.ablation(name, groups=base.net.groups, blocks=base.net.blocks,
                                     filters=base.net.filters, reduction=base.net.reduction)
            cfg = replace(base, net=net, seed=seed)
            result = train_loop(pairs, cfg)
            score = mean_psnr(pairs, result.params, net)
            table[name].append(score)
            if echo:
                echo(f"seed {seed} {name:6s} mean PSNR {score:.3f} dB")
    return table
