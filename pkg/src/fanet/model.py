"""Feature-attention enhancement network built on :mod:`fanet.tensor`.

Parameters live in a plain ``dict`` mapping names to float32 arrays. The
insertion order produced by :func:`param_specs` is the fixed serialization
order used by checkpoints.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import Mapping

import numpy as np

from .tensor import ShapeError, Tensor, add, conv2d, global_avg_pool, mul, relu, sigmoid


@dataclass(frozen=True)
class NetConfig:
    groups: int = 3
    blocks: int = 10
    filters: int = 16
    reduction: int = 8
    use_channel_attention: bool = True
    use_pixel_attention: bool = True
    use_local_residual: bool = True

    def __post_init__(self):
        for name in ("groups", "blocks", "filters", "reduction"):
            if getattr(self, name) < 1:
                raise ValueError(f"NetConfig.{name} must be >= 1, got {getattr(self, name)}")

    @property
    def bottleneck(self) -> int:
        return max(1, math.ceil(self.filters / self.reduction))

    @classmethod
    def ablation(cls, name: str, **kwargs) -> "NetConfig":
        """Config for one of the ablation rows: ``ca``, ``ca+pa`` or ``full``."""
        flags = {
            "ca": dict(use_channel_attention=True, use_pixel_attention=False, use_local_residual=False),
            "ca+pa": dict(use_channel_attention=True, use_pixel_attention=True, use_local_residual=False),
            "full": dict(use_channel_attention=True, use_pixel_attention=True, use_local_residual=True),
        }
        if name not in flags:
            raise ValueError(f"unknown ablation {name!r}; expected one of {sorted(flags)}")
        return cls(**{**kwargs, **flags[name]})

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _conv(name: str, cin: int, cout: int, k: int) -> list:
    return [(f"{name}.w", (cout, cin, k, k)), (f"{name}.b", (1, cout, 1, 1))]


def _attention_specs(prefix: str, cfg: NetConfig) -> list:
    f, r = cfg.filters, cfg.bottleneck
    specs = []
    if cfg.use_channel_attention:
        specs += _conv(f"{prefix}.ca1", f, r, 1) + _conv(f"{prefix}.ca2", r, f, 1)
    if cfg.use_pixel_attention:
        specs += _conv(f"{prefix}.pa1", f, r, 3) + _conv(f"{prefix}.pa2", r, 1, 3)
    return specs


def param_specs(cfg: NetConfig) -> list:
    """Ordered ``(name, shape)`` list of every learnable tensor."""
    f = cfg.filters
    specs = _conv("shallow", 3, f, 3)
    for g in range(cfg.groups):
        for b in range(cfg.blocks):
            p = f"g{g}.b{b}"
            specs += _conv(f"{p}.conv1", f, f, 3) + _conv(f"{p}.conv2", f, f, 3)
            specs += _attention_specs(p, cfg)
        specs += _conv(f"g{g}.tail", f, f, 3)
    specs += _attention_specs("post", cfg)
    specs += _conv("recon1", f, f, 3) + _conv("recon2", f, 3, 3)
    return specs


def param_count(cfg: NetConfig) -> int:
    return sum(int(np.prod(shape)) for _, shape in param_specs(cfg))


def init_params(cfg: NetConfig, seed: int = 0) -> dict:
    """He-normal conv weights (std ``sqrt(2 / fan_in)``), zero biases."""
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in param_specs(cfg):
        if name.endswith(".w"):
            fan_in = shape[1] * shape[2] * shape[3]
            params[name] = (rng.standard_normal(shape) * math.sqrt(2.0 / fan_in)).astype(np.float32)
        else:
            params[name] = np.zeros(shape, dtype=np.float32)
    return params


def zero_params(cfg: NetConfig) -> dict:
    return {name: np.zeros(shape, dtype=np.float32) for name, shape in param_specs(cfg)}


def as_tensors(params: Mapping[str, np.ndarray]) -> dict:
    return {k: v if isinstance(v, Tensor) else Tensor(v) for k, v in params.items()}


def _apply_conv(x: Tensor, params: Mapping[str, Tensor], name: str) -> Tensor:
    return conv2d(x, params[f"{name}.w"], params[f"{name}.b"])


def channel_attention(x: Tensor, params: Mapping[str, Tensor], prefix: str) -> Tensor:
    """Scale each channel by a sigmoid weight computed from its spatial mean."""
    return mul(x, channel_weights(x, params, prefix))


def channel_weights(x: Tensor, params: Mapping[str, Tensor], prefix: str) -> Tensor:
    pooled = global_avg_pool(x)
    hidden = relu(_apply_conv(pooled, params, f"{prefix}.ca1"))
    return sigmoid(_apply_conv(hidden, params, f"{prefix}.ca2"))


def pixel_attention(x: Tensor, params: Mapping[str, Tensor], prefix: str) -> Tensor:
    """Scale every spatial location by a sigmoid mask shared across channels."""
    return mul(x, pixel_mask(x, params, prefix))


def pixel_mask(x: Tensor, params: Mapping[str, Tensor], prefix: str) -> Tensor:
    hidden = relu(_apply_conv(x, params, f"{prefix}.pa1"))
    return sigmoid(_apply_conv(hidden, params, f"{prefix}.pa2"))


def _attend(x: Tensor, params, prefix: str, cfg: NetConfig) -> Tensor:
    if cfg.use_channel_attention:
        x = channel_attention(x, params, prefix)
    if cfg.use_pixel_attention:
        x = pixel_attention(x, params, prefix)
    return x


def rfab_forward(x: Tensor, params: Mapping[str, Tensor], cfg: NetConfig, prefix: str) -> Tensor:
    """Residual feature-attention block.

    conv -> ReLU -> (+x if local residual) -> conv -> CA -> PA -> +x
    """
    if x.shape[1] != cfg.filters:
        raise ShapeError(f"block expects {cfg.filters} channels, got {x.shape[1]}")
    y = relu(_apply_conv(x, params, f"{prefix}.conv1"))
    if cfg.use_local_residual:
        y = add(y, x)
    y = _apply_conv(y, params, f"{prefix}.conv2")
    y = _attend(y, params, prefix, cfg)
    return add(y, x)


def group_forward(x: Tensor, params: Mapping[str, Tensor], cfg: NetConfig, group: int) -> Tensor:
    y = x
    for b in range(cfg.blocks):
        y = rfab_forward(y, params, cfg, f"g{group}.b{b}")
    y = _apply_conv(y, params, f"g{group}.tail")
    return add(y, x)


def fanet_forward(image: Tensor, params: Mapping[str, Tensor], cfg: NetConfig) -> Tensor:
    """Full network: shallow conv, groups, attention, reconstruction, global skip.

    Output is not clamped; callers clamp to [0, 1] when exporting images.
    """
    if image.shape[1] != 3:
        raise ShapeError(f"network input must have 3 channels, got {image.shape[1]}")
    params = as_tensors(params)
    x = _apply_conv(image, params, "shallow")
    for g in range(cfg.groups):
        x = group_forward(x, params, cfg, g)
    x = _attend(x, params, "post", cfg)
    x = _apply_conv(_apply_conv(x, params, "recon1"), params, "recon2")
    return add(x, image)


def enhance_array(image: np.ndarray, params: Mapping[str, np.ndarray], cfg: NetConfig) -> np.ndarray:
    """Run the network on an ``(H, W, 3)`` array and return an unclamped ``(H, W, 3)`` result."""
    x = Tensor(np.asarray(image, dtype=np.float32).transpose(2, 0, 1)[None])
    y = fanet_forward(x, params, cfg)
    return y.data[0].transpose(1, 2, 0)
