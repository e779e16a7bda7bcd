"""Feature-attention network for underwater image enhancement, written from scratch on numpy."""
from .model import NetConfig, fanet_forward, init_params, param_count
from .train import TrainConfig, load_checkpoint, save_checkpoint, train_loop

__all__ = [
    "NetConfig",
    "TrainConfig",
    "fanet_forward",
    "init_params",
    "param_count",
    "train_loop",
    "save_checkpoint",
    "load_checkpoint",
]
