"""Shared finite-difference checks for the network."""
from contextlib import contextmanager

import numpy as np

from fanet import losses as L
from fanet import model as M
from fanet.losses import DEFAULT_SSIM, total_loss
from fanet.tensor import Tape, Tensor, backward


def _t(arrs):
    return {k: Tensor(v, dtype=np.float64) for k, v in arrs.items()}


@contextmanager
def recording_kinks(log: list):
    """Record the sign pattern fed into every ReLU and |.| while active."""
    relu, absolute = M.relu, L.absolute

    def relu_probe(x):
        log.append(x.data > 0)
        return relu(x)

    def abs_probe(x):
        log.append(np.sign(x.data))
        return absolute(x)

    M.relu, L.absolute = relu_probe, abs_probe
    try:
        yield
    finally:
        M.relu, L.absolute = relu, absolute


def end_to_end_gradient_error(cfg, seed, picks=6, eps=1e-3, size=12, consts=DEFAULT_SSIM, max_draws=200):
    """Worst relative error between tape and central-difference gradients of
    the training loss over ``picks`` random scalar parameters.

    A draw whose ``+-eps`` interval flips any ReLU or |.| input is redrawn:
    the loss is piecewise smooth and a central difference across a kink
    does not estimate the derivative at either side.
    Returns ``(worst_error, redrawn)``.
    """
    rng = np.random.default_rng(seed)
    base = {k: v.astype(np.float64) * 0.5 for k, v in M.init_params(cfg, seed).items()}
    for k in base:
        if k.endswith(".b"):
            base[k] = rng.normal(scale=0.05, size=base[k].shape)
    hazy = Tensor(rng.random((1, 3, size, size)), dtype=np.float64)
    clean = Tensor(rng.random((1, 3, size, size)), dtype=np.float64)

    def loss(values):
        kinks = []
        with recording_kinks(kinks):
            value = total_loss(M.fanet_forward(hazy, _t(values), cfg), clean, consts).item()
        return value, kinks

    tape = Tape()
    leaves = {k: tape.watch(v) for k, v in base.items()}
    grads = backward(tape, total_loss(M.fanet_forward(hazy, leaves, cfg), clean, consts))
    names = list(base)
    worst, used, redrawn = 0.0, 0, 0
    for _ in range(max_draws):
        if used == picks:
            break
        name = names[rng.integers(len(names))]
        idx = tuple(rng.integers(s) for s in base[name].shape)
        plus, minus = dict(base), dict(base)
        plus[name], minus[name] = base[name].copy(), base[name].copy()
        plus[name][idx] += eps
        minus[name][idx] -= eps
        (f_plus, k_plus), (f_minus, k_minus) = loss(plus), loss(minus)
        if any(not np.array_equal(a, b) for a, b in zip(k_plus, k_minus)):
            redrawn += 1
            continue
        analytic = grads[leaves[name].node][idx]
        numeric = (f_plus - f_minus) / (2 * eps)
        worst = max(worst, abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-6))
        used += 1
    if used < picks:
        raise RuntimeError(f"only {used} kink-free parameter draws out of {max_draws}")
    return worst, redrawn
