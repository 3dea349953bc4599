"""Batch and instance normalization on ``(N, C, x, y, z)`` activations.

Forward passes use the population variance. The batch-norm running variance
is updated with the unbiased estimate. Nothing mutates its inputs: the
training forward returns a new :class:`NormParams` with updated running stats.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np


@dataclass(frozen=True)
class NormParams:
    gamma: np.ndarray
    beta: np.ndarray
    eps: float = 1e-5
    momentum: float = 0.1
    running_mean: Optional[np.ndarray] = None
    running_var: Optional[np.ndarray] = None

    def __post_init__(self):
        g = np.asarray(self.gamma, dtype=np.float64).ravel()
        b = np.asarray(self.beta, dtype=np.float64).ravel()
        if g.shape != b.shape:
            raise ValueError("gamma and beta must have one entry per channel")
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if not 0 < self.momentum <= 1:
            raise ValueError("momentum must lie in (0, 1]")
        object.__setattr__(self, "gamma", g)
        object.__setattr__(self, "beta", b)
        for name in ("running_mean", "running_var"):
            val = getattr(self, name)
            if val is not None:
                val = np.asarray(val, dtype=np.float64).ravel()
                if val.shape != g.shape:
                    raise ValueError(f"{name} must have one entry per channel")
                object.__setattr__(self, name, val)
        if self.running_var is not None and np.any(self.running_var < 0):
            raise ValueError("running_var must be non-negative")

    @classmethod
    def init(cls, channels: int, **kwargs) -> "NormParams":
        return cls(np.ones(channels), np.zeros(channels),
                   running_mean=np.zeros(channels), running_var=np.ones(channels), **kwargs)

    @property
    def channels(self) -> int:
        return self.gamma.size


def _check(x, p: NormParams) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 5:
        raise ValueError(f"expected (N, C, x, y, z) activations, got shape {x.shape}")
    if x.shape[1] != p.channels:
        raise ValueError(f"{x.shape[1]} channels but {p.channels} affine parameters")
    if not np.all(np.isfinite(x)):
        raise ValueError("activations must be finite")
    return x


def _bcast(v):
    return v.reshape(1, -1, 1, 1, 1)


_IN_AXES = (2, 3, 4)
_BN_AXES = (0, 2, 3, 4)


def _forward(x, p, axes):
    mu = x.mean(axis=axes, keepdims=True)
    var = x.var(axis=axes, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + p.eps)
    x_hat = (x - mu) * inv_std
    y = _bcast(p.gamma) * x_hat + _bcast(p.beta)
    cache = {"x_hat": x_hat, "inv_std": inv_std, "gamma": p.gamma, "axes": axes,
             "shape": x.shape}
    return y, cache, mu, var


def in_forward(x, p: NormParams):
    """Normalize each (sample, channel) over its spatial voxels."""
    x = _check(x, p)
    y, cache, _, _ = _forward(x, p, _IN_AXES)
    return y, cache


def bn_forward_train(x, p: NormParams):
    """Normalize each channel over (batch, spatial); returns ``(y, cache, new_params)``."""
    x = _check(x, p)
    count = x.size // x.shape[1]
    if count < 2:
        raise ValueError("batch statistics need more than one element per channel")
    y, cache, mu, var = _forward(x, p, _BN_AXES)
    mu, var = mu.ravel(), var.ravel()
    unbiased = var * count / (count - 1)
    rm = p.running_mean if p.running_mean is not None else np.zeros_like(mu)
    rv = p.running_var if p.running_var is not None else np.ones_like(var)
    new = replace(
        p,
        running_mean=(1 - p.momentum) * rm + p.momentum * mu,
        running_var=(1 - p.momentum) * rv + p.momentum * unbiased,
    )
    return y, cache, new


def bn_forward_inference(x, p: NormParams):
    x = _check(x, p)
    if p.running_mean is None or p.running_var is None:
        raise ValueError("inference needs running_mean and running_var")
    inv_std = 1.0 / np.sqrt(p.running_var + p.eps)
    return _bcast(p.gamma * inv_std) * (x - _bcast(p.running_mean)) + _bcast(p.beta)


def _backward(grad_y, cache):
    grad_y = np.asarray(grad_y, dtype=np.float64)
    if grad_y.shape != cache["shape"]:
        raise ValueError(f"grad_y shape {grad_y.shape} does not match forward input {cache['shape']}")
    x_hat, inv_std, axes = cache["x_hat"], cache["inv_std"], cache["axes"]
    grad_beta = grad_y.sum(axis=(0, 2, 3, 4))
    grad_gamma = (grad_y * x_hat).sum(axis=(0, 2, 3, 4))
    g = grad_y * _bcast(cache["gamma"])
    # dx = inv_std * (g - mean(g) - x_hat * mean(g * x_hat)) over the statistics group
    grad_x = inv_std * (
        g - g.mean(axis=axes, keepdims=True)
        - x_hat * (g * x_hat).mean(axis=axes, keepdims=True)
    )
    return grad_x, grad_gamma, grad_beta


def in_backward(grad_y, cache):
    if cache.get("axes") != _IN_AXES:
        raise ValueError("cache does not come from in_forward")
    return _backward(grad_y, cache)


def bn_backward(grad_y, cache):
    if cache.get("axes") != _BN_AXES:
        raise ValueError("cache does not come from bn_forward_train")
    return _backward(grad_y, cache)
