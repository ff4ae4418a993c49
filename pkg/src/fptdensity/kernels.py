"""Gaussian heat kernel of standard Brownian motion and its boundary kernels.

Convention: the generator is (1/2)Δ, so the transition density from r at
time s to x at time t is a Gaussian with variance (t - s) per coordinate,

    gauss = (2π(t-s))^(-d/2) · exp(-|x-r|² / (2(t-s))).

This is *not* the heat-conduction normalization with variance 2(t-s); the
factor of 2 lives in the generator, and everything downstream (layer
potentials, the marching equation, the oracles) assumes this convention.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidTimeOrderError

__all__ = [
    "HeatKernelParams",
    "gauss",
    "grad_x_gauss",
    "normal_kernel",
    "offset_normal_kernel",
]


@dataclass(frozen=True)
class HeatKernelParams:
    """Dimension tag for the heat kernel; d >= 1."""

    dim: int = 2

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"dimension must be >= 1, got {self.dim}")


def _dt_or_raise(s, t):
    dt = np.asarray(t, dtype=float) - np.asarray(s, dtype=float)
    if np.any(dt <= 0.0):
        raise InvalidTimeOrderError("heat kernel requires t > s")
    return dt


def gauss(p: HeatKernelParams, r, s, x, t):
    """Transition density gauss(p, r, s, x, t) = G(x, t; r, s).

    `r` and `x` are points with trailing axis of length p.dim; broadcasting
    over leading axes is supported.  Underflow to exact 0 far in the tail is
    deliberate and harmless (the kernel is integrable).
    """
    dt = _dt_or_raise(s, t)
    r = np.asarray(r, dtype=float)
    x = np.asarray(x, dtype=float)
    sq = np.sum((x - r) ** 2, axis=-1)
    return (2.0 * np.pi * dt) ** (-0.5 * p.dim) * np.exp(-sq / (2.0 * dt))


def grad_x_gauss(p: HeatKernelParams, r, s, x, t):
    """Spatial gradient of gauss with respect to x: -((x-r)/(t-s))·G."""
    dt = _dt_or_raise(s, t)
    r = np.asarray(r, dtype=float)
    x = np.asarray(x, dtype=float)
    g = gauss(p, r, s, x, t)
    return -(x - r) / np.asarray(dt)[..., None] * np.asarray(g)[..., None]

def normal_kernel(p: HeatKernelParams, x, t, n, y, s):
    """Normal-derivative kernel K(x,t;y,s) = <n, ∇_x G(x,t;y,s)>.

    Equals -(<x-y, n>/(t-s))·gauss; this is the kernel of the second-kind
    marching equation.  `n` must be a unit vector (|n| = 1 within 1e-10).
    """
    dt = _dt_or_raise(s, t)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = np.asarray(n, dtype=float)
    nn = np.sum(n * n, axis=-1)
    if np.any(np.abs(nn - 1.0) > 2e-10):
        raise ValueError("normal_kernel requires unit normals")
    proj = np.sum((x - y) * n, axis=-1)
    return -proj / dt * gauss(p, y, s, x, t)


def offset_normal_kernel(p: HeatKernelParams, x, t, n, h, y, s):
    """<n, ∇_x G> evaluated at the interior-offset point x - h·n, h > 0."""
    h = np.asarray(h, dtype=float)
    if np.any(h <= 0.0):
        raise ValueError("offset h must be positive")
    dt = _dt_or_raise(s, t)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = np.asarray(n, dtype=float)
    xo = x - h[..., None] * n if h.ndim else x - h * n
    proj = np.sum((xo - y) * n, axis=-1)
    return -proj / dt * gauss(p, y, s, xo, t)
