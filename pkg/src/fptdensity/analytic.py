"""Closed-form first-passage oracles: static disk and half-plane.

The disk oracle expands the killed heat kernel at the center of a static
disk in Bessel eigenfunctions; the half-plane oracle is the method of
images.  Both serve as ground truth for the marching solver and the Monte
Carlo simulator, so they deliberately avoid the machinery they are used to
check: the order-zero/one Bessel functions are evaluated here from their
power series (small argument) and Hankel asymptotic expansion (large
argument, switch at 12), and the zeros are located by bracketed
root-finding.  Tests cross-check the table against an independent
implementation at doubled working precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import MoreTermsNeededError

__all__ = [
    "BesselTable",
    "bessel_j0",
    "bessel_j1",
    "default_table",
    "disk_fpt_density",
    "disk_survival",
    "halfplane_joint_density",
    "halfplane_level_density",
]

_ASYMPTOTIC_SWITCH = 12.0
_ASYMPTOTIC_TERMS = 13


def _j_series(x, order):
    # power series around 0; adequate below the switch point
    x = np.asarray(x, dtype=float)
    q = 0.25 * x * x
    term = np.ones_like(x) if order == 0 else 0.5 * x
    total = term.copy()
    for k in range(1, 120):
        term = term * (-q) / (k * (k + order))
        total += term
        if np.all(np.abs(term) < 1e-17 * (1.0 + np.abs(total))):
            break
    return total


def _j_asymptotic(x, order):
    # Hankel expansion: J_nu ~ sqrt(2/(pi x)) [P cos w - Q sin w],
    # w = x - (2 nu + 1) pi/4, truncated near its optimal length for x >= 12
    x = np.asarray(x, dtype=float)
    mu = 4.0 * order * order
    inv8x = 1.0 / (8.0 * x)
    p = np.ones_like(x)
    q = np.zeros_like(x)
    c = np.ones_like(x)
    for m in range(1, _ASYMPTOTIC_TERMS):
        c = c * (mu - (2 * m - 1) ** 2) / m * inv8x
        if m % 2 == 1:
            q += c * (-1.0) ** ((m - 1) // 2)
        else:
            p += c * (-1.0) ** (m // 2)
    w = x - (2 * order + 1) * np.pi / 4.0
    return np.sqrt(2.0 / (np.pi * x)) * (p * np.cos(w) - q * np.sin(w))


def _bessel_j(x, order):
    x = np.asarray(x, dtype=float)
    sign = np.where((x < 0) & (order == 1), -1.0, 1.0)
    ax = np.abs(x)
    out = np.where(
        ax < _ASYMPTOTIC_SWITCH,
        _j_series(np.minimum(ax, _ASYMPTOTIC_SWITCH), order),
        _j_asymptotic(np.maximum(ax, _ASYMPTOTIC_SWITCH), order),
    )
    return sign * out


def bessel_j0(x):
    """Order-zero Bessel function of the first kind."""
    return _bessel_j(x, 0)


def bessel_j1(x):
    """Order-one Bessel function of the first kind."""
    return _bessel_j(x, 1)


@dataclass(frozen=True)
class BesselTable:
    """First n positive zeros of J0 and the values of J1 there."""

    zeros: np.ndarray
    j1_at_zeros: np.ndarray

    @classmethod
    def build(cls, n: int = 200) -> "BesselTable":
        zeros = np.empty(n)
        for k in range(1, n + 1):
            # McMahon's expansion brackets the k-th zero well within +-0.4
            approx = (k - 0.25) * math.pi
            approx += 1.0 / (8.0 * approx)
            lo, hi = approx - 0.4, approx + 0.4
            f = lambda z: float(bessel_j0(z))
            if f(lo) * f(hi) > 0:  # pragma: no cover - brackets never fail
                lo, hi = approx - 0.8, approx + 0.8
            zeros[k - 1] = brentq(f, lo, hi, xtol=1e-14, rtol=8.9e-16)
        return cls(zeros=zeros, j1_at_zeros=np.asarray(bessel_j1(zeros)))

    def __len__(self):
        return len(self.zeros)


_DEFAULT_TABLE: BesselTable | None = None


def default_table() -> BesselTable:
    global _DEFAULT_TABLE
    if _DEFAULT_TABLE is None:
        _DEFAULT_TABLE = BesselTable.build()
    return _DEFAULT_TABLE


def _disk_terms(radius, t, table, n_max):
    """Number of series terms needed so the next term is below 1e-14."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0.0):
        raise ValueError("disk series requires t > 0")
    table = table if table is not None else default_table()
    if n_max is None:
        n_max = len(table)
    n_max = min(n_max, len(table))
    j = table.zeros[:n_max]
    decay = np.exp(-np.outer(j * j, t / (2.0 * radius * radius)))
    coef = np.abs(2.0 / (j * table.j1_at_zeros[:n_max]))
    mags = coef[:, None] * decay
    if np.any(mags[-1] >= 1e-14):
        raise MoreTermsNeededError(
            f"disk series needs more than {n_max} terms at t={np.min(t):g}; "
            "shrink t or raise n_max"
        )
    # index of the first term below threshold for the worst (smallest) t
    below = np.all(mags < 1e-14, axis=1)
    n_used = int(np.argmax(below)) + 1 if below.any() else n_max
    return table, n_used


def disk_survival(radius: float, t, table: BesselTable | None = None, n_max=None):
    """P[tau >= t] for Brownian motion started at the center of a static disk.

    S(t) = sum_k [2 / (j_k J1(j_k))] exp(-j_k^2 t / (2 R^2)) with j_k the
    k-th zero of J0.  The series is truncated once the next term's magnitude
    drops below 1e-14; raises MoreTermsNeededError if the table is too short.
    """
    table, n = _disk_terms(radius, t, table, n_max)
    t = np.asarray(t, dtype=float)
    j = table.zeros[:n]
    coef = 2.0 / (j * table.j1_at_zeros[:n])
    out = coef @ np.exp(-np.outer(j * j, np.atleast_1d(t) / (2.0 * radius * radius)))
    return float(out[0]) if t.ndim == 0 else out


def disk_fpt_density(radius: float, t, table: BesselTable | None = None, n_max=None):
    """First-passage-time density f(t) = -S'(t) for the centered static disk.

    f(t) = sum_k [j_k / (R^2 J1(j_k))] exp(-j_k^2 t / (2 R^2)).  The
    boundary space-time density follows by symmetry as f(t) / (2 pi R).
    """
    table, n = _disk_terms(radius, t, table, n_max)
    t = np.asarray(t, dtype=float)
    j = table.zeros[:n]
    coef = j / (radius * radius * table.j1_at_zeros[:n])
    out = coef @ np.exp(-np.outer(j * j, np.atleast_1d(t) / (2.0 * radius * radius)))
    return float(out[0]) if t.ndim == 0 else out


def halfplane_joint_density(y0: float, x, t):
    """Joint hitting density at (x, 0) at time t, start (0, y0), y0 > 0.

    Method of images for the upper half-plane: p(x, t) =
    (y0 / (2 pi t^2)) exp(-(x^2 + y0^2) / (2 t)).
    """
    if y0 <= 0.0:
        raise ValueError("start height y0 must be positive")
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0.0):
        raise ValueError("halfplane density requires t > 0")
    x = np.asarray(x, dtype=float)
    return y0 / (2.0 * np.pi * t * t) * np.exp(-(x * x + y0 * y0) / (2.0 * t))


def halfplane_level_density(y0: float, t):
    """x-marginal of the joint density: the 1-d level-hitting density."""
    t = np.asarray(t, dtype=float)
    return y0 / np.sqrt(2.0 * np.pi * t**3) * np.exp(-y0 * y0 / (2.0 * t))
