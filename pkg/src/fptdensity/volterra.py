"""Time marching for the first-passage density on the lateral boundary.

The density p solves a second-kind Volterra equation on the moving
boundary: p(x,t) equals a source term (the normal-derivative heat kernel
seen from the start point, or its convolution with smooth initial data)
plus the time-space layer integral of the same kernel against p itself.
Causality makes explicit marching possible: each time slice depends only
on strictly earlier slices.

Discretization notes.  The boundary integral per history slice uses the
slice quadrature; for small time lags the kernel's Gaussian footprint
(width sqrt(t-s)) falls below the node spacing, so those slices are
re-evaluated on an exactly refined parameter grid with the density
upsampled by periodic cubic interpolation.  The time integral is either
the plain rectangle sum of the history slices (time_rule="rectangle",
the fully explicit default) or a trapezoid rule plus a last-panel
product-integration correction that integrates the (t-s)^(-1/2) factor
exactly against a two-point fit (time_rule="corrected").
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import (
    PreconditionError,
    SolverDivergedError,
    WindowTooLongError,
)
from .geometry import BoundaryGrid, BoundarySlice, MovingDomain, _polyline_distance
from .kernels import HeatKernelParams, offset_normal_kernel

__all__ = [
    "SolverConfig",
    "SourceSpec",
    "DensitySolution",
    "rhs_point",
    "rhs_smooth",
    "solve",
    "residual",
    "delta_convergence_study",
    "jump_relation_probe",
]

_TWO_PI = 2.0 * math.pi
# last-panel extrapolation weight for the u^(-1/2) + const fit, 1/(1 - 2^-1/2)
_PANEL_C = 2.0 + math.sqrt(2.0)
_NEAR_RATIO = 0.75      # require gaussian width >= ratio * fine spacing
_MAX_UPSAMPLE = 16
_MAX_NEAR_LAGS = 48


# ---------------------------------------------------------------------------
# configuration and sources
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SolverConfig:
    """Marching parameters.

    dt must divide the domain horizon; gamma is diagnostic only (the
    contraction-window exponent 2*gamma - 1/2 appears in solver bounds).
    """

    dt: float
    nodes: int
    gamma: float = 0.49
    picard_tol: float = 1e-10
    picard_max_iters: int = 200
    window: float | None = None
    mode: str = "march"            # "march" | "picard"
    time_rule: str = "rectangle"   # "rectangle" | "corrected"

    def __post_init__(self):
        if self.dt <= 0.0:
            raise PreconditionError("dt must be positive")
        if self.nodes < 8:
            raise PreconditionError("need at least 8 boundary nodes")
        if not 0.25 < self.gamma < 0.5:
            raise PreconditionError("gamma must lie in (1/4, 1/2)")
        if self.mode not in ("march", "picard"):
            raise PreconditionError(f"unknown mode {self.mode!r}")
        if self.time_rule not in ("rectangle", "corrected"):
            raise PreconditionError(f"unknown time rule {self.time_rule!r}")

    def steps(self, horizon: float) -> int:
        k = horizon / self.dt
        if abs(k - round(k)) > 1e-12 * max(1.0, k):
            raise PreconditionError("dt must divide the horizon")
        return int(round(k))


# normalization of the standard C-infinity bump exp(-1/(1-r^2)) on r < 1
def _bump_radial_mass() -> float:
    x, w = np.polynomial.legendre.leggauss(96)
    r = 0.5 * (x + 1.0)
    return float(np.sum(0.5 * w * np.exp(-1.0 / (1.0 - r * r)) * r))


_BUMP_I1 = _bump_radial_mass()


@dataclass(frozen=True)
class SourceSpec:
    """Initial mass: a point r0, or the unit-mass bump of support radius 1/m."""

    kind: str                      # "point" | "bump"
    center: tuple[float, float]
    radius: float = 0.0

    def __post_init__(self):
        if self.kind not in ("point", "bump"):
            raise PreconditionError(f"unknown source kind {self.kind!r}")
        if self.kind == "bump" and self.radius <= 0.0:
            raise PreconditionError("bump source needs a positive radius")

    @classmethod
    def point(cls, center) -> "SourceSpec":
        return cls(kind="point", center=(float(center[0]), float(center[1])))

    @classmethod
    def bump(cls, center, m: float) -> "SourceSpec":
        """Bump h_m with support B(center, 1/m) and unit integral."""
        return cls(kind="bump", center=(float(center[0]), float(center[1])),
                   radius=1.0 / float(m))

    def density(self, pts):
        """Bump values at pts; zero outside the support."""
        if self.kind != "bump":
            raise PreconditionError("density defined for bump sources only")
        pts = np.asarray(pts, dtype=float)
        rho2 = np.sum((pts - np.asarray(self.center)) ** 2, axis=-1) / self.radius**2
        inside = rho2 < 1.0
        safe = np.where(inside, rho2, 0.0)
        vals = np.where(inside, np.exp(-1.0 / (1.0 - safe)), 0.0)
        return vals / (_TWO_PI * _BUMP_I1 * self.radius**2)

    def polar_quadrature(self, n_r: int = 12, n_ang: int = 24):
        """Polar Gauss-Legendre rule (points, weights) with the bump folded in.

        The weights integrate f against h_m:  sum w_q f(xi_q) ~ int h_m f.
        """
        if self.kind != "bump":
            raise PreconditionError("quadrature defined for bump sources only")
        x, w = np.polynomial.legendre.leggauss(n_r)
        r = 0.5 * (x + 1.0) * self.radius
        wr = 0.5 * w * self.radius
        ang = _TWO_PI * np.arange(n_ang) / n_ang
        wa = _TWO_PI / n_ang
        pr, pa = np.meshgrid(r, ang, indexing="ij")
        pts = np.stack([pr * np.cos(pa), pr * np.sin(pa)], axis=-1)
        pts = pts.reshape(-1, 2) + np.asarray(self.center)
        wts = (np.repeat(wr, n_ang) * wa * np.repeat(r, n_ang)) * self.density(pts)
        return pts, wts

    def tensor_quadrature(self, n: int = 24):
        """Midpoint tensor grid over the support square with bump weights."""
        if self.kind != "bump":
            raise PreconditionError("quadrature defined for bump sources only")
        if n < 16:
            raise PreconditionError("tensor rule needs at least 16x16 nodes")
        h = 2.0 * self.radius / n
        g = -self.radius + h * (np.arange(n) + 0.5)
        gx, gy = np.meshgrid(g, g, indexing="ij")
        pts = np.stack([gx, gy], axis=-1).reshape(-1, 2) + np.asarray(self.center)
        wts = h * h * self.density(pts)
        return pts, wts

    def validate_inside(self, domain: MovingDomain, n_poly: int = 1024):
        center = np.asarray(self.center, dtype=float)
        if not domain.contains(center, 0.0):
            raise PreconditionError("source center must lie inside the reference domain")
        u = _TWO_PI * np.arange(n_poly) / n_poly
        dist = float(_polyline_distance(center[None, :], domain.boundary.point(u))[0])
        margin = self.radius if self.kind == "bump" else 1e-9 * domain.diameter
        if dist <= margin:
            raise PreconditionError("source support must stay strictly inside the domain")


# ---------------------------------------------------------------------------
# kernel blocks (d = 2 specialization of kernels.normal_kernel)
# ---------------------------------------------------------------------------

def _kernel_block(tnodes, tnormals, tt, snodes, st):
    """K(x_j, tt; y_i, st) for target nodes/normals (Mt,2) and sources (Ms,2)."""
    dx = tnodes[:, None, :] - snodes[None, :, :]
    sq = dx[:, :, 0] ** 2 + dx[:, :, 1] ** 2
    proj = dx[:, :, 0] * tnormals[:, None, 0] + dx[:, :, 1] * tnormals[:, None, 1]
    a = tt - st
    return -proj / a * np.exp(-sq / (2.0 * a)) / (_TWO_PI * a)


def _layer_sum_flat(tnodes, tnormals, tau, src_nodes, src_times, q, chunk=16384):
    """sum_i K(x_j, tau; y_i, s_i) q_i over a flat source list, chunked."""
    out = np.zeros(len(tnodes))
    tx, ty = tnodes[:, 0][:, None], tnodes[:, 1][:, None]
    nx, ny = tnormals[:, 0][:, None], tnormals[:, 1][:, None]
    for lo in range(0, len(src_nodes), chunk):
        sn = src_nodes[lo:lo + chunk]
        inv2a = 1.0 / (2.0 * (tau - src_times[lo:lo + chunk]))[None, :]
        dx0 = tx - sn[:, 0][None, :]
        dx1 = ty - sn[:, 1][None, :]
        sq = dx0 * dx0 + dx1 * dx1
        proj = dx0 * nx + dx1 * ny
        np.exp(-sq * inv2a, out=sq)
        sq *= proj
        sq *= inv2a * inv2a
        # K = -proj exp(-sq/2a) / (2 pi a^2) and 1/a^2 = 4 inv2a^2
        out -= (4.0 / _TWO_PI) * (sq @ q[lo:lo + chunk])
    return out


def rhs_point(x, n, t: float, r0) -> float:
    """Point-source driving term -K(x, t; r0, 0); zero at t = 0."""
    if t == 0.0:
        return 0.0
    x = np.asarray(x, dtype=float)
    n = np.asarray(n, dtype=float)
    r0 = np.asarray(r0, dtype=float)
    d = x - r0
    sq = np.sum(d * d, axis=-1)
    proj = np.sum(d * n, axis=-1)
    return proj / t * np.exp(-sq / (2.0 * t)) / (_TWO_PI * t)


def rhs_smooth(x, n, t: float, source: SourceSpec, rule: str = "tensor",
               n_nodes: int = 24) -> float:
    """Smooth-data driving term -int u0(xi) K(x, t; xi, 0) dxi."""
    if t == 0.0:
        return 0.0
    if rule == "tensor":
        pts, wts = source.tensor_quadrature(n_nodes)
    elif rule == "polar":
        pts, wts = source.polar_quadrature()
    else:
        raise PreconditionError(f"unknown smooth rhs rule {rule!r}")
    x = np.atleast_2d(np.asarray(x, dtype=float))
    n = np.atleast_2d(np.asarray(n, dtype=float))
    d = x[:, None, :] - pts[None, :, :]
    sq = np.sum(d * d, axis=-1)
    proj = np.einsum("qsd,qd->qs", d, n)
    vals = proj / t * np.exp(-sq / (2.0 * t)) / (_TWO_PI * t)
    out = vals @ wts
    return float(out[0]) if np.asarray(x).shape[0] == 1 and out.size == 1 else out


# ---------------------------------------------------------------------------
# solution container
# ---------------------------------------------------------------------------

@dataclass
class DensitySolution:
    """Discrete boundary density p on the lateral boundary grid.

    Interpolation: linear in time between slices, periodic cubic in the
    boundary parameter within a slice.
    """

    domain: MovingDomain
    source: SourceSpec
    config: SolverConfig
    grid: BoundaryGrid
    values: np.ndarray          # (K+1, M)
    picard_iters: int = 0

    @property
    def times(self) -> np.ndarray:
        return self.grid.times

    @property
    def dt(self) -> float:
        return self.config.dt

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def slice_values(self, t: float) -> np.ndarray:
        """Density at all nodes at time t, linear interpolation in time."""
        times = self.times
        if not times[0] <= t <= times[-1] + 1e-12:
            raise PreconditionError("time outside the solution range")
        k = min(int(np.searchsorted(times, t, side="right")) - 1, len(times) - 2)
        w = (t - times[k]) / (times[k + 1] - times[k])
        return (1.0 - w) * self.values[k] + w * self.values[k + 1]

    def interpolate(self, t: float, u) -> np.ndarray:
        """p(y(u), t) by periodic-cubic interpolation in the parameter."""
        vals = self.slice_values(t)
        uu = self.grid[0].u
        sp = CubicSpline(np.r_[uu, _TWO_PI], np.r_[vals, vals[0]], bc_type="periodic")
        return sp(np.mod(np.asarray(u, dtype=float), _TWO_PI))

    def boundary_flux(self) -> np.ndarray:
        """Total boundary flux per slice: F_k = sum_j w_kj p_kj."""
        return np.einsum("km,km->k", self.grid.weights, self.values)

    def cumulative_flux(self, t) -> np.ndarray:
        """Trapezoid cumulative of the flux up to each requested time."""
        flux = self.boundary_flux()
        times = self.times
        cumu = np.concatenate([[0.0], np.cumsum(0.5 * (flux[1:] + flux[:-1]) * np.diff(times))])
        return np.interp(np.asarray(t, dtype=float), times, cumu)


# ---------------------------------------------------------------------------
# assembler: boundary quadrature of the kernel against history slices
# ---------------------------------------------------------------------------

class _Assembler:
    """Shared machinery for marching, Picard sweeps and residual checks."""

    def __init__(self, domain: MovingDomain, grid: BoundaryGrid, cfg: SolverConfig):
        self.domain = domain
        self.grid = grid
        self.cfg = cfg
        self.m = grid.m
        self.k_steps = len(grid) - 1
        self.dt = float(grid.times[1] - grid.times[0]) if len(grid) > 1 else cfg.dt
        self.static = domain.is_static()
        self.scale = domain.boundary.quad_scale(self.m)
        self.upsample = self._upsample_per_lag()
        self.n_near = len(self.upsample)
        self._fine_grids: dict[int, BoundaryGrid] = {}
        self._fine_static: dict[int, BoundarySlice] = {}
        self._qfine_cache: dict[tuple[int, int], np.ndarray] = {}
        self._tables = None
        if self.static:
            self._build_static_tables()

    # -- near-field policy ---------------------------------------------------

    def _upsample_per_lag(self) -> list[int]:
        """Upsampling factor per time lag m = 1, 2, ... (1 = coarse grid)."""
        ups = []
        for m in range(1, _MAX_NEAR_LAGS + 1):
            sigma = math.sqrt(m * self.dt)
            need = _NEAR_RATIO * self.scale / sigma
            if need <= 1.0 and m > 2:
                break
            f = 1 if need <= 1.0 else 2 ** int(math.ceil(math.log2(need)))
            ups.append(min(f, _MAX_UPSAMPLE))
        return ups

    def _fine_slice(self, k: int, factor: int) -> BoundarySlice:
        if factor == 1:
            return self.grid[k]
        if self.static:
            sl = self._fine_static.get(factor)
            if sl is None:
                sl = self.domain.boundary_at(0.0, self.m * factor)
                self._fine_static[factor] = sl
            return sl
        fg = self._fine_grids.get(factor)
        if fg is None:
            fg = self.domain.grid(self.grid.times, self.m * factor)
            self._fine_grids[factor] = fg
        return fg[k]

    def _q_fine(self, values, l: int, factor: int, cache: bool):
        """weights * p of slice l upsampled to the given factor."""
        sl = self._fine_slice(l, factor)
        if factor == 1:
            return sl.weights * values[l]
        key = (l, factor)
        if cache and key in self._qfine_cache:
            return self._qfine_cache[key]
        uu = self.grid[l].u
        sp = CubicSpline(np.r_[uu, _TWO_PI], np.r_[values[l], values[l][0]],
                         bc_type="periodic")
        out = sl.weights * sp(sl.u)
        if cache:
            self._qfine_cache[key] = out
        return out

    # -- static lag tables -----------------------------------------------------

    def _build_static_tables(self):
        m, kk = self.m, self.k_steps
        base = self.grid[0]
        dxc = base.nodes[:, None, :] - base.nodes[None, :, :]
        sqc = dxc[:, :, 0] ** 2 + dxc[:, :, 1] ** 2
        projc = dxc[:, :, 0] * base.normals[:, None, 0] + dxc[:, :, 1] * base.normals[:, None, 1]
        far = np.zeros((m, kk + 1, m))
        for lag in range(self.n_near + 1, kk + 1):
            a = lag * self.dt
            far[:, lag, :] = -projc / a * np.exp(-sqc / (2.0 * a)) / (_TWO_PI * a)
        near = {}
        for lag, f in enumerate(self.upsample, start=1):
            fine = self._fine_slice(0, f)
            a = lag * self.dt
            near[lag] = _kernel_block(base.nodes, base.normals, a, fine.nodes, 0.0)
        self._tables = (far.reshape(m, (kk + 1) * m), near)

    # -- history integrand slices ---------------------------------------------

    def integrand_slices(self, k: int, values, lags=None, cache_fine=True):
        """Boundary integrals I_{k,l} = sum_i w_i K(x_k, t_k; y_l, t_l) p_l.

        Returns a dict lag -> (M,) array for the requested lags (default:
        the near set), plus the total over all lags 1..k-1 when lags is
        None.  `values` holds p on the coarse grid, rows 0..K.
        """
        if lags is not None:
            out = {}
            tsl = self.grid[k]
            near_tables = self._tables[1] if self._tables is not None else None
            for lag in lags:
                l = k - lag
                if l < 1:
                    out[lag] = np.zeros(self.m)
                    continue
                f = self.upsample[lag - 1] if lag <= self.n_near else 1
                q = self._q_fine(values, l, f, cache_fine)
                if near_tables is not None and lag in near_tables:
                    out[lag] = near_tables[lag] @ q
                    continue
                ssl = self._fine_slice(l, f)
                # static fine slices are cached at t=0; use the true slice time
                blk = _kernel_block(tsl.nodes, tsl.normals, tsl.t, ssl.nodes,
                                    self.grid.times[l])
                out[lag] = blk @ q
            return out
        raise PreconditionError("lags must be provided")

    def history_total(self, k: int, values, cache_fine=True):
        """(total sum over lags 1..k-1, [I at lags 1, 2, 3])."""
        m = self.m
        if k <= 1:
            z = np.zeros(m)
            return z, [z.copy(), z.copy(), z.copy()]
        n_near_here = min(self.n_near, k - 1)
        near = self.integrand_slices(k, values, lags=range(1, n_near_here + 1),
                                     cache_fine=cache_fine)
        total = np.zeros(m)
        for vec in near.values():
            total += vec
        if k - 1 > self.n_near:
            if self._tables is not None:
                far2, _ = self._tables
                q = self.grid.weights[1:k - self.n_near] * values[1:k - self.n_near]
                v = np.zeros((self.k_steps + 1, m))
                lag_lo = self.n_near + 1
                v[lag_lo:k] = q[::-1]
                total += far2[:, lag_lo * m:k * m] @ v[lag_lo:k].ravel()
            else:
                total += self._far_moving(k, values)
        recent = [near.get(lag, np.zeros(m)) for lag in (1, 2, 3)]
        return total, recent

    def _far_moving(self, k: int, values):
        tsl = self.grid[k]
        last = k - self.n_near - 1      # largest slice index in the far set
        nodes = self.grid.nodes[1:last + 1].reshape(-1, 2)
        times = np.repeat(self.grid.times[1:last + 1], self.m)
        q = (self.grid.weights[1:last + 1] * values[1:last + 1]).ravel()
        return _layer_sum_flat(tsl.nodes, tsl.normals, tsl.t, nodes, times, q)

    def _factor_for_gap(self, gap: float) -> int:
        sigma = math.sqrt(gap)
        need = _NEAR_RATIO * self.scale / sigma
        if need <= 1.0:
            return 1
        return min(2 ** int(math.ceil(math.log2(need))), _MAX_UPSAMPLE)

    def history_at_time(self, tau: float, tsl: BoundarySlice, values, k_last: int,
                        cache_fine=True, n_recent: int = 2):
        """History integrand slices for an off-grid target time tau > t_{k_last}.

        Returns (total over l = 1..k_last, [I at the n_recent most recent
        slices, newest first]), with near-resolution upsampling driven by
        the actual time gaps.
        """
        m = len(tsl.nodes)
        total = np.zeros(m)
        recent = {}
        near_lo = max(1, k_last - _MAX_NEAR_LAGS + 1)
        for l in range(near_lo, k_last + 1):
            gap = tau - self.grid.times[l]
            f = self._factor_for_gap(gap)
            ssl = self._fine_slice(l, f)
            q = self._q_fine(values, l, f, cache_fine)
            blk = _kernel_block(tsl.nodes, tsl.normals, tau, ssl.nodes, self.grid.times[l])
            vec = blk @ q
            total += vec
            if l > k_last - n_recent:
                recent[l] = vec
        if near_lo > 1:
            last = near_lo - 1
            nodes = self.grid.nodes[1:last + 1].reshape(-1, 2)
            times = np.repeat(self.grid.times[1:last + 1], self.grid.m)
            q = (self.grid.weights[1:last + 1] * values[1:last + 1]).ravel()
            total += _layer_sum_flat(tsl.nodes, tsl.normals, tau, nodes, times, q)
        i_recent = [recent[l] for l in sorted(recent, reverse=True)]
        return total, i_recent

    # -- time rules -------------------------------------------------------------

    def history_integral(self, k: int, values, cache_fine=True):
        """Quadrature of int_0^{t_k} of the boundary integrand against p."""
        total, recent = self.history_total(k, values, cache_fine=cache_fine)
        dt = self.dt
        if self.cfg.time_rule == "rectangle":
            return dt * total
        if k == 1:
            return dt * total       # empty history
        # two-anchor fit only: richer fits feed back through the marching
        # recursion and destabilize it
        i1 = recent[0]
        n_fit = min(2, k - 1)
        panel = _panel_integral(recent[:n_fit], dt * np.arange(1, n_fit + 1), dt)
        return dt * (total - 0.5 * i1) + panel


def _rhs_all(grid: BoundaryGrid, source: SourceSpec, smooth_rule: str,
             smooth_nodes: int) -> np.ndarray:
    kk, m = len(grid) - 1, grid.m
    out = np.zeros((kk + 1, m))
    if source.kind == "point":
        r0 = np.asarray(source.center, dtype=float)
        for k in range(1, kk + 1):
            sl = grid[k]
            out[k] = rhs_point(sl.nodes, sl.normals, sl.t, r0)
        return out
    if smooth_rule == "tensor":
        pts, wts = source.tensor_quadrature(smooth_nodes)
    else:
        pts, wts = source.polar_quadrature()
    for k in range(1, kk + 1):
        sl = grid[k]
        d = sl.nodes[:, None, :] - pts[None, :, :]
        sq = d[..., 0] ** 2 + d[..., 1] ** 2
        proj = d[..., 0] * sl.normals[:, None, 0] + d[..., 1] * sl.normals[:, None, 1]
        t = sl.t
        out[k] = (proj / t * np.exp(-sq / (2.0 * t)) / (_TWO_PI * t)) @ wts
    return out


# ---------------------------------------------------------------------------
# solve
# ---------------------------------------------------------------------------

def _march(asm: _Assembler, rhs: np.ndarray) -> np.ndarray:
    kk, m = asm.k_steps, asm.m
    values = np.zeros((kk + 1, m))
    for k in range(1, kk + 1):
        values[k] = rhs[k] + asm.history_integral(k, values)
        if not np.all(np.isfinite(values[k])):
            raise SolverDivergedError(f"non-finite density at step {k}")
    return values


def _picard_window(asm, rhs, values, k_lo, k_hi, tol, max_iters, require_contraction):
    """Fixed-point sweeps of the window map on slices k_lo..k_hi (inclusive)."""
    prev_change = None
    grow_streak = 0
    for it in range(1, max_iters + 1):
        new_rows = {}
        for k in range(k_lo, k_hi + 1):
            new_rows[k] = rhs[k] + asm.history_integral(k, values, cache_fine=False)
        change = 0.0
        for k, row in new_rows.items():
            change = max(change, float(np.max(np.abs(row - values[k]))))
            values[k] = row
        if not np.isfinite(change):
            raise SolverDivergedError("picard sweep produced non-finite values")
        if change < tol:
            return it, True
        if prev_change is not None:
            if change > prev_change:
                grow_streak += 1
                if grow_streak >= 3:
                    raise WindowTooLongError(
                        "picard iteration is not contracting; reduce the window T_s")
            else:
                grow_streak = 0
            if require_contraction and it == 2 and change > 0.9 * prev_change:
                return it, False
        prev_change = change
    raise WindowTooLongError("picard iteration did not converge within max_iters")


def _picard(asm: _Assembler, rhs: np.ndarray, seed_values: np.ndarray):
    cfg = asm.cfg
    kk = asm.k_steps
    values = seed_values.copy()
    horizon = asm.grid.times[-1]
    adaptive = cfg.window is None
    window = horizon if adaptive else cfg.window
    if not adaptive and not 0.0 < window <= horizon + 1e-12:
        raise PreconditionError("picard window must lie in (0, T]")
    total_iters = 0
    if adaptive:
        # halve until the first window contracts
        while True:
            k_hi = max(1, min(kk, int(round(window / asm.dt))))
            trial = values.copy()
            try:
                iters, ok = _picard_window(asm, rhs, trial, 1, k_hi, cfg.picard_tol,
                                           cfg.picard_max_iters, require_contraction=True)
            except WindowTooLongError:
                ok = False
                iters = 0
            if ok:
                values = trial
                total_iters += iters
                break
            if k_hi <= 4:
                raise WindowTooLongError("no contracting window found above 4 time steps")
            window *= 0.5
    else:
        k_hi = 0
    k_step = max(1, int(round(window / asm.dt)))
    k_lo = k_hi + 1
    while k_lo <= kk:
        k_hi = min(kk, k_lo + k_step - 1)
        iters, _ = _picard_window(asm, rhs, values, k_lo, k_hi, cfg.picard_tol,
                                  cfg.picard_max_iters, require_contraction=False)
        total_iters += iters
        k_lo = k_hi + 1
    return values, total_iters


def solve(domain: MovingDomain, source: SourceSpec, cfg: SolverConfig,
          smooth_rule: str = "tensor", smooth_nodes: int = 24,
          picard_seed: str = "march") -> DensitySolution:
    """Solve the boundary-density marching equation on [0, T].

    Parameters
    ----------
    domain, source, cfg
        Moving domain, initial mass and discretization parameters.
    smooth_rule
        Quadrature for the smooth-source driving term: "tensor" (midpoint
        grid over the support square) or "polar" (Gauss-Legendre in radius,
        also usable as a superposition of point-source terms).
    picard_seed
        Seed for picard mode: "march" (default), "zero", or "rhs".
    """
    source.validate_inside(domain)
    kk = cfg.steps(domain.horizon)
    times = cfg.dt * np.arange(kk + 1)
    grid = domain.grid(times, cfg.nodes)
    asm = _Assembler(domain, grid, cfg)
    rhs = _rhs_all(grid, source, smooth_rule, smooth_nodes)
    iters = 0
    if cfg.mode == "march":
        values = _march(asm, rhs)
    else:
        if picard_seed == "march":
            seed = _march(asm, rhs)
        elif picard_seed == "zero":
            seed = np.zeros_like(rhs)
        elif picard_seed == "rhs":
            seed = rhs.copy()
        else:
            raise PreconditionError(f"unknown picard seed {picard_seed!r}")
        values, iters = _picard(asm, rhs, seed)
    if not np.all(np.isfinite(values)):
        raise SolverDivergedError("solution contains non-finite values")
    return DensitySolution(domain=domain, source=source, config=cfg, grid=grid,
                           values=values, picard_iters=iters)


# ---------------------------------------------------------------------------
# residual on a staggered grid
# ---------------------------------------------------------------------------

def residual(solution: DensitySolution, stride: int | None = None,
             smooth_rule: str = "tensor", smooth_nodes: int = 24) -> float:
    """Sup-norm defect of the fixed-point equation at midpoint times.

    The defect is evaluated at staggered times (t_k + dt/2) where the
    discrete solution is defined by interpolation only, so it does not
    vanish by construction; the history integral is re-quadratured there
    with the trapezoid + fitted-panel rule against the interpolant.
    """
    domain, cfg = solution.domain, solution.config
    kk = len(solution.grid) - 1
    if stride is None:
        stride = max(1, kk // 256)
    dt = solution.dt
    stag_idx = list(range(0, kk, stride))
    stag_times = np.array([solution.times[k] + 0.5 * dt for k in stag_idx])
    stag_grid = domain.grid(stag_times, solution.grid.m)
    sup = 0.0
    asm = _Assembler(domain, solution.grid, replace(cfg, time_rule="corrected"))
    for sidx, k in enumerate(stag_idx):
        tau = stag_times[sidx]
        tsl = stag_grid[sidx]
        p_here = solution.slice_values(tau)
        if solution.source.kind == "point":
            rr = rhs_point(tsl.nodes, tsl.normals, tau, np.asarray(solution.source.center))
        else:
            rr = rhs_smooth(tsl.nodes, tsl.normals, tau, solution.source,
                            rule=smooth_rule, n_nodes=smooth_nodes)
        if k == 0:
            hist = np.zeros(solution.grid.m)
        else:
            total, i_recent = asm.history_at_time(tau, tsl, solution.values, k,
                                                  n_recent=3)
            hist = dt * (total - 0.5 * i_recent[0]) + \
                _panel_integral(i_recent, tau - solution.times[k:max(k - 3, 0):-1],
                                0.5 * dt)
        sup = max(sup, float(np.max(np.abs(p_here - rr - hist))))
    return sup


def _panel_integral(i_vals, u_vals, width):
    """int_0^width of a fit through I(u_i) in powers u^(-1/2), 1, u^(1/2).

    `i_vals` holds the integrand at increasing gaps u_vals (most recent
    first); one anchor pins the pure singular term, two add a constant,
    three add a sqrt correction.
    """
    n = min(len(i_vals), len(u_vals))
    if n == 0:
        return 0.0
    if n == 1:
        aa = i_vals[0] * math.sqrt(u_vals[0])
        return 2.0 * aa * math.sqrt(width)
    powers = (-0.5, 0.0, 0.5)[:n]
    vand = np.array([[u**p for p in powers] for u in u_vals[:n]])
    coef = np.linalg.solve(vand, np.stack([np.asarray(v, dtype=float)
                                           for v in i_vals[:n]]))
    moments = np.array([2.0 * math.sqrt(width), width,
                        (2.0 / 3.0) * width**1.5][:n])
    return moments @ coef


# ---------------------------------------------------------------------------
# delta-sequence convergence study
# ---------------------------------------------------------------------------

def delta_convergence_study(domain: MovingDomain, center, m_list, cfg: SolverConfig,
                            smooth_rule: str = "tensor"):
    """Sup-norm gaps between bump-source solutions and the point-source one.

    Returns a list of (m, sup |p_m - p|) in the order given; gaps are
    expected to decrease in m.
    """
    ref = solve(domain, SourceSpec.point(center), cfg)
    rows = []
    for m in m_list:
        src = SourceSpec.bump(center, m)
        sol = solve(domain, src, cfg, smooth_rule=smooth_rule)
        gap = float(np.max(np.abs(sol.values - ref.values)))
        rows.append((float(m), gap))
    return rows


# ---------------------------------------------------------------------------
# jump-relation probe
# ---------------------------------------------------------------------------

def jump_relation_probe(domain: MovingDomain, x, n, t: float, offsets,
                        phi=None, n_gl: int = 16):
    """Offset single-layer normal-derivative integrals and their h -> 0 target.

    Computes V(h) = int_0^t int offset_normal_kernel(x,t,n,h,y,s) phi dH ds
    for each h in `offsets`, plus the limit value phi(x,t) + int int K phi.
    The offset integrand concentrates an O(1) jump mass on the scale
    t - s ~ h^2 while the density varies on the scale t - s ~ t, so the
    time integral uses geometric Gauss-Legendre panels in z = h/sqrt(t-s)
    (resolving both ends), with each boundary slice discretized down to the
    kernel width sqrt(t-s).  Returns (V array, target).
    """
    x = np.asarray(x, dtype=float)
    n = np.asarray(n, dtype=float)
    if phi is None:
        phi = lambda y, s: np.ones(len(y))
    p2 = HeatKernelParams(dim=2)
    gl_x, gl_w = np.polynomial.legendre.leggauss(n_gl)

    def slice_integral(s: float, h: float) -> float:
        sigma = math.sqrt(t - s)
        per = 4.0 * domain.diameter
        m = int(min(max(64, math.ceil(per / (0.7 * max(sigma, 1e-9)))), 2**20))
        sl = domain.boundary_at(s, m)
        if h == 0.0:
            dxv = x[None, :] - sl.nodes
            sq = np.sum(dxv * dxv, axis=-1)
            proj = dxv @ n
            a = t - s
            vals = -proj / a * np.exp(-sq / (2.0 * a)) / (_TWO_PI * a)
        else:
            vals = offset_normal_kernel(p2, x, t, n, h, sl.nodes, s)
        return float(np.sum(sl.weights * vals * phi(sl.nodes, s)))

    def gl_panel(fn, lo: float, hi: float) -> float:
        acc = 0.0
        for xi, wi in zip(gl_x, gl_w):
            acc += wi * fn(0.5 * (hi - lo) * (xi + 1.0) + lo)
        return 0.5 * (hi - lo) * acc

    def offset_integral(h: float) -> float:
        # int_0^t ... ds = int_{z_min}^{z_max} I(t - h^2/z^2, h) 2h^2/z^3 dz
        z_min, z_max = h / math.sqrt(t), 8.0
        edges = np.geomspace(z_min, z_max, max(8, int(math.ceil(
            math.log2(z_max / z_min))) + 1))
        acc = 0.0
        for lo, hi in zip(edges[:-1], edges[1:]):
            acc += gl_panel(
                lambda z: slice_integral(t - (h / z) ** 2, h) * 2.0 * h * h / z**3,
                lo, hi)
        return acc

    def boundary_integral() -> float:
        # h = 0: the slice integrand has a 1/sigma singularity only;
        # sqrt substitution sigma = sqrt(t-s) with geometric panels at 0
        edges = np.r_[np.geomspace(1e-5 * math.sqrt(t), math.sqrt(t) / 4.0, 12),
                      [math.sqrt(t)]]
        acc = 0.0
        for lo, hi in zip(edges[:-1], edges[1:]):
            acc += gl_panel(
                lambda sig: 2.0 * sig * slice_integral(t - sig * sig, 0.0), lo, hi)
        return acc

    out = [offset_integral(h) for h in offsets]
    xphi = float(phi(x[None, :], t)[0])
    target = xphi + boundary_integral()
    return np.asarray(out), target
