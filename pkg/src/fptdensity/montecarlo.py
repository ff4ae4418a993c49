"""Path-simulation oracle for first-passage laws in moving domains.

Simulates standard planar Brownian increments, detects the first exit from
the transported domain and records midpoint-convention hitting times and
boundary-parameter locations.  The crossing test transports a dense
boundary polyline incrementally (one flow step per Monte Carlo step) and
uses a star-shaped polar radius about the transported marker, which is
exact for the built-in curve families.  An optional Brownian-bridge
correction flags intra-step crossings with probability exp(-2 d1 d2 / dt)
from the endpoint distances to the instantaneous boundary.

Paths are organized in fixed-size blocks; each block draws from its own
counter-based stream keyed by (seed, block index), so results are
reproducible and block-parallel execution is order-independent.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import PreconditionError, TooFewHitsError
from .geometry import MovingDomain

__all__ = ["McConfig", "McResult", "KsReport", "simulate", "ks_compare",
           "accessibility_probe", "dkw_threshold"]


@dataclass(frozen=True)
class McConfig:
    """Path count, step size, seed and crossing-correction switch."""

    paths: int
    step: float
    seed: int
    horizon: float
    bridge_correction: bool = True
    block_size: int = 32768
    dense_nodes: int = 512

    def __post_init__(self):
        if self.paths < 1 or self.step <= 0.0 or self.horizon <= 0.0:
            raise PreconditionError("paths, step and horizon must be positive")


@dataclass
class McResult:
    """Empirical hitting data: times, boundary parameters, survivors."""

    hit_times: np.ndarray
    hit_params: np.ndarray
    hit_ids: np.ndarray
    survivors: int
    n_paths: int
    horizon: float
    seed: int

    @property
    def n_hits(self) -> int:
        return len(self.hit_times)

    def empirical_cdf(self, t) -> np.ndarray:
        """Defective empirical CDF #(tau <= t) / n_paths."""
        s = np.sort(self.hit_times)
        t = np.asarray(t, dtype=float)
        return np.searchsorted(s, t, side="right") / self.n_paths

    def dkw_band(self, alpha: float = 0.01) -> float:
        return dkw_threshold(self.n_paths, alpha)


def dkw_threshold(n: int, alpha: float = 0.01) -> float:
    """Dvoretzky-Kiefer-Wolfowitz band half-width at confidence 1 - alpha."""
    return math.sqrt(math.log(2.0 / alpha) / (2.0 * n))


# ---------------------------------------------------------------------------
# simulation
# ---------------------------------------------------------------------------

class _BoundaryTracker:
    """Crossing test for transported domains.

    For the built-in (non-composite) fields the flow is closed-form, so
    paths are pulled back to the reference frame and tested against a
    static polar table about the marker (signed gaps rescale by the flow's
    metric factor).  Composite fields fall back to transporting the dense
    polyline incrementally and rebuilding the table.
    """

    def __init__(self, domain: MovingDomain, n_dense: int):
        self.domain = domain
        self.static = domain.is_static()
        self.is_circle = domain.boundary.kind == "circle"
        self.exact = domain.flow.velocity.exact_flow()
        u = 2.0 * np.pi * np.arange(n_dense) / n_dense
        self.u = u
        self.nodes = domain.boundary.point(u)
        self.marker = np.asarray(domain.marker, dtype=float)
        self.t = 0.0
        self._scale = 1.0
        self._rebuild()

    def _rebuild(self):
        d = self.nodes - self.marker
        if self.is_circle:
            self._radius = float(np.hypot(d[0, 0], d[0, 1]))
            return
        theta = np.arctan2(d[:, 1], d[:, 0])
        order = np.argsort(theta)
        theta = theta[order]
        rho = np.hypot(d[order, 0], d[order, 1])
        uu = np.unwrap(self.u[order], period=2.0 * np.pi)
        drho = np.gradient(rho, theta, edge_order=1)
        tilt = rho / np.hypot(rho, drho)
        # periodic extension for interpolation over [-pi, pi]
        self._theta = np.r_[theta[-1] - 2.0 * np.pi, theta, theta[0] + 2.0 * np.pi]
        self._rho = np.r_[rho[-1], rho, rho[0]]
        self._tilt = np.r_[tilt[-1], tilt, tilt[0]]
        self._uu = np.r_[uu[-1] - 2.0 * np.pi, uu, uu[0] + 2.0 * np.pi]

    def advance_to(self, t: float):
        if self.static:
            self.t = t
            return
        if self.exact is not None:
            self.t = t
            self._scale = self.domain.flow.velocity.scale_factor(0.0, t)
            return
        if t > self.t:
            self.nodes = self.domain.flow.advance(self.nodes, self.t, t)
            self.marker = self.domain.flow.advance(self.marker, self.t, t)
            self.t = t
            self._rebuild()

    def _pull_back(self, x):
        if self.static or self.exact is None:
            return x
        return self.exact(x, self.t, 0.0)

    def gap(self, x):
        """Signed distance to the boundary at the tracked time, positive inside."""
        d = self._pull_back(x) - self.marker
        r = np.hypot(d[:, 0], d[:, 1])
        if self.is_circle:
            return (self._radius - r) * self._scale
        theta = np.arctan2(d[:, 1], d[:, 0])
        rho = np.interp(theta, self._theta, self._rho)
        tilt = np.interp(theta, self._theta, self._tilt)
        return (rho - r) * tilt * self._scale

    def param_of(self, x):
        """Boundary parameter of the boundary point nearest in angle to x."""
        d = self._pull_back(x) - self.marker
        theta = np.arctan2(d[:, 1], d[:, 0])
        if self.is_circle:
            return np.mod(theta, 2.0 * np.pi)
        return np.mod(np.interp(theta, self._theta, self._uu), 2.0 * np.pi)


def _simulate_block(domain: MovingDomain, r0, cfg: McConfig, block: int,
                    n_block: int):
    rng = np.random.Generator(np.random.Philox(key=[np.uint64(cfg.seed & (2**64 - 1)),
                                                    np.uint64(block)]))
    tracker = _BoundaryTracker(domain, cfg.dense_nodes)
    n_steps = int(round(cfg.horizon / cfg.step))
    sqdt = math.sqrt(cfg.step)
    x = np.tile(np.asarray(r0, dtype=float), (n_block, 1))
    ids = block * cfg.block_size + np.arange(n_block)
    gap_prev = tracker.gap(x)
    hit_t: list[np.ndarray] = []
    hit_u: list[np.ndarray] = []
    hit_i: list[np.ndarray] = []
    for j in range(n_steps):
        t_new = (j + 1) * cfg.step
        x += sqdt * rng.standard_normal((len(x), 2))
        tracker.advance_to(t_new)
        gap_new = tracker.gap(x)
        crossed = gap_new <= 0.0
        if cfg.bridge_correction:
            # exp(-2 d1 d2 / dt), evaluated only where it is not negligible
            expo = (-2.0 / cfg.step) * np.maximum(gap_prev, 0.0) * np.maximum(gap_new, 0.0)
            maybe = ~crossed & (expo > -45.0)
            draws = rng.random(len(x))
            fired = np.zeros(len(x), dtype=bool)
            fired[maybe] = draws[maybe] < np.exp(expo[maybe])
            crossed |= fired
        if np.any(crossed):
            hit_t.append(np.full(int(np.sum(crossed)), t_new - 0.5 * cfg.step))
            hit_u.append(tracker.param_of(x[crossed]))
            hit_i.append(ids[crossed])
            keep = ~crossed
            x = x[keep]
            ids = ids[keep]
            gap_new = gap_new[keep]
            if len(x) == 0:
                break
        gap_prev = gap_new
    times = np.concatenate(hit_t) if hit_t else np.empty(0)
    params = np.concatenate(hit_u) if hit_u else np.empty(0)
    idx = np.concatenate(hit_i) if hit_i else np.empty(0, dtype=int)
    return times, params, idx, len(x)


def simulate(domain: MovingDomain, r0, cfg: McConfig, threads: int = 1) -> McResult:
    """Simulate first-passage times of Brownian paths started at r0.

    Results are deterministic in (domain, r0, cfg); `threads` only
    parallelizes over path blocks and does not change the output.
    """
    r0 = np.asarray(r0, dtype=float)
    if not domain.contains(r0, 0.0):
        raise PreconditionError("start point must lie inside the reference domain")
    if cfg.horizon > domain.horizon + 1e-12:
        raise PreconditionError("Monte Carlo horizon exceeds the domain horizon")
    blocks = []
    remaining = cfg.paths
    b = 0
    while remaining > 0:
        n_block = min(cfg.block_size, remaining)
        blocks.append((b, n_block))
        remaining -= n_block
        b += 1
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(lambda a: _simulate_block(domain, r0, cfg, *a), blocks))
    else:
        parts = [_simulate_block(domain, r0, cfg, bi, nb) for bi, nb in blocks]
    times = np.concatenate([p[0] for p in parts])
    params = np.concatenate([p[1] for p in parts])
    idx = np.concatenate([p[2] for p in parts])
    survivors = int(sum(p[3] for p in parts))
    return McResult(hit_times=times, hit_params=params, hit_ids=idx,
                    survivors=survivors, n_paths=cfg.paths, horizon=cfg.horizon,
                    seed=cfg.seed)


# ---------------------------------------------------------------------------
# comparisons
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KsReport:
    statistic: float
    threshold: float
    passed: bool
    n_paths: int
    n_hits: int


def ks_compare(mc: McResult, model_cdf, alpha: float = 0.01,
               min_hits: int = 1000) -> KsReport:
    """Kolmogorov-Smirnov distance of the empirical hitting CDF to a model.

    The empirical CDF counts all n_paths (paths surviving past the horizon
    are censored mass); the DKW threshold uses n = n_paths accordingly.
    """
    if mc.n_hits < min_hits:
        raise TooFewHitsError(f"need at least {min_hits} hits, got {mc.n_hits}")
    s = np.sort(mc.hit_times)
    n = mc.n_paths
    model = np.asarray(model_cdf(s), dtype=float)
    upper = np.arange(1, len(s) + 1) / n
    lower = np.arange(0, len(s)) / n
    stat = float(np.max(np.maximum(np.abs(upper - model), np.abs(model - lower))))
    end_model = float(np.asarray(model_cdf(np.array([mc.horizon]))).ravel()[0])
    stat = max(stat, abs(len(s) / n - end_model))
    thr = dkw_threshold(n, alpha)
    return KsReport(statistic=stat, threshold=thr, passed=stat < thr,
                    n_paths=n, n_hits=mc.n_hits)


def accessibility_probe(domain: MovingDomain, u0: float, offsets, s: float,
                        cfg: McConfig, threads: int = 1):
    """Estimated P[tau > s] for starts xi0 - h n marching toward the boundary.

    Returns a list of (h, p_hat, stderr) rows; the escape probability must
    rise toward 1 (so survival falls to 0) as h -> 0.
    """
    sl = domain.boundary_at(0.0, 256)
    j = int(np.argmin(np.abs(np.mod(sl.u - u0 + np.pi, 2.0 * np.pi) - np.pi)))
    xi0, nrm = sl.nodes[j], sl.normals[j]
    probe_cfg = McConfig(paths=cfg.paths, step=cfg.step, seed=cfg.seed,
                         horizon=s, bridge_correction=cfg.bridge_correction,
                         block_size=cfg.block_size, dense_nodes=cfg.dense_nodes)
    rows = []
    for h in offsets:
        start = xi0 - h * nrm
        res = simulate(domain, start, probe_cfg, threads=threads)
        p_hat = res.survivors / res.n_paths
        stderr = math.sqrt(max(p_hat * (1.0 - p_hat), 1e-12) / res.n_paths)
        rows.append((float(h), p_hat, stderr))
    return rows
