"""Moving planar domains: reference curves, velocity fields, flow maps.

The domain at time t is the image of a reference region under the flow of
a velocity field.  Boundary discretizations carry nodes, outward unit
normals and arclength quadrature weights (trapezoid rule in the curve
parameter, which is spectrally accurate on smooth closed curves).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import GridDegenerateError, IntegrationDivergedError, PreconditionError

__all__ = [
    "VelocityField",
    "zero_field",
    "translation_field",
    "rotation_field",
    "scaling_field",
    "composite_field",
    "FlowMap",
    "ReferenceBoundary",
    "circle",
    "ellipse",
    "smooth_star",
    "flat_capsule",
    "BoundarySlice",
    "BoundaryGrid",
    "MovingDomain",
    "lemma1_constant",
    "lemma2_integral",
]


# ---------------------------------------------------------------------------
# velocity fields
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class VelocityField:
    """Closed set of built-in velocity fields plus ordered sums of them.

    kind is one of "zero", "translation", "rotation", "scaling",
    "composite".  Each built-in has a documented spatial Lipschitz constant
    (0, 0, |omega|, max|alpha(t)| respectively), so the flow-existence
    hypothesis is guaranteed by construction.
    """

    kind: str
    translation: tuple[float, float] = (0.0, 0.0)
    omega: float = 0.0
    center: tuple[float, float] = (0.0, 0.0)
    alpha_coeffs: tuple[float, ...] = (0.0,)
    parts: tuple["VelocityField", ...] = ()

    def __call__(self, x, t):
        x = np.asarray(x, dtype=float)
        if self.kind == "zero":
            return np.zeros_like(x)
        if self.kind == "translation":
            return np.broadcast_to(np.asarray(self.translation, dtype=float), x.shape).copy()
        if self.kind == "rotation":
            d = x - np.asarray(self.center, dtype=float)
            out = np.empty_like(d)
            out[..., 0] = -self.omega * d[..., 1]
            out[..., 1] = self.omega * d[..., 0]
            return out
        if self.kind == "scaling":
            a = float(np.polyval(self.alpha_coeffs[::-1], t))
            return a * (x - np.asarray(self.center, dtype=float))
        if self.kind == "composite":
            out = np.zeros_like(x)
            for part in self.parts:
                out += part(x, t)
            return out
        raise ValueError(f"unknown velocity kind {self.kind!r}")

    def lipschitz_bound(self, t0: float, t1: float) -> float:
        """Spatial Lipschitz constant on [t0, t1]."""
        if self.kind in ("zero", "translation"):
            return 0.0
        if self.kind == "rotation":
            return abs(self.omega)
        if self.kind == "scaling":
            ts = np.linspace(t0, t1, 65)
            return float(np.max(np.abs(np.polyval(self.alpha_coeffs[::-1], ts))))
        return sum(p.lipschitz_bound(t0, t1) for p in self.parts)

    def is_zero(self) -> bool:
        if self.kind == "zero":
            return True
        if self.kind == "composite":
            return all(p.is_zero() for p in self.parts)
        return False

    def exact_flow(self):
        """Closed-form flow map (x, s, t) -> point, or None.

        Available for the single built-in kinds; composites fall back to
        numerical integration.
        """
        if self.kind == "zero":
            return lambda x, s, t: np.asarray(x, dtype=float).copy()
        if self.kind == "translation":
            c = np.asarray(self.translation, dtype=float)
            return lambda x, s, t: np.asarray(x, dtype=float) + (t - s) * c
        if self.kind == "rotation":
            z = np.asarray(self.center, dtype=float)
            om = self.omega

            def _rot(x, s, t):
                x = np.asarray(x, dtype=float)
                a = om * (t - s)
                ca, sa = math.cos(a), math.sin(a)
                d = x - z
                out = np.empty_like(d)
                out[..., 0] = ca * d[..., 0] - sa * d[..., 1]
                out[..., 1] = sa * d[..., 0] + ca * d[..., 1]
                return out + z

            return _rot
        if self.kind == "scaling":
            z = np.asarray(self.center, dtype=float)
            # antiderivative of the polynomial alpha
            anti = np.polyint(np.poly1d(self.alpha_coeffs[::-1]))

            def _scale(x, s, t):
                x = np.asarray(x, dtype=float)
                return z + (x - z) * math.exp(anti(t) - anti(s))

            return _scale
        return None

    def scale_factor(self, s: float, t: float) -> float:
        """Metric scale of the flow between times s and t (1 for isometries)."""
        if self.kind == "scaling":
            anti = np.polyint(np.poly1d(self.alpha_coeffs[::-1]))
            return math.exp(anti(t) - anti(s))
        return 1.0


def zero_field() -> VelocityField:
    return VelocityField(kind="zero")


def translation_field(c) -> VelocityField:
    return VelocityField(kind="translation", translation=(float(c[0]), float(c[1])))


def rotation_field(omega: float, center=(0.0, 0.0)) -> VelocityField:
    return VelocityField(kind="rotation", omega=float(omega),
                         center=(float(center[0]), float(center[1])))


def scaling_field(alpha_coeffs, center=(0.0, 0.0)) -> VelocityField:
    coeffs = tuple(float(c) for c in np.atleast_1d(alpha_coeffs))
    return VelocityField(kind="scaling", alpha_coeffs=coeffs,
                         center=(float(center[0]), float(center[1])))


def composite_field(*parts: VelocityField) -> VelocityField:
    return VelocityField(kind="composite", parts=tuple(parts))


# ---------------------------------------------------------------------------
# flow map
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FlowMap:
    """Integral curves of a velocity field, 4th-order explicit Runge-Kutta."""

    velocity: VelocityField
    step_dt: float = 1e-3

    def _integrate(self, x, s, t):
        x = np.array(x, dtype=float)
        span = t - s
        if span == 0.0 or self.velocity.is_zero():
            return x
        n = max(1, int(math.ceil(abs(span) / self.step_dt)))
        h = span / n
        v = self.velocity
        tt = s
        for _ in range(n):
            k1 = v(x, tt)
            k2 = v(x + 0.5 * h * k1, tt + 0.5 * h)
            k3 = v(x + 0.5 * h * k2, tt + 0.5 * h)
            k4 = v(x + h * k3, tt + h)
            x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            tt += h
        if not np.all(np.isfinite(x)):
            raise IntegrationDivergedError("flow integration produced non-finite state")
        return x

    def advance(self, x, s: float, t: float):
        """theta_s^t x: transport x from time s forward to time t >= s."""
        if t < s:
            raise PreconditionError("advance requires s <= t")
        return self._integrate(x, s, t)

    def inverse(self, x, t: float, s: float):
        """theta_t^s x: transport x backward from time t to time s <= t."""
        if t < s:
            raise PreconditionError("inverse requires s <= t")
        return self._integrate(x, t, s)


# ---------------------------------------------------------------------------
# reference curves
# ---------------------------------------------------------------------------

def _smoothstep(x):
    # C-infinity step: 0 for x <= 0, 1 for x >= 1
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    xs = np.where(x > 0.0, x, 1.0)
    ys = np.where(x < 1.0, 1.0 - x, 1.0)
    f = np.where(x > 0.0, np.exp(-1.0 / xs), 0.0)
    g = np.where(x < 1.0, np.exp(-1.0 / ys), 0.0)
    return f / (f + g)


def _smoothstep_deriv(x):
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    xs = np.where(x > 0.0, x, 1.0)
    ys = np.where(x < 1.0, 1.0 - x, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        f = np.where(x > 0.0, np.exp(-1.0 / xs), 0.0)
        g = np.where(x < 1.0, np.exp(-1.0 / ys), 0.0)
    fp = np.where(x > 0.0, f / xs**2, 0.0)
    gp = np.where(x < 1.0, -g / ys**2, 0.0)
    denom = np.maximum((f + g) ** 2, 1e-300)
    return (fp * g - f * gp) / denom


@dataclass(frozen=True)
class ReferenceBoundary:
    """Smooth closed reference curve psi: [0, 2pi) -> R^2, positively oriented.

    Built-in families: circle(R), ellipse(a, b), smooth_star(R, eps, k) and
    flat_capsule (an exactly straight segment on y = 0 closed far away by a
    smooth arc; polar blend around an interior center, with a smooth
    node-concentrating reparametrization so uniform parameter nodes cluster
    on the flat segment).  All are star-shaped about `center`.
    """

    kind: str
    params: tuple[float, ...]

    # -- family constructors live at module level ---------------------------

    @property
    def center(self) -> np.ndarray:
        if self.kind == "flat_capsule":
            return np.array([0.0, self.params[1]])
        return np.zeros(2)

    @cached_property
    def diameter(self) -> float:
        u = np.linspace(0.0, 2.0 * np.pi, 512, endpoint=False)
        pts = self.point(u)
        return float(np.max(np.linalg.norm(pts - self.center, axis=-1)) * 2.0)

    @cached_property
    def max_speed(self) -> float:
        """Max |psi'(u)|; node spacing at m nodes is at most max_speed 2 pi / m."""
        u = np.linspace(0.0, 2.0 * np.pi, 4096, endpoint=False)
        return float(np.max(np.linalg.norm(self.tangent(u), axis=-1)))

    # capsule helpers -------------------------------------------------------

    def _capsule_theta(self, u):
        beta = self.params[4]
        w = np.asarray(u, dtype=float) - 1.5 * np.pi
        return u - beta * np.sin(w), 1.0 - beta * np.cos(w)

    def _capsule_rho(self, theta):
        half, height, arc_r, blend = self.params[0], self.params[1], self.params[2], self.params[3]
        theta = np.mod(np.asarray(theta, dtype=float), 2.0 * np.pi)
        w0 = math.atan2(half, height)
        th1, th2 = 1.5 * np.pi - w0, 1.5 * np.pi + w0
        sin_t = np.sin(theta)
        flat_ok = sin_t < -1e-12
        rho_f = np.where(flat_ok, -height / np.where(flat_ok, sin_t, -1.0), arc_r)
        drho_f = np.where(flat_ok, height * np.cos(theta) / np.where(flat_ok, sin_t, 1.0) ** 2, 0.0)
        # window weight: 1 on [th1, th2], smooth down to 0 over `blend`
        xi_lo = (theta - (th1 - blend)) / blend
        xi_hi = ((th2 + blend) - theta) / blend
        w_lo, w_hi = _smoothstep(xi_lo), _smoothstep(xi_hi)
        w = w_lo * w_hi
        dw = (_smoothstep_deriv(xi_lo) * w_hi - w_lo * _smoothstep_deriv(xi_hi)) / blend
        rho = w * rho_f + (1.0 - w) * arc_r
        drho = dw * (rho_f - arc_r) + w * drho_f
        return rho, drho

    # evaluation -------------------------------------------------------------

    def point(self, u):
        u = np.asarray(u, dtype=float)
        if self.kind == "circle":
            r = self.params[0]
            return np.stack([r * np.cos(u), r * np.sin(u)], axis=-1)
        if self.kind == "ellipse":
            a, b = self.params
            return np.stack([a * np.cos(u), b * np.sin(u)], axis=-1)
        if self.kind == "smooth_star":
            r, eps, k = self.params
            rho = r * (1.0 + eps * np.cos(k * u))
            return np.stack([rho * np.cos(u), rho * np.sin(u)], axis=-1)
        if self.kind == "flat_capsule":
            theta, _ = self._capsule_theta(u)
            rho, _ = self._capsule_rho(theta)
            return self.center + np.stack([rho * np.cos(theta), rho * np.sin(theta)], axis=-1)
        raise ValueError(f"unknown boundary kind {self.kind!r}")

    def tangent(self, u):
        """d psi / d u; never zero for the built-in families."""
        u = np.asarray(u, dtype=float)
        if self.kind == "circle":
            r = self.params[0]
            return np.stack([-r * np.sin(u), r * np.cos(u)], axis=-1)
        if self.kind == "ellipse":
            a, b = self.params
            return np.stack([-a * np.sin(u), b * np.cos(u)], axis=-1)
        if self.kind == "smooth_star":
            r, eps, k = self.params
            rho = r * (1.0 + eps * np.cos(k * u))
            drho = -r * eps * k * np.sin(k * u)
            tx = drho * np.cos(u) - rho * np.sin(u)
            ty = drho * np.sin(u) + rho * np.cos(u)
            return np.stack([tx, ty], axis=-1)
        if self.kind == "flat_capsule":
            theta, dtheta = self._capsule_theta(u)
            rho, drho = self._capsule_rho(theta)
            tx = dtheta * (drho * np.cos(theta) - rho * np.sin(theta))
            ty = dtheta * (drho * np.sin(theta) + rho * np.cos(theta))
            return np.stack([tx, ty], axis=-1)
        raise ValueError(f"unknown boundary kind {self.kind!r}")

    def polar_radius(self, theta):
        """rho(theta) about `center`; the curves are star-shaped about it."""
        theta = np.asarray(theta, dtype=float)
        if self.kind == "circle":
            return np.full_like(theta, self.params[0])
        if self.kind == "ellipse":
            a, b = self.params
            return a * b / np.sqrt((b * np.cos(theta)) ** 2 + (a * np.sin(theta)) ** 2)
        if self.kind == "smooth_star":
            r, eps, k = self.params
            return r * (1.0 + eps * np.cos(k * theta))
        if self.kind == "flat_capsule":
            return self._capsule_rho(theta)[0]
        raise ValueError(f"unknown boundary kind {self.kind!r}")

    def signed_gap(self, x):
        """rho(theta) - r about center: positive strictly inside."""
        x = np.asarray(x, dtype=float)
        d = x - self.center
        theta = np.arctan2(d[..., 1], d[..., 0])
        return self.polar_radius(theta) - np.linalg.norm(d, axis=-1)

    def quad_scale(self, m: int) -> float:
        """Spacing scale governing surface-quadrature resolution at m nodes.

        For the capsule only the inner half of the flat segment counts: the
        kernel vanishes identically between exactly flat nodes, and under
        the family's validity condition (horizon much smaller than the
        squared flat length) the density is concentrated there, so the
        coarse outer nodes never see a resolvable kernel against it.
        """
        u = np.linspace(0.0, 2.0 * np.pi, 4096, endpoint=False)
        speed = np.linalg.norm(self.tangent(u), axis=-1)
        if self.kind == "flat_capsule":
            half = self.params[0]
            pts = self.point(u)
            mask = (np.abs(pts[:, 1]) < 1e-9) & (np.abs(pts[:, 0]) <= 0.5 * half)
            speed = speed[mask]
        return float(np.max(speed) * 2.0 * np.pi / m)


def circle(radius: float) -> ReferenceBoundary:
    return ReferenceBoundary(kind="circle", params=(float(radius),))


def ellipse(a: float, b: float) -> ReferenceBoundary:
    return ReferenceBoundary(kind="ellipse", params=(float(a), float(b)))


def smooth_star(radius: float, eps: float, k: int) -> ReferenceBoundary:
    if not 0.0 <= eps < 1.0:
        raise PreconditionError("star amplitude must satisfy 0 <= eps < 1")
    return ReferenceBoundary(kind="smooth_star", params=(float(radius), float(eps), float(k)))


def flat_capsule(half_length: float = 10.0, height: float = 10.0,
                 arc_radius: float | None = None, blend: float = math.pi / 8.0,
                 concentration: float = 0.9) -> ReferenceBoundary:
    """Exactly flat segment y=0, |x| <= half_length, closed by a smooth arc.

    `height` is the polar blend center (0, height); `concentration` in
    [0, 1) controls how strongly uniform parameter nodes cluster near the
    middle of the flat segment.
    """
    if arc_radius is None:
        arc_radius = math.hypot(half_length, height)
    w0 = math.atan2(half_length, height)
    if w0 + blend >= 0.5 * math.pi - 1e-9:
        raise PreconditionError("flat window plus blend must stay below the horizon")
    if not 0.0 <= concentration < 1.0:
        raise PreconditionError("concentration must lie in [0, 1)")
    return ReferenceBoundary(
        kind="flat_capsule",
        params=(float(half_length), float(height), float(arc_radius),
                float(blend), float(concentration)),
    )


# ---------------------------------------------------------------------------
# boundary slices and grids
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BoundarySlice:
    """One time slice of the lateral boundary: nodes, normals, weights."""

    t: float
    u: np.ndarray          # (M,) parameter values
    nodes: np.ndarray      # (M, 2)
    normals: np.ndarray    # (M, 2) outward unit normals
    weights: np.ndarray    # (M,) arclength weights

    @property
    def m(self) -> int:
        return len(self.u)

    @property
    def length(self) -> float:
        return float(np.sum(self.weights))

    @cached_property
    def curvature(self) -> np.ndarray:
        """Signed curvature at the nodes by spectral differentiation in u."""
        m = self.m
        freq = np.fft.rfftfreq(m, d=1.0 / m) * 1j
        xs = np.fft.rfft(self.nodes[:, 0])
        ys = np.fft.rfft(self.nodes[:, 1])
        x1 = np.fft.irfft(freq * xs, m)
        y1 = np.fft.irfft(freq * ys, m)
        x2 = np.fft.irfft(freq**2 * xs, m)
        y2 = np.fft.irfft(freq**2 * ys, m)
        speed = np.hypot(x1, y1)
        return (x1 * y2 - y1 * x2) / speed**3


@dataclass(frozen=True)
class BoundaryGrid:
    """Time-indexed boundary quadrature on t_0..t_K, M nodes per slice."""

    times: np.ndarray
    slices: tuple[BoundarySlice, ...]

    @property
    def m(self) -> int:
        return self.slices[0].m

    def __len__(self):
        return len(self.slices)

    def __getitem__(self, k: int) -> BoundarySlice:
        return self.slices[k]

    @cached_property
    def nodes(self) -> np.ndarray:
        return np.stack([s.nodes for s in self.slices])

    @cached_property
    def normals(self) -> np.ndarray:
        return np.stack([s.normals for s in self.slices])

    @cached_property
    def weights(self) -> np.ndarray:
        return np.stack([s.weights for s in self.slices])


def _winding_inside(points, poly):
    """Even-odd ray crossing test, points (N,2) against closed polyline (M,2)."""
    px = points[:, 0][:, None]
    py = points[:, 1][:, None]
    ax, ay = poly[:, 0][None, :], poly[:, 1][None, :]
    bx = np.roll(poly[:, 0], -1)[None, :]
    by = np.roll(poly[:, 1], -1)[None, :]
    straddle = (ay > py) != (by > py)
    with np.errstate(divide="ignore", invalid="ignore"):
        x_cross = ax + (py - ay) * (bx - ax) / (by - ay)
    hits = straddle & (x_cross > px)
    return np.sum(hits, axis=1) % 2 == 1


def _polyline_distance(points, poly):
    a = poly
    b = np.roll(poly, -1, axis=0)
    ab = b - a
    denom = np.sum(ab * ab, axis=1)
    ap = points[:, None, :] - a[None, :, :]
    tt = np.clip(np.einsum("nmd,md->nm", ap, ab) / denom[None, :], 0.0, 1.0)
    proj = a[None, :, :] + tt[:, :, None] * ab[None, :, :]
    return np.min(np.linalg.norm(points[:, None, :] - proj, axis=2), axis=1)


@dataclass(frozen=True)
class MovingDomain:
    """Reference domain transported by a flow over the horizon [0, T]."""

    boundary: ReferenceBoundary
    marker: tuple[float, float]
    flow: FlowMap
    horizon: float

    def __post_init__(self):
        gap = float(self.boundary.signed_gap(np.asarray(self.marker, dtype=float)))
        if gap <= 0.0:
            raise PreconditionError("marker point must lie strictly inside the reference domain")

    @property
    def diameter(self) -> float:
        return self.boundary.diameter

    def is_static(self) -> bool:
        return self.flow.velocity.is_zero()

    def marker_at(self, t: float) -> np.ndarray:
        return self.flow.advance(np.asarray(self.marker, dtype=float), 0.0, t)

    def velocity_sup_bound(self, n_t: int = 33, m: int = 128) -> float:
        """Computed bound for sup |v| over the lateral boundary (eta)."""
        sup = 0.0
        for t in np.linspace(0.0, self.horizon, n_t):
            sl = self.boundary_at(t, m)
            sup = max(sup, float(np.max(np.linalg.norm(self.flow.velocity(sl.nodes, t), axis=-1))))
        return sup

    # -- discretization ------------------------------------------------------

    def _slice_from_transport(self, t, u, pts, plus, minus, h, speed0, mk):
        tang = (plus - minus) / (2.0 * h) * speed0[:, None]
        norms = np.linalg.norm(tang, axis=-1)
        if np.any(norms < 1e-10):
            raise GridDegenerateError(f"degenerate tangent on slice t={t:g}")
        weights = norms * (2.0 * np.pi / len(u))
        nrm = np.stack([tang[:, 1], -tang[:, 0]], axis=-1) / norms[:, None]
        if np.dot(pts[0] - mk, nrm[0]) < 0.0:
            nrm = -nrm
        return BoundarySlice(t=float(t), u=u, nodes=pts, normals=nrm, weights=weights)

    def _reference_families(self, m: int):
        u = 2.0 * np.pi * np.arange(m) / m
        pts = self.boundary.point(u)
        tang0 = self.boundary.tangent(u)
        speed0 = np.linalg.norm(tang0, axis=-1)
        if np.any(speed0 < 1e-10):
            raise GridDegenerateError("reference parametrization is degenerate")
        that = tang0 / speed0[:, None]
        h = 1e-5 * self.diameter
        return u, pts, pts + h * that, pts - h * that, h, speed0

    def boundary_at(self, t: float, m: int) -> BoundarySlice:
        """Discretize the boundary of Omega_t with m >= 8 nodes.

        Nodes are the flow images of uniform reference parameters; tangents
        are transported through the flow's spatial Jacobian by central
        finite differences of `advance`.
        """
        if m < 8:
            raise PreconditionError("need at least 8 boundary nodes")
        if not 0.0 <= t <= self.horizon + 1e-12:
            raise PreconditionError("time outside [0, T]")
        u, pts, plus, minus, h, speed0 = self._reference_families(m)
        mk = np.asarray(self.marker, dtype=float)
        if t > 0.0 and not self.is_static():
            pts = self.flow.advance(pts, 0.0, t)
            plus = self.flow.advance(plus, 0.0, t)
            minus = self.flow.advance(minus, 0.0, t)
            mk = self.flow.advance(mk, 0.0, t)
        return self._slice_from_transport(t, u, pts, plus, minus, h, speed0, mk)

    def grid(self, times, m: int) -> BoundaryGrid:
        """Boundary slices at the given increasing times, built incrementally."""
        times = np.asarray(times, dtype=float)
        u, pts, plus, minus, h, speed0 = self._reference_families(m)
        mk = np.asarray(self.marker, dtype=float)
        static = self.is_static()
        slices = []
        t_prev = 0.0
        for t in times:
            if not static and t > t_prev:
                pts = self.flow.advance(pts, t_prev, t)
                plus = self.flow.advance(plus, t_prev, t)
                minus = self.flow.advance(minus, t_prev, t)
                mk = self.flow.advance(mk, t_prev, t)
            t_prev = t
            slices.append(self._slice_from_transport(t, u, pts, plus, minus, h, speed0, mk))
        return BoundaryGrid(times=times, slices=tuple(slices))

    # -- membership -----------------------------------------------------------

    def contains(self, x, t: float, nodes: int = 512):
        """Winding-number test after pulling x back to the reference frame.

        Points within 1e-12 of the reference node polyline are classified
        as outside (conservative for hitting detection).
        """
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        pts = np.atleast_2d(x)
        if t > 0.0 and not self.is_static():
            pts = self.flow.inverse(pts, t, 0.0)
        u = 2.0 * np.pi * np.arange(nodes) / nodes
        poly = self.boundary.point(u)
        inside = _winding_inside(pts, poly)
        near = _polyline_distance(pts, poly) <= 1e-12
        out = inside & ~near
        return bool(out[0]) if single else out


# ---------------------------------------------------------------------------
# numeric checks from the curvature and surface-Gaussian lemmas
# ---------------------------------------------------------------------------

def lemma1_constant(grid_slice: BoundarySlice) -> float:
    """Empirical curvature-scale bound max |<y-x, n_x>| / |y-x|^2.

    Maximum over node pairs with |y-x| <= diameter/4; equals 1/(2R) on a
    circle of radius R.
    """
    if grid_slice.m < 32:
        raise PreconditionError("need at least 32 nodes")
    pts = grid_slice.nodes
    d = pts[None, :, :] - pts[:, None, :]      # y - x, x indexed first
    dist2 = np.sum(d * d, axis=-1)
    diam = math.sqrt(float(np.max(dist2)))
    proj = np.abs(np.einsum("xyd,xd->xy", d, grid_slice.normals))
    mask = (dist2 <= (diam / 4.0) ** 2) & (dist2 > 0.0)
    ratio = np.where(mask, proj / np.where(mask, dist2, 1.0), 0.0)
    return float(np.max(ratio))


def lemma2_integral(domain: MovingDomain, x, t: float, s: float, m: int = 1024) -> float:
    """Surface Gaussian integral that tends to 1 as s -> t.

    Evaluates the (d-1)-normalized Gaussian mass of the slice at time s
    seen from a boundary point x of Omega_t.
    """
    if not 0.0 <= s < t:
        raise PreconditionError("need 0 <= s < t")
    sl = domain.boundary_at(s, m)
    a = t - s
    x = np.asarray(x, dtype=float)
    sq = np.sum((sl.nodes - x) ** 2, axis=-1)
    vals = (2.0 * np.pi * a) ** -0.5 * np.exp(-sq / (2.0 * a))
    return float(np.sum(sl.weights * vals))
