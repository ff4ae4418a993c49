import math

import numpy as np
import pytest

from fptdensity import geometry as g
from fptdensity import volterra as v
from fptdensity.analytic import disk_fpt_density, halfplane_joint_density
from fptdensity.errors import PreconditionError, WindowTooLongError

P_CENTER = v.SourceSpec.point((0.0, 0.0))


def test_source_validation(static_disk):
    P_CENTER.validate_inside(static_disk)
    with pytest.raises(PreconditionError):
        v.SourceSpec.point((1.5, 0.0)).validate_inside(static_disk)
    # bump support touching the boundary violates the precondition
    with pytest.raises(PreconditionError):
        v.SourceSpec.bump((0.9, 0.0), m=8.0).validate_inside(static_disk)
    v.SourceSpec.bump((0.0, 0.0), m=4.0).validate_inside(static_disk)


def test_bump_unit_mass():
    bump = v.SourceSpec.bump((0.3, -0.1), m=4.0)
    pts, wts = bump.tensor_quadrature(96)
    assert np.sum(wts) == pytest.approx(1.0, abs=1e-8)
    # the default operational rules are looser but still well below the
    # tolerances of anything they feed
    pts, wts = bump.tensor_quadrature(24)
    assert np.sum(wts) == pytest.approx(1.0, abs=5e-5)
    pts, wts = bump.polar_quadrature()
    assert np.sum(wts) == pytest.approx(1.0, abs=1e-5)


def test_rhs_point_examples(static_disk):
    # far source, tiny t: gaussian tail kills the driving term
    val = v.rhs_point(np.array([1.0, 0.0]), np.array([1.0, 0.0]), 1e-3,
                      np.array([0.0, 0.0]))
    assert abs(val) < 1e-20
    # half-plane geometry: negation of the pinned normal-kernel value
    got = v.rhs_point(np.array([0.0, 0.0]), np.array([0.0, -1.0]), 1.0,
                      np.array([0.0, 1.0]))
    assert got == pytest.approx(math.exp(-0.5) / (2 * np.pi), abs=1e-10)
    # rotational symmetry from the center
    sl = static_disk.boundary_at(0.7, 64)
    vals = v.rhs_point(sl.nodes, sl.normals, 0.7, np.zeros(2))
    assert np.ptp(vals) < 1e-14


def test_rhs_smooth_examples(static_disk):
    sl = static_disk.boundary_at(0.8, 32)
    x, n = sl.nodes[0], sl.normals[0]
    # tiny bump far from the boundary reproduces the point driving term
    tiny = v.SourceSpec.bump((0.0, 0.0), m=1000.0)
    a = v.rhs_smooth(x, n, 0.8, tiny)
    b = v.rhs_point(x, n, 0.8, np.zeros(2))
    assert a == pytest.approx(b, rel=1e-4)
    # angular symmetry for a centered bump
    bump = v.SourceSpec.bump((0.0, 0.0), m=8.0)
    vals = v.rhs_smooth(sl.nodes, sl.normals, 0.8, bump)
    assert np.ptp(vals) / np.max(np.abs(vals)) < 1e-6
    # m -> infinity converges to the point term
    gaps = []
    for m in (8.0, 32.0, 128.0):
        gaps.append(abs(v.rhs_smooth(x, n, 0.8, v.SourceSpec.bump((0.0, 0.0), m)) - b))
    assert gaps[1] < gaps[0] and gaps[2] < gaps[1]


def test_config_validation(static_disk):
    with pytest.raises(PreconditionError):
        v.SolverConfig(dt=3e-3, nodes=64).steps(1.0)   # dt does not divide T
    with pytest.raises(PreconditionError):
        v.SolverConfig(dt=1e-2, nodes=64, gamma=0.6)
    with pytest.raises(PreconditionError):
        v.SolverConfig(dt=1e-2, nodes=64, mode="newton")


def test_disk_solution_against_bessel(disk_solution_coarse):
    sol = disk_solution_coarse
    for t in np.arange(0.1, 1.001, 0.1):
        got = 2.0 * np.pi * float(np.mean(sol.slice_values(t)))
        assert got == pytest.approx(disk_fpt_density(1.0, t), rel=0.01)


def test_first_slice_zero_and_nonnegative(disk_solution_coarse):
    sol = disk_solution_coarse
    assert np.all(sol.values[0] == 0.0)
    assert sol.values.min() >= -1e-6 * sol.sup_norm()


def test_early_time_vanishing(disk_solution_coarse):
    # gaussian tail: with dist(r0, boundary) = 1 the density is below
    # 1e-12 up to t = 1/70 (at t = 1/50 the driving term alone is ~5e-9)
    sol = disk_solution_coarse
    k_cut = int((1.0 / 70.0) / sol.dt)
    assert np.max(np.abs(sol.values[: k_cut + 1])) < 1e-12
    assert np.max(np.abs(sol.values[: int(0.02 / sol.dt) + 1])) < 1e-8


def test_causality_horizon_restriction(static_disk):
    cfg = v.SolverConfig(dt=1e-2, nodes=32, time_rule="corrected")
    full = v.solve(static_disk, P_CENTER, cfg)
    half_dom = g.MovingDomain(boundary=static_disk.boundary, marker=static_disk.marker,
                              flow=static_disk.flow, horizon=0.5)
    half = v.solve(half_dom, P_CENTER, cfg)
    k = len(half.values) - 1
    assert np.array_equal(full.values[: k + 1], half.values)


def test_slice_continuity_under_refinement(static_disk):
    sups = []
    for dt in (2e-2, 1e-2, 5e-3):
        sol = v.solve(static_disk, P_CENTER,
                      v.SolverConfig(dt=dt, nodes=32, time_rule="corrected"))
        sups.append(float(np.max(np.abs(np.diff(sol.values, axis=0)))))
    assert sups[1] < sups[0] and sups[2] < sups[1]


def test_grid_refinement_saturates(static_disk):
    cfg64 = v.SolverConfig(dt=5e-3, nodes=64, time_rule="corrected")
    cfg128 = v.SolverConfig(dt=5e-3, nodes=128, time_rule="corrected")
    s64 = v.solve(static_disk, P_CENTER, cfg64)
    s128 = v.solve(static_disk, P_CENTER, cfg128)
    a = np.array([np.mean(s64.slice_values(t)) for t in (0.2, 0.5, 1.0)])
    b = np.array([np.mean(s128.slice_values(t)) for t in (0.2, 0.5, 1.0)])
    assert np.max(np.abs(a / b - 1.0)) < 1e-3


def test_residual_of_zero_density(static_disk, disk_solution_coarse):
    sol = disk_solution_coarse
    zero = v.DensitySolution(domain=sol.domain, source=sol.source, config=sol.config,
                             grid=sol.grid, values=np.zeros_like(sol.values))
    res = v.residual(zero, stride=20)
    # residual reduces to the sup of the driving term on the staggered grid
    sups = []
    for k in range(0, len(sol.grid) - 1, 20):
        tau = sol.times[k] + 0.5 * sol.dt
        sl = sol.domain.boundary_at(tau, sol.grid.m)
        sups.append(np.max(np.abs(v.rhs_point(sl.nodes, sl.normals, tau, np.zeros(2)))))
    assert res == pytest.approx(max(sups), rel=1e-12)


@pytest.mark.slow
def test_disk_residual_at_acceptance_resolution(disk_solution_fine):
    sol, _ = disk_solution_fine
    assert v.residual(sol) < 5e-3 * sol.sup_norm()


def test_picard_seeds_agree(static_disk):
    cfg = v.SolverConfig(dt=5e-3, nodes=32, time_rule="corrected",
                         mode="picard", window=0.1)
    a = v.solve(static_disk, P_CENTER, cfg, picard_seed="zero")
    b = v.solve(static_disk, P_CENTER, cfg, picard_seed="rhs")
    assert np.max(np.abs(a.values - b.values)) < 1e-9
    march = v.solve(static_disk, P_CENTER,
                    v.SolverConfig(dt=5e-3, nodes=32, time_rule="corrected"))
    assert np.max(np.abs(a.values - march.values)) < 1e-9


def test_picard_adaptive_window(static_disk):
    cfg = v.SolverConfig(dt=1e-2, nodes=32, time_rule="corrected",
                         mode="picard", window=None)
    sol = v.solve(static_disk, P_CENTER, cfg, picard_seed="zero")
    march = v.solve(static_disk, P_CENTER,
                    v.SolverConfig(dt=1e-2, nodes=32, time_rule="corrected"))
    assert np.max(np.abs(sol.values - march.values)) < 1e-9


def test_picard_window_too_long(static_disk):
    cfg = v.SolverConfig(dt=5e-3, nodes=32, time_rule="corrected",
                         mode="picard", window=1.0, picard_max_iters=8)
    with pytest.raises(WindowTooLongError):
        v.solve(static_disk, P_CENTER, cfg, picard_seed="zero")
    # the same iteration budget suffices once the window shrinks
    ok = v.SolverConfig(dt=5e-3, nodes=32, time_rule="corrected",
                        mode="picard", window=0.025, picard_max_iters=8)
    v.solve(static_disk, P_CENTER, ok, picard_seed="zero")


def test_delta_convergence_study(static_disk):
    cfg = v.SolverConfig(dt=1e-2, nodes=48, time_rule="corrected")
    rows = v.delta_convergence_study(static_disk, (0.0, 0.0), [4, 8, 16], cfg)
    gaps = [gap for _, gap in rows]
    assert gaps[1] <= 1.05 * gaps[0] and gaps[2] <= 1.05 * gaps[1]
    with pytest.raises(PreconditionError):
        v.delta_convergence_study(static_disk, (0.8, 0.0), [4], cfg)


def test_bump_point_limit(static_disk):
    cfg = v.SolverConfig(dt=1e-2, nodes=48, time_rule="corrected")
    ref = v.solve(static_disk, P_CENTER, cfg)
    sol = v.solve(static_disk, v.SourceSpec.bump((0.0, 0.0), 64.0), cfg)
    gap = float(np.max(np.abs(sol.values - ref.values)))
    assert gap < 1e-3 * ref.sup_norm()


def test_interpolation_consistency(disk_solution_coarse):
    sol = disk_solution_coarse
    u = sol.grid[0].u
    direct = sol.slice_values(0.5)
    interp = sol.interpolate(0.5, u)
    assert np.max(np.abs(direct - interp)) < 1e-12


def test_halfplane_solution_matches_images():
    dom = g.MovingDomain(boundary=g.flat_capsule(), marker=(0.0, 10.0),
                         flow=g.FlowMap(g.zero_field()), horizon=0.25)
    cfg = v.SolverConfig(dt=2.5e-3, nodes=128, time_rule="corrected")
    sol = v.solve(dom, v.SourceSpec.point((0.0, 1.0)), cfg)
    sl = sol.grid[0]
    on_line = np.abs(sl.nodes[:, 1]) < 1e-12
    xs = sl.nodes[on_line, 0]
    k = len(sol.times) - 1
    oracle = halfplane_joint_density(1.0, xs, sol.times[k])
    mask = oracle > 1e-4
    assert np.max(np.abs(sol.values[k][on_line][mask] / oracle[mask] - 1.0)) < 0.02
