import math

import numpy as np
import pytest
from scipy.integrate import quad

from fptdensity import geometry as g
from fptdensity.errors import PreconditionError

TOL_FLOW = 1e-8


def _domain(boundary, field, horizon=1.0, marker=(0.0, 0.0)):
    return g.MovingDomain(boundary=boundary, marker=marker,
                          flow=g.FlowMap(field), horizon=horizon)


def all_fields():
    return {
        "zero": g.zero_field(),
        "translation": g.translation_field((0.7, -0.2)),
        "rotation": g.rotation_field(1.3, center=(0.1, 0.0)),
        "scaling": g.scaling_field([-0.3, 0.1], center=(0.0, 0.0)),
        "composite": g.composite_field(g.translation_field((0.2, 0.0)),
                                       g.rotation_field(-0.8)),
    }


def test_advance_examples():
    fl = g.FlowMap(g.translation_field((1.0, 0.0)))
    assert np.allclose(fl.advance(np.array([0.0, 0.0]), 0.0, 1.0), [1.0, 0.0])
    flz = g.FlowMap(g.zero_field())
    assert np.allclose(flz.advance(np.array([0.3, -0.4]), 0.2, 0.9), [0.3, -0.4])
    flr = g.FlowMap(g.rotation_field(np.pi / 2.0))
    got = flr.advance(np.array([1.0, 0.0]), 0.0, 1.0)
    assert np.linalg.norm(got - [0.0, 1.0]) < 1e-8  # exact rotation oracle


def test_inverse_examples():
    fl = g.FlowMap(g.translation_field((1.0, 0.0)))
    assert np.allclose(fl.inverse(np.array([1.0, 0.0]), 1.0, 0.0), [0.0, 0.0])
    flr = g.FlowMap(g.rotation_field(np.pi / 2.0))
    got = flr.inverse(np.array([0.0, 1.0]), 1.0, 0.0)
    assert np.linalg.norm(got - [1.0, 0.0]) < 1e-8


@pytest.mark.parametrize("name", list(all_fields()))
def test_flow_identity_composition_inversion(name, rng):
    fl = g.FlowMap(all_fields()[name], step_dt=1e-3)
    pts = rng.uniform(-1.0, 1.0, size=(12, 2))
    assert np.max(np.abs(fl.advance(pts, 0.4, 0.4) - pts)) == 0.0
    via = fl.advance(fl.advance(pts, 0.0, 0.37), 0.37, 1.0)
    direct = fl.advance(pts, 0.0, 1.0)
    assert np.max(np.linalg.norm(via - direct, axis=-1)) < TOL_FLOW
    back = fl.inverse(fl.advance(pts, 0.0, 1.0), 1.0, 0.0)
    assert np.max(np.linalg.norm(back - pts, axis=-1)) < TOL_FLOW


def test_exact_flows_match_rk4(rng):
    for name, field in all_fields().items():
        exact = field.exact_flow()
        if exact is None:
            continue
        fl = g.FlowMap(field, step_dt=1e-3)
        pts = rng.uniform(-1.0, 1.0, size=(6, 2))
        assert np.max(np.abs(exact(pts, 0.0, 0.8) - fl.advance(pts, 0.0, 0.8))) < 1e-9


def test_lipschitz_bounds():
    assert g.translation_field((3.0, 1.0)).lipschitz_bound(0, 1) == 0.0
    assert g.rotation_field(1.3).lipschitz_bound(0, 1) == pytest.approx(1.3)
    assert g.scaling_field([-0.5, 0.25]).lipschitz_bound(0, 1) == pytest.approx(0.5)


def test_circle_slice_weights_spectrally_exact(static_disk):
    sl = static_disk.boundary_at(0.63, 64)
    assert sl.length == pytest.approx(2 * np.pi, abs=1e-10)
    assert np.max(np.abs(np.linalg.norm(sl.normals, axis=1) - 1.0)) < 1e-12
    assert np.max(np.abs(sl.normals - sl.nodes)) < 1e-10  # radial normals


def test_translated_circle_slice():
    dom = _domain(g.circle(1.0), g.translation_field((1.0, 0.0)))
    sl = dom.boundary_at(1.0, 64)
    center = np.array([1.0, 0.0])
    assert np.max(np.abs(np.linalg.norm(sl.nodes - center, axis=1) - 1.0)) < 1e-8
    radial = (sl.nodes - center)
    assert np.max(np.abs(sl.normals - radial / np.linalg.norm(radial, axis=1)[:, None])) < 1e-8


def test_ellipse_perimeter_against_quadrature_oracle():
    dom = _domain(g.ellipse(2.0, 1.0), g.zero_field())
    sl = dom.boundary_at(0.0, 128)
    oracle, _ = quad(lambda u: math.hypot(-2.0 * math.sin(u), math.cos(u)),
                     0.0, 2.0 * np.pi, limit=200)
    assert sl.length == pytest.approx(oracle, abs=1e-6)
    assert sl.length == pytest.approx(9.688448, abs=1e-6)


@pytest.mark.parametrize("boundary", [g.ellipse(1.4, 0.7), g.smooth_star(1.0, 0.2, 5)])
def test_length_refinement_order(boundary):
    dom = _domain(boundary, g.zero_field())
    lengths = {m: dom.boundary_at(0.0, m).length for m in (32, 64, 128, 256)}
    ref = dom.boundary_at(0.0, 1024).length
    e1, e2 = abs(lengths[32] - ref), abs(lengths[64] - ref)
    assert math.log2(e1 / e2) >= 2.0  # super-algebraic in practice


def test_lemma1_circle_radii():
    for radius, expect in ((1.0, 0.5), (2.0, 0.25)):
        dom = _domain(g.circle(radius), g.zero_field())
        c = g.lemma1_constant(dom.boundary_at(0.0, 128))
        assert c == pytest.approx(expect, rel=0.02)
    # near-straight limit: circle of radius 10 (ellipse(10, 10))
    dom = _domain(g.ellipse(10.0, 10.0), g.zero_field())
    c = g.lemma1_constant(dom.boundary_at(0.0, 128))
    assert c <= 0.05 * 1.02


def test_lemma2_examples(static_disk):
    x = np.array([1.0, 0.0])
    assert g.lemma2_integral(static_disk, x, 0.5, 0.5 - 1e-4) == pytest.approx(1.0, abs=5e-3)
    domt = _domain(g.circle(1.0), g.translation_field((1.0, 0.0)))
    slt = domt.boundary_at(1.0, 64)
    assert g.lemma2_integral(domt, slt.nodes[3], 1.0, 1.0 - 1e-4) == pytest.approx(1.0, abs=5e-3)


def test_lemma2_large_gap_below_one():
    dom = _domain(g.circle(1.0), g.zero_field(), horizon=5.0)
    val = g.lemma2_integral(dom, np.array([1.0, 0.0]), 4.2, 0.1, m=256)
    assert val < 1.0


def test_lemma2_monotone_refinement(static_disk):
    x = np.array([1.0, 0.0])
    errs = [abs(g.lemma2_integral(static_disk, x, 0.5, 0.5 - 1e-3, m=m) - 1.0)
            for m in (256, 512, 1024)]
    assert errs[1] <= errs[0] + 1e-12 and errs[2] <= errs[1] + 1e-12


def test_contains_examples(static_disk):
    assert static_disk.contains((0.0, 0.0), 0.4)
    assert not static_disk.contains((2.0, 0.0), 0.4)
    domt = _domain(g.circle(1.0), g.translation_field((1.0, 0.0)))
    assert domt.contains((1.5, 0.0), 1.0)
    assert not domt.contains((-0.5, 0.0), 1.0)


@pytest.mark.parametrize("boundary,marker", [
    (g.circle(1.0), (0.0, 0.0)),
    (g.ellipse(1.4, 0.7), (0.0, 0.0)),
    (g.smooth_star(1.0, 0.2, 5), (0.0, 0.0)),
    (g.flat_capsule(), (0.0, 10.0)),
])
def test_normals_outward_everywhere(boundary, marker):
    dom = _domain(boundary, g.rotation_field(0.7) if boundary.kind != "flat_capsule"
                  else g.zero_field(), marker=marker)
    eps = 1e-6 * dom.diameter
    for t in (0.0, 0.5, 1.0):
        sl = dom.boundary_at(t, 64)
        assert not np.any(dom.contains(sl.nodes + eps * sl.normals, t))
        assert np.all(dom.contains(sl.nodes - eps * sl.normals, t))


def test_marker_stays_inside_moving():
    dom = _domain(g.circle(1.0), g.scaling_field([-0.35]))
    for t in np.linspace(0.0, 1.0, 9):
        assert dom.contains(dom.marker_at(t), t)


def test_capsule_flat_segment_exact():
    cap = g.flat_capsule()
    dom = _domain(cap, g.zero_field(), marker=(0.0, 10.0), horizon=0.5)
    sl = dom.boundary_at(0.0, 192)
    on_line = np.abs(sl.nodes[:, 1]) < 1e-13
    assert np.sum(on_line) > 64
    assert np.max(np.abs(sl.normals[on_line] - [0.0, -1.0])) < 1e-12
    assert np.max(np.abs(sl.nodes[on_line, 0])) <= 10.0 + 1e-9


def test_velocity_sup_bound():
    dom = _domain(g.circle(1.0), g.translation_field((0.3, 0.4)))
    assert dom.velocity_sup_bound() == pytest.approx(0.5, rel=1e-12)
    domr = _domain(g.circle(2.0), g.rotation_field(1.5))
    assert domr.velocity_sup_bound() == pytest.approx(3.0, rel=1e-3)


def test_preconditions():
    with pytest.raises(PreconditionError):
        _domain(g.circle(1.0), g.zero_field(), marker=(2.0, 0.0))
    dom = _domain(g.circle(1.0), g.zero_field())
    with pytest.raises(PreconditionError):
        dom.boundary_at(0.5, 4)
    with pytest.raises(PreconditionError):
        g.FlowMap(g.zero_field()).advance(np.zeros(2), 1.0, 0.5)
    with pytest.raises(PreconditionError):
        g.smooth_star(1.0, 1.2, 3)


def test_grid_matches_boundary_at():
    dom = _domain(g.ellipse(1.2, 0.8), g.rotation_field(0.9))
    times = np.linspace(0.0, 1.0, 11)
    grid = dom.grid(times, 48)
    direct = dom.boundary_at(times[7], 48)
    assert np.max(np.abs(grid[7].nodes - direct.nodes)) < 1e-9
    assert np.max(np.abs(grid[7].normals - direct.normals)) < 1e-8
