import math

import numpy as np
import pytest
from scipy.integrate import quad

from fptdensity import analytic as an
from fptdensity.errors import MoreTermsNeededError


@pytest.fixture(scope="module")
def table():
    return an.default_table()


def test_first_zeros_pinned(table):
    assert table.zeros[0] == pytest.approx(2.404826, abs=1e-6)
    assert table.zeros[1] == pytest.approx(5.520078, abs=1e-6)


def test_zeros_against_scipy(table):
    from scipy.special import j1, jn_zeros
    ref = jn_zeros(0, len(table))
    assert np.max(np.abs(table.zeros - ref)) < 5e-9
    assert np.max(np.abs(table.j1_at_zeros - j1(ref))) < 1e-9


def test_zeros_at_doubled_precision(table):
    """Cross-check a spread of tabulated zeros with mpmath at 30 digits."""
    mp = pytest.importorskip("mpmath")
    mp.mp.dps = 30
    for k in (1, 2, 3, 10, 50, 200):
        ref = float(mp.besseljzero(0, k))
        assert table.zeros[k - 1] == pytest.approx(ref, abs=5e-9)


def test_bessel_eval_accuracy():
    from scipy.special import j0, j1
    x = np.linspace(0.01, 80.0, 4001)   # spans the series/asymptotic switch
    assert np.max(np.abs(an.bessel_j0(x) - j0(x))) < 1e-9
    assert np.max(np.abs(an.bessel_j1(x) - j1(x))) < 1e-9


def test_disk_density_recomputed_value():
    # first two terms dominate at t = 1; recomputed from the series
    assert an.disk_fpt_density(1.0, 1.0) == pytest.approx(0.257030, abs=2e-5)


def test_disk_survival_initial_mass():
    assert an.disk_survival(1.0, 1e-3) == pytest.approx(1.0, abs=1e-6)


def test_disk_scaling_law(rng):
    for t in rng.uniform(0.05, 2.0, size=8):
        f2 = an.disk_fpt_density(2.0, t)
        f1 = an.disk_fpt_density(1.0, t / 4.0)
        assert f2 == pytest.approx(f1 / 4.0, rel=1e-12)


def test_survival_derivative_matches_density():
    for t in (0.2, 0.5, 1.0, 2.0):
        h = 1e-5 * t
        dS = (an.disk_survival(1.0, t + h) - an.disk_survival(1.0, t - h)) / (2 * h)
        assert -dS == pytest.approx(an.disk_fpt_density(1.0, t), rel=1e-6)


def test_disk_more_terms_needed():
    with pytest.raises(MoreTermsNeededError):
        an.disk_survival(1.0, 1e-7)
    with pytest.raises(MoreTermsNeededError):
        an.disk_fpt_density(1.0, 0.05, n_max=3)


def test_halfplane_pinned_and_symmetry():
    val = an.halfplane_joint_density(1.0, 0.0, 1.0)
    assert val == pytest.approx(math.exp(-0.5) / (2 * np.pi), abs=1e-12)
    x = np.linspace(-3, 3, 31)
    assert np.allclose(an.halfplane_joint_density(1.0, x, 0.7),
                       an.halfplane_joint_density(1.0, -x, 0.7))


def test_halfplane_x_marginal_is_level_density():
    # integrating out x recovers the 1-d level-hitting density exactly
    for t in (0.1, 0.5, 2.0):
        marg, _ = quad(lambda x: an.halfplane_joint_density(1.0, x, t), -np.inf, np.inf)
        assert marg == pytest.approx(float(an.halfplane_level_density(1.0, t)), abs=1e-10)


def test_halfplane_total_mass_one():
    total, _ = quad(lambda t: float(an.halfplane_level_density(1.0, t)),
                    1e-8, np.inf, limit=400)
    assert total == pytest.approx(1.0, abs=1e-4)


def test_oracles_positive(rng):
    ts = rng.uniform(0.05, 3.0, size=16)
    assert np.all(an.disk_fpt_density(1.0, ts) > 0.0)
    assert np.all(an.disk_survival(1.0, ts) > 0.0)
    assert np.all(an.halfplane_joint_density(1.0, rng.normal(size=16), 0.5) > 0.0)


def test_input_validation():
    with pytest.raises(ValueError):
        an.halfplane_joint_density(-1.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        an.halfplane_joint_density(1.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        an.disk_survival(1.0, 0.0)
