import dataclasses

import numpy as np
import pytest
from scipy.optimize import brentq

from frontspeed.energy import Grid, Profile
from frontspeed.geometry import (SublevelSet, branch_of, project_sublevel, project_tube, transition_markers,
                                 truncation_map)
from frontspeed.speed import transition_time_bounds


def test_member_is_fixed(cubic):
    s = SublevelSet(cubic, -1.0 / 48.0, "minus")
    u = np.array([[0.9], [1.0], [1.1]])
    assert np.array_equal(project_sublevel(s, u), u)


def test_scalar_projection_hits_the_level_root(cubic):
    s = SublevelSet(cubic, -1.0 / 48.0, "minus")
    left = brentq(lambda x: cubic.eval(np.array([[x]]))[0] + 1.0 / 48.0, 0.25, 1.0, xtol=1e-15)
    out = project_sublevel(s, np.array([[0.5]]))[0, 0]
    assert out == pytest.approx(left, abs=1e-12)
    assert out == pytest.approx(0.6914326863678975, abs=1e-12)


def test_empty_sublevel_rejected(cubic):
    with pytest.raises(ValueError):
        SublevelSet(cubic, cubic.depth - 1e-3, "minus")


def test_planar_projection_lands_on_level(planar):
    h = 0.5 * planar.depth
    s = SublevelSet(planar, h, "minus")
    rng = np.random.default_rng(2)
    u = rng.uniform(-0.3, 0.3, size=(200, 2))
    p = project_sublevel(s, u)
    outside = ~s.contains(u)
    assert outside.any()
    assert np.allclose(planar.eval(p[outside]), h, atol=1e-10)
    # KKT: u - P(u) is parallel to grad W at P(u)
    g = planar.grad(p[outside])
    r = u[outside] - p[outside]
    cross = g[:, 0] * r[:, 1] - g[:, 1] * r[:, 0]
    assert np.max(np.abs(cross)) < 1e-8
    assert np.all(np.sum(g * r, axis=1) > 0)


def test_projection_nonexpansive_and_idempotent(planar, cubic):
    rng = np.random.default_rng(4)
    for pot, lo, hi in ((planar, -0.3, 0.3), (cubic, 0.2, 1.6)):
        s = SublevelSet(pot, 0.5 * pot.depth, "minus")
        x = rng.uniform(lo, hi, size=(2000, pot.dim))
        y = rng.uniform(lo, hi, size=(2000, pot.dim))
        px, py = project_sublevel(s, x), project_sublevel(s, y)
        assert np.all(np.linalg.norm(px - py, axis=1) <= np.linalg.norm(x - y, axis=1) + 1e-12)
        assert np.allclose(project_sublevel(s, px), px, atol=1e-12)


def test_tube_projection(cubic):
    out = project_tube(cubic, np.array([[0.5], [0.05], [-0.3]]), 0.1)
    assert np.allclose(out[:, 0], [0.1, 0.05, -0.1])


def test_truncation_scaling(planar):
    pot = dataclasses.replace(planar, growth_radius=2.0)
    assert np.allclose(truncation_map(pot, np.array([[3.0, 4.0]])), [[1.2, 1.6]])
    inside = np.array([[0.5, -0.5]])
    assert np.array_equal(truncation_map(pot, inside), inside)


@pytest.mark.parametrize("name", ["cubic", "planar", "plateau"])
def test_truncation_lowers_potential(name, request):
    pot = request.getfixturevalue(name)
    rng = np.random.default_rng(5)
    R = pot.growth_radius
    d = rng.standard_normal((10_000, pot.dim))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    u = d * rng.uniform(R, 4 * R, size=(10_000, 1))
    tu = truncation_map(pot, u)
    assert np.all(pot.eval(tu) <= pot.eval(u) + 1e-12)
    # 1-Lipschitz and identity on the minima sets
    v = d[::-1] * rng.uniform(0, 4 * R, size=(10_000, 1))
    assert np.all(np.linalg.norm(tu - truncation_map(pot, v), axis=1) <= np.linalg.norm(u - v, axis=1) + 1e-12)
    for m in (pot.minima_minus, pot.minima_plus):
        assert np.array_equal(truncation_map(pot, m.samples), m.samples)


def test_branch_assignment(cubic):
    assert list(branch_of(cubic, np.array([[0.9], [0.1]]))) == [True, False]


def test_markers_on_exact_wave(cubic, wave_profile, cubic_constants):
    K = cubic_constants
    c = np.sqrt(2) * 0.25
    m = transition_markers(wave_profile, cubic, K)
    assert m.t1_minus is not None and m.t2_minus is not None and m.t_plus is not None
    assert m.t1_minus <= m.t2_minus <= m.t_plus
    _, _, Tss = transition_time_bounds(c, K.R, K.omega, cubic.depth, K.alpha_ss)
    assert m.t_plus - m.t1_minus <= Tss


def test_markers_absent_on_constant_profiles(cubic, grid40, cubic_constants):
    plus = Profile(grid40, np.zeros((grid40.n, 1)), cubic.a_plus, cubic.a_plus, pinned=False)
    minus = Profile(grid40, np.ones((grid40.n, 1)), cubic.a_minus, cubic.a_minus, pinned=False)
    assert transition_markers(plus, cubic, cubic_constants).t1_minus is None
    assert transition_markers(minus, cubic, cubic_constants).t_plus is None
