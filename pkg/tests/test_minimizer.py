import numpy as np
import pytest

from frontspeed.energy import Grid, Profile
from frontspeed.minimizer import MinimizeConfig, default_init, minimize, random_init, residual
from frontspeed.speed import m_tol

C_EXACT = np.sqrt(2) * 0.25


def test_below_speed_energy_is_negative(cubic, grid40, cubic_constants):
    res = minimize(cubic, grid40, 0.9 * C_EXACT, constants=cubic_constants)
    assert res.converged
    assert res.energy < -m_tol(cubic, grid40, 0.9 * C_EXACT)
    assert res.energy == pytest.approx(-81.06304598000112, rel=1e-6)


def test_above_speed_energy_is_positive_from_random_starts(cubic, grid40, cubic_constants):
    rng = np.random.default_rng(0)
    for _ in range(5):
        res = minimize(cubic, grid40, 1.1 * C_EXACT, None, random_init(cubic, grid40, rng), cubic_constants)
        assert res.energy > 0.0
        assert res.energy == pytest.approx(2.8932e-07, rel=1e-4)


def test_exact_wave_is_a_fixed_point(cubic, grid40, wave_profile, cubic_constants):
    res = minimize(cubic, grid40, C_EXACT, None, wave_profile, cubic_constants)
    assert res.converged and res.iterations <= 5
    assert abs(res.energy) <= 1e-3 * abs(cubic.depth) / C_EXACT


def test_residual_floor(cubic, grid40, wave_profile):
    assert residual(wave_profile, cubic, C_EXACT) <= 5e-4
    flat = Profile(grid40, np.zeros((grid40.n, 1)), cubic.a_plus, cubic.a_plus, pinned=False)
    assert residual(flat, cubic, 0.7) == 0.0


def test_converged_residual_within_ten_times_floor(cubic, grid40, cubic_constants, wave_profile):
    res = minimize(cubic, grid40, C_EXACT, MinimizeConfig(grad_tol=1e-10), "default", cubic_constants)
    assert res.ode_residual <= 10 * max(residual(wave_profile, cubic, C_EXACT), 5e-4)


def test_energy_history_nonincreasing(cubic, grid40, cubic_constants):
    res = minimize(cubic, grid40, 0.8 * C_EXACT, constants=cubic_constants)
    h = np.array(res.energy_history)
    assert np.all(np.diff(h) <= 1e-9 * np.abs(h[:-1]) + 1e-12)


def test_planar_minimizer_runs(planar, grid40):
    res = minimize(planar, grid40, 0.3)
    assert res.converged
    assert res.energy < 0.0


def test_default_init_is_a_ramp(cubic, grid40):
    p = default_init(cubic, grid40)
    assert p.values[0, 0] == 1.0 and p.values[-1, 0] == 0.0
    assert np.all(np.diff(p.values[:, 0]) <= 0)


def test_invalid_onset(cubic, grid40):
    with pytest.raises(ValueError, match="constraint onset"):
        minimize(cubic, grid40, 0.3, MinimizeConfig(T=50.0))


def test_foreign_init_grid(cubic, grid40):
    other = default_init(cubic, Grid(-10.0, 10.0, 11))
    with pytest.raises(ValueError, match="different grid"):
        minimize(cubic, grid40, 0.3, None, other)
