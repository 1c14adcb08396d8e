import numpy as np
import pytest

from frontspeed.energy import Grid, Profile
from frontspeed.potential import make_tilted_cubic
from frontspeed.speed import (SpeedError, bisect_speed, bisect_with_window_doubling, bracket_bound, decay_rate,
                              scaled_run, scan, sign_changes, speed_formula, transition_time_bounds)

C_EXACT = np.sqrt(2) * 0.25


def test_bisection_recovers_closed_form(cubic_speed):
    assert cubic_speed.c_star == pytest.approx(C_EXACT, rel=1e-2)
    assert cubic_speed.c_star == pytest.approx(0.3535326154779106, abs=1e-12)
    lo, hi = cubic_speed.bracket
    assert hi - lo <= 1e-4


def test_formula_on_exact_wave(cubic, wave_profile):
    assert speed_formula(wave_profile, cubic) == pytest.approx(C_EXACT, abs=1e-6)
    du = np.diff(wave_profile.values[:, 0])
    assert np.sum(du * du) / wave_profile.grid.dt == pytest.approx(1 / (6 * np.sqrt(2)), rel=1e-5)


def test_formula_rejects_constant_profile(cubic, grid40):
    flat = Profile(grid40, np.zeros((grid40.n, 1)), cubic.a_plus, cubic.a_plus, pinned=False)
    with pytest.raises(SpeedError, match="degenerate"):
        speed_formula(flat, cubic)


def test_formula_agrees_on_minimizer(cubic_speed):
    assert abs(cubic_speed.formula_speed - cubic_speed.c_star) / cubic_speed.c_star <= 1e-2


def test_second_parameter(cubic04_speed):
    assert cubic04_speed.c_star == pytest.approx(np.sqrt(2) * 0.1, rel=1e-2)
    assert cubic04_speed.c_star == pytest.approx(0.14137837901649963, abs=1e-10)


def test_near_balanced_speed_is_small():
    # the length scale 1/c* is ~70 here, so the window has to be wide
    res = bisect_speed(make_tilted_cubic(0.49), Grid(-200.0, 200.0, 4001))
    assert 0.0 < res.c_star < 0.03


def test_plateau_speed_and_formula(plateau_speed):
    assert plateau_speed.c_star > 0
    assert abs(plateau_speed.formula_speed - plateau_speed.c_star) / plateau_speed.c_star <= 0.02
    assert plateau_speed.c_star == pytest.approx(0.17335106356663074, abs=1e-10)


def test_decay_fit_on_exact_wave(cubic, wave_profile):
    fit = decay_rate(wave_profile, cubic, C_EXACT)
    assert fit.rate == pytest.approx(1 / np.sqrt(2), rel=0.05)
    assert fit.predicted == pytest.approx(1 / np.sqrt(2), rel=1e-12)
    assert fit.rate > C_EXACT / 2


def test_decay_fit_needs_a_tail(cubic, grid40):
    flat = Profile(grid40, np.zeros((grid40.n, 1)), cubic.a_plus, cubic.a_plus, pinned=False)
    with pytest.raises(SpeedError):
        decay_rate(flat, cubic, 0.3)


def test_bracket_bound(cubic, cubic_constants):
    b = bracket_bound(cubic, cubic_constants)
    assert b >= C_EXACT
    assert b == pytest.approx(0.7178182048266355, rel=1e-9)


def test_bracket_bound_scaling(cubic_constants):
    class Pot:
        depth = -0.02

    b1 = bracket_bound(Pot, cubic_constants)
    Pot.depth = -0.04
    assert bracket_bound(Pot, cubic_constants) == pytest.approx(np.sqrt(2) * b1)
    Pot.depth = -1e-16
    assert bracket_bound(Pot, cubic_constants) < 1e-7


def test_transition_time_bounds():
    T1, _, _ = transition_time_bounds(0.35, 1.0, 0.5, -1.0, 0.01)
    assert T1 == pytest.approx((0.7 + 2 * np.sqrt(1.1225)) / 0.5, rel=1e-12)
    assert T1 == pytest.approx(5.638, abs=1e-3)
    _, T2, Tss = transition_time_bounds(0.353553, 1.0, 0.5, -1.0 / 24.0, 0.01)
    assert T2 == pytest.approx(np.log(5.16666666) / 0.353553, rel=1e-8)
    assert T2 == pytest.approx(4.644, abs=1e-3)
    assert transition_time_bounds(0.35, 1.0, 1e12, -1.0, 0.01)[0] < 1e-5
    with pytest.raises(ValueError):
        transition_time_bounds(0.35, 1.0, 0.5, 0.1, 0.01)


def test_scan_single_sign_change(cubic, grid40, cubic_constants):
    rows = scan(cubic, grid40, np.linspace(0.9, 1.1, 21) * 0.3535326154779106, constants=cubic_constants)
    assert sign_changes(rows) == 1
    assert [r[3] for r in rows] == [True] * 10 + [False] * 11


def test_scan_above_bound_is_positive(cubic, grid40, cubic_constants):
    b = bracket_bound(cubic, cubic_constants)
    rows = scan(cubic, grid40, np.linspace(1.6 * b, 2.0 * b, 5), constants=cubic_constants)
    assert all(r[1] > 0 for r in rows)


def test_sign_change_stable_under_refinement(cubic, cubic_constants, cubic_speed):
    for n in (2001, 8001):
        r = bisect_speed(cubic, Grid(-40.0, 40.0, n), c_tol=1e-4, constants=cubic_constants)
        assert abs(r.c_star - cubic_speed.c_star) <= 1e-4


def test_scaling_covariance(cubic, grid40):
    # s^2 W on a grid compressed by 1/s has speed s c*
    r = scaled_run(cubic, grid40, 2.0, c_tol=1e-4)
    assert r.c_star == pytest.approx(2.0 * C_EXACT, rel=1e-2)


def test_invalid_bracket_reported(cubic, grid40, cubic_constants):
    with pytest.raises(SpeedError, match="bracket invalid"):
        bisect_speed(cubic, grid40, c_tol=1e-4, constants=cubic_constants, c_hi=0.2)


def test_window_doubling_stabilises(cubic, cubic_constants):
    short, long = bisect_with_window_doubling(cubic, 20.0, 0.02, c_tol=1e-4, constants=cubic_constants)
    assert long.profile.grid.t_max == 2 * short.profile.grid.t_max
    assert abs(long.c_star - short.c_star) <= 1e-4
