import numpy as np
import pytest

from frontspeed.energy import (EnergyError, Grid, Profile, blocks_to_banded, energy, energy_gradient,
                               energy_value, gradient_arrays, hessian_blocks, left_tail, translate,
                               translation_identity_check, weighted_gradient_norm)
from frontspeed.potential import nagumo_wave


def constant(grid, value, pot):
    v = np.tile(np.atleast_1d(value), (grid.n, 1)).astype(float)
    return Profile(grid, v, value, value)


def test_constant_plus_profile_has_zero_energy(cubic, planar):
    for pot in (cubic, planar):
        for c in (0.1, 1.0):
            g = Grid(-5.0, 7.0, 301)
            rep = energy(constant(g, pot.a_plus, pot), pot, c)
            assert abs(rep.total) <= 1e-14
            # the planar well is located numerically, so its gradient is only ~1e-13
            assert np.max(np.abs(energy_gradient(constant(g, pot.a_plus, pot), pot, c))) <= 1e-9


def test_constant_minus_profile_matches_closed_form(cubic):
    g = Grid(-10.0, 1e-12, 2001)
    rep = energy(constant(g, cubic.a_minus, cubic), cubic, 1.0)
    closed = cubic.depth * (1.0 - np.exp(-10.0))
    assert rep.potential == pytest.approx(-0.04166473160219258, rel=1e-12)
    assert rep.potential == pytest.approx(closed, rel=1e-5)
    assert rep.kinetic == 0.0


def test_left_tail_is_discrete_geometric_sum():
    g = Grid(-3.0, 2.0, 51)
    dt = g.dt
    m = g.t_min - dt * (np.arange(200000) + 0.5)
    direct = np.sum(-0.2 * np.exp(0.7 * m) * dt)
    assert left_tail(g, 0.7, -0.2) == pytest.approx(direct, rel=1e-12)
    assert left_tail(g, 0.7, -0.2) == pytest.approx(-0.2 * np.exp(0.7 * g.t_min) / 0.7, rel=1e-3)


def test_exact_wave_has_near_zero_energy(cubic, wave_profile):
    c = np.sqrt(2) * 0.25
    rep = energy(wave_profile, cubic, c)
    assert abs(rep.total) <= 1e-3 * abs(cubic.depth) / c
    assert rep.total == pytest.approx(3.7426244647864593e-07, rel=1e-6)


def test_exact_wave_is_nearly_critical(cubic, wave_profile):
    c = np.sqrt(2) * 0.25
    g = energy_gradient(wave_profile, cubic, c)
    assert weighted_gradient_norm(g, wave_profile.grid, c) <= 1e-3


def test_gradient_against_central_differences(cubic):
    rng = np.random.default_rng(0)
    g = Grid(-4.0, 4.0, 81)
    u = np.clip(0.5 - 0.5 * np.tanh(g.t) + 0.05 * rng.standard_normal(g.n), -0.2, 1.2)[:, None]
    c = 0.4
    grad = gradient_arrays(u, g, cubic, c, pinned=False)
    for _ in range(20):
        d = rng.standard_normal(u.shape)
        h = 1e-5
        fd = (energy_value(u + h * d, g, cubic, c) - energy_value(u - h * d, g, cubic, c)) / (2 * h)
        assert abs(np.sum(grad * d) - fd) <= 1e-6 * max(abs(fd), 1e-8)


def test_hessian_matches_gradient_differences(planar):
    rng = np.random.default_rng(1)
    g = Grid(-3.0, 3.0, 31)
    u = rng.uniform(-0.2, 1.2, size=(g.n, 2))
    c = 0.5
    diag, off = hessian_blocks(u, g, planar, c)
    n, k = u.shape
    H = np.zeros((n * k, n * k))
    for j in range(n):
        H[j * k:(j + 1) * k, j * k:(j + 1) * k] = diag[j]
    for j in range(n - 1):
        H[j * k:(j + 1) * k, (j + 1) * k:(j + 2) * k] = off[j]
        H[(j + 1) * k:(j + 2) * k, j * k:(j + 1) * k] = off[j].T
    d = rng.standard_normal(u.shape)
    h = 1e-6
    fd = (gradient_arrays(u + h * d, g, planar, c, False) - gradient_arrays(u - h * d, g, planar, c, False)) / (2 * h)
    assert np.allclose(H @ d.reshape(-1), fd.reshape(-1), rtol=1e-6, atol=1e-8)
    # banded storage reproduces the dense upper triangle
    ab = blocks_to_banded(diag, off)
    bw = ab.shape[0] - 1
    for dd in range(bw + 1):
        assert np.allclose(ab[bw - dd, dd:], np.diagonal(H, dd))


def test_weight_overflow_is_rejected(cubic):
    g = Grid(-10.0, 800.0, 11)
    with pytest.raises(EnergyError, match="domain too long"):
        energy(constant(g, cubic.a_plus, cubic), cubic, 1.0)


def test_nonfinite_profile_is_rejected(cubic):
    g = Grid(-1.0, 1.0, 11)
    p = constant(g, cubic.a_plus, cubic)
    p.values[3, 0] = np.nan
    with pytest.raises(EnergyError):
        energy(p, cubic, 0.3)


def test_translate_pads_with_anchors():
    v = np.arange(6.0)[:, None]
    assert np.allclose(translate(v, 2, np.array([-1.0]), np.array([9.0]))[:, 0], [2, 3, 4, 5, 9, 9])
    assert np.allclose(translate(v, -2, np.array([-1.0]), np.array([9.0]))[:, 0], [-1, -1, 0, 1, 2, 3])


def test_translation_identity(cubic, grid40):
    # a wave that is exactly flat for the shifted cells
    c = np.sqrt(2) * 0.25
    t = grid40.t
    u = np.clip(0.5 - t / 10.0, 0.0, 1.0)[:, None]
    prof = Profile(grid40, u, cubic.a_minus, cubic.a_plus)
    assert translation_identity_check(prof, cubic, c, 0) == 0.0
    for m in (1, 5, 10):
        assert translation_identity_check(prof, cubic, c, m) <= 1e-8
        assert translation_identity_check(prof, cubic, c, -m) <= 1e-8


def test_translation_identity_refuses_non_flat_tails(cubic):
    _, f = nagumo_wave(0.25)
    prof = Profile.from_function(Grid(-10.0, 10.0, 201), f, cubic)
    with pytest.raises(ValueError, match="tail-flat"):
        translation_identity_check(prof, cubic, 0.3, 10)
