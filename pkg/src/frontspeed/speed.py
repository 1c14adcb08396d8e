"""Wave speed by bisection on the sign of the constrained minimum, and related bounds."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.integrate import simpson

from .energy import MAX_EXPONENT, Grid, Profile
from .minimizer import MinimizeConfig, MinimizeResult, minimize
from .potential import PotentialModel

C_HI_INFLATION = 1.5
EXPONENT_MARGIN = 690.0
POLISH_TOL = 1e-10


class SpeedError(RuntimeError):
    pass


@dataclass
class DecayFit:
    rate: float
    predicted: float
    t_window: tuple
    nodes: int


@dataclass
class SpeedResult:
    c_star: float
    bracket: tuple
    formula_speed: float
    profile: Profile
    decay_rate: float
    decay_predicted: float
    energy: float
    m_tol: float
    shooting_speed: Optional[float] = None
    pde_speed: Optional[float] = None
    history: list = field(default_factory=list)  # (c, m(c), m_tol(c), in_D)
    profile_c: Optional[float] = None  # speed at which the reported profile was computed

    def to_record(self) -> dict:
        return {
            "c_star": self.c_star, "bracket": list(self.bracket), "formula_speed": self.formula_speed,
            "shooting_speed": self.shooting_speed, "pde_speed": self.pde_speed,
            "decay_rate": self.decay_rate, "decay_predicted": self.decay_predicted,
            "energy": self.energy, "m_tol": self.m_tol, "profile_c": self.profile_c,
            "history": [list(h) for h in self.history],
        }


def m_tol(potential: PotentialModel, grid: Grid, c: float) -> float:
    """Energy-scale tolerance for the sign of the constrained minimum."""
    return 1e-6 * abs(potential.depth) * (np.exp(c * grid.t_max) - np.exp(c * grid.t_min)) / c


def bracket_bound(potential: PotentialModel, constants) -> float:
    """sqrt(-2 depth) / d_alpha0, an upper bound for the speed."""
    d = float(constants.d_alpha0)
    if not d > 0:
        raise SpeedError(f"audit failure: d_alpha0 = {d} is not positive")
    return float(np.sqrt(-2.0 * potential.depth) / d)


def transition_time_bounds(c: float, R: float, omega: float, a: float, alpha_ss: float):
    """(T1, T2, T1 + T2): length bounds for the two transition phases of a minimiser."""
    if not (c > 0 and R > 0 and omega > 0 and a < 0 and alpha_ss > 0):
        raise ValueError("need c > 0, R > 0, omega > 0, a < 0, alpha_ss > 0")
    T1 = (2.0 * R * c + 2.0 * np.sqrt(R * R * c * c + 2.0 * R * omega)) / omega
    T2 = np.log(-a / alpha_ss + 1.0) / c
    return float(T1), float(T2), float(T1 + T2)


def speed_formula(profile: Profile, potential: PotentialModel) -> float:
    """-depth divided by the unweighted kinetic integral of |du/dt|^2.

    Fourth-order differences and Simpson's rule; the plain secant sum carries an
    O(dt^2) bias that is visible at the 1e-6 level on typical grids.
    """
    u = profile.values
    dt = profile.grid.dt
    du = np.gradient(u, dt, axis=0, edge_order=2)
    du[2:-2] = (-u[4:] + 8.0 * u[3:-1] - 8.0 * u[1:-3] + u[:-4]) / (12.0 * dt)
    kin = float(simpson(np.sum(du * du, axis=1), dx=dt))
    if kin < 1e-14:
        raise SpeedError("degenerate profile: kinetic integral vanishes")
    return -potential.depth / kin


def decay_rate(profile: Profile, potential: PotentialModel, c: float, floor: float = 1e-9,
               min_nodes: int = 20) -> DecayFit:
    """Least-squares exponential rate of the approach to the plus well on the right tail."""
    t = profile.grid.t
    d = potential.minima_plus.dist(profile.values)
    rho = potential.minima_plus.tube_radius
    # ignore the last 10% of the window, where the Dirichlet pin bends the tail
    cut = t < t[-1] - 0.1 * (t[-1] - t[0])
    sel = cut & (d <= 0.25 * rho) & (d > max(floor, 1e-12))
    # keep the first contiguous run after the profile enters the tube
    idx = np.flatnonzero(sel)
    if idx.size:
        breaks = np.flatnonzero(np.diff(idx) > 1)
        idx = idx[: breaks[0] + 1] if breaks.size else idx
    if idx.size < min_nodes:
        raise SpeedError(f"tail too short or below noise floor ({idx.size} usable nodes)")
    slope = np.polyfit(t[idx], np.log(d[idx]), 1)[0]
    H = np.atleast_2d(potential.hessian(potential.a_plus[None, :])[0])
    lam = float(np.linalg.eigvalsh(H)[0])
    predicted = 0.5 * (c + np.sqrt(c * c + 4.0 * lam))
    return DecayFit(float(-slope), float(predicted), (float(t[idx[0]]), float(t[idx[-1]])), int(idx.size))


def constants_for(potential: PotentialModel, samples: int = 10_000, seed: int = 0):
    """Audited constants, allowing inconclusive audits (fail raises)."""
    from .auditor import FAIL, AuditError, audit

    rep = audit(potential, samples, seed)
    if rep.status == FAIL:
        bad = [k for k, v in rep.verdicts.items() if v.status == FAIL and k != "boundary_condition"]
        raise AuditError(f"potential fails the audit: {', '.join(bad)}")
    if rep.constants is None:
        raise AuditError("; ".join(rep.notes))
    return rep.constants


def evaluate(potential, grid, c, config=None, constants=None, init="default"):
    """(minimise result, m_tol, in_D) at one speed."""
    res = minimize(potential, grid, c, config, init, constants)
    tol = m_tol(potential, grid, c)
    return res, tol, res.energy < -tol


def bisect_speed(potential: PotentialModel, grid: Grid, config: Optional[MinimizeConfig] = None,
                 c_tol: float = 1e-4, constants=None, c_hi: Optional[float] = None) -> SpeedResult:
    """Bisection on the predicate m(c) < -m_tol between c_tol and the inflated bracket bound."""
    if constants is None:
        constants = constants_for(potential)
    if c_hi is None:
        c_hi = C_HI_INFLATION * bracket_bound(potential, constants)
    c_hi = min(c_hi, EXPONENT_MARGIN / grid.t_max)
    c_lo = c_tol
    history = []

    def probe(c):
        res, tol, inside = evaluate(potential, grid, c, config, constants)
        history.append((c, res.energy, tol, inside))
        return res, tol, inside

    _, _, lo_in = probe(c_lo)
    _, _, hi_in = probe(c_hi)
    if not lo_in or hi_in:
        raise SpeedError("bracket invalid; increase domain or audit potential")
    while c_hi - c_lo > c_tol:
        mid = 0.5 * (c_lo + c_hi)
        _, _, inside = probe(mid)
        if inside:
            c_lo = mid
        else:
            c_hi = mid
    c_star = 0.5 * (c_lo + c_hi)
    # the reported profile is polished well past the sign-test tolerance so its tail is usable
    # below the discrete speed the minimiser is pressed against the right constraint; the
    # free wave is taken at the first speed >= c_star where that constraint is inactive
    polish = replace(config or MinimizeConfig(), grad_tol=POLISH_TOL)
    for k in range(12):
        c_prof = c_star if k == 0 else c_star + c_tol * 2.0 ** (k - 1)
        res, tol, _ = evaluate(potential, grid, c_prof, polish, constants)
        if not res.constraint_active_right:
            break
    try:
        fit = decay_rate(res.profile, potential, c_prof)
        rate, pred = fit.rate, fit.predicted
    except SpeedError:
        rate, pred = float("nan"), float("nan")
    return SpeedResult(
        c_star=c_star, bracket=(c_lo, c_hi), formula_speed=speed_formula(res.profile, potential),
        profile=res.profile, decay_rate=rate, decay_predicted=pred, energy=res.energy, m_tol=tol,
        history=history, profile_c=c_prof,
    )


def scan(potential: PotentialModel, grid: Grid, c_values, config: Optional[MinimizeConfig] = None,
         constants=None) -> list:
    """m(c) on a list of speeds: rows (c, m, m_tol, in_D)."""
    rows = []
    for c in c_values:
        res, tol, inside = evaluate(potential, grid, float(c), config, constants)
        rows.append((float(c), res.energy, tol, bool(inside)))
    return rows


def sign_changes(rows) -> int:
    flags = [r[3] for r in rows]
    return sum(1 for a, b in zip(flags, flags[1:]) if a != b)


def bisect_with_window_doubling(potential: PotentialModel, half_length: float, spacing: float,
                                c_tol: float = 1e-4, max_doublings: int = 3,
                                config: Optional[MinimizeConfig] = None, constants=None):
    """Repeat the bisection on [-L, L] with L doubled until c* moves by at most c_tol.

    Returns (result at L, result at 2L).
    """
    if constants is None:
        constants = constants_for(potential)
    L = float(half_length)
    prev = None
    for _ in range(max_doublings + 1):
        n = int(round(2 * L / spacing)) + 1
        grid = Grid(-L, L, n)
        if C_HI_INFLATION * bracket_bound(potential, constants) * L > MAX_EXPONENT:
            break
        cur = bisect_speed(potential, grid, config, c_tol, constants)
        if prev is not None and abs(cur.c_star - prev.c_star) <= c_tol:
            return prev, cur
        prev = cur
        L *= 2.0
    raise SpeedError("truncated speed did not stabilise under window doubling")


def scaled_run(potential: PotentialModel, grid: Grid, s: float, **kw) -> SpeedResult:
    """Bisection for s^2 W on the grid compressed by 1/s (same number of nodes)."""
    g = Grid(grid.t_min / s, grid.t_max / s, grid.n)
    return bisect_speed(potential.scaled(s * s), g, **kw)
