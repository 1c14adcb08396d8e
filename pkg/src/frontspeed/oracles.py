"""Independent speed estimates: shooting on the profile ODE and a parabolic time-stepper."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import solve_banded

from .potential import PotentialModel

OVERSHOOT = "overshoot"
UNDERSHOOT = "undershoot"


class OracleError(RuntimeError):
    pass


class DomainTooShort(OracleError):
    """The tracked front hit the boundary margin; carries the partial trajectory."""

    def __init__(self, msg: str, times: np.ndarray, positions: np.ndarray):
        super().__init__(msg)
        self.times = times
        self.positions = positions


@dataclass
class ShootingConfig:
    dt_ode: float = 0.01
    start_offset: float = 1e-7
    t_max: float = 400.0  # integration horizon in backward time

    def validate(self, potential: PotentialModel) -> None:
        if not self.dt_ode > 0:
            raise ValueError("dt_ode must be > 0")
        hi = 0.5 * potential.minima_plus.tube_radius
        if not 1e-10 < self.start_offset < hi:
            raise ValueError(f"start_offset must lie in (1e-10, {hi:.3g})")
        if not self.t_max > 0:
            raise ValueError("t_max must be > 0")


@dataclass
class Trajectory:
    s: np.ndarray  # backward time s = -t
    u: np.ndarray
    p: np.ndarray  # du/dt
    fate: str


def _scalar_fns(potential: PotentialModel):
    if potential.dim != 1:
        raise OracleError("shooting is only implemented for scalar potentials")

    def dW(x):
        return float(potential.grad(np.array([[x]]))[0, 0])

    return dW


def _plus_eigen(potential: PotentialModel, c: float):
    """Decay exponent at the plus well; the profile leaves it as e^{lam t} with lam < 0."""
    h = float(np.atleast_2d(potential.hessian(potential.a_plus[None, :])[0])[0, 0])
    if not h > 0:
        raise OracleError("plus well is not a hyperbolic rest point (W'' <= 0)")
    return -0.5 * (c + np.sqrt(c * c + 4.0 * h))


def shoot(potential: PotentialModel, c: float, config: Optional[ShootingConfig] = None,
          record: bool = False) -> Trajectory:
    """Integrate u'' = -c u' + W'(u) backward from the plus well and classify the fate.

    ``overshoot``: the orbit runs past the far edge of the minus minima (or escapes the
    growth ball); ``undershoot``: it turns back before getting there.
    """
    cfg = config or ShootingConfig()
    cfg.validate(potential)
    dW = _scalar_fns(potential)
    lam = _plus_eigen(potential, c)
    ap = float(potential.a_plus[0])
    e = np.sign(float(potential.a_minus[0]) - ap)
    far = float(np.max(e * (potential.minima_minus.samples[:, 0] - ap)))
    margin = 0.25 * potential.minima_minus.tube_radius
    escape = 2.0 * potential.growth_radius

    # in s = -t: u_s = q, q_s = c q + W'(u) with q = -p
    def f(u, q):
        return q, c * q + dW(u)

    u = ap + e * cfg.start_offset
    q = -lam * e * cfg.start_offset
    h = cfg.dt_ode
    n_steps = int(np.ceil(cfg.t_max / h))
    ss, us, qs = ([0.0], [u], [q]) if record else (None, None, None)
    fate = None
    for i in range(1, n_steps + 1):
        k1u, k1q = f(u, q)
        k2u, k2q = f(u + 0.5 * h * k1u, q + 0.5 * h * k1q)
        k3u, k3q = f(u + 0.5 * h * k2u, q + 0.5 * h * k2q)
        k4u, k4q = f(u + h * k3u, q + h * k3q)
        u += h * (k1u + 2 * k2u + 2 * k3u + k4u) / 6.0
        q += h * (k1q + 2 * k2q + 2 * k3q + k4q) / 6.0
        if record:
            ss.append(i * h)
            us.append(u)
            qs.append(q)
        x = e * (u - ap)
        if x > far + margin or abs(u) > escape:
            fate = OVERSHOOT
            break
        if e * q <= 0.0:
            fate = UNDERSHOOT
            break
    if fate is None:
        fate = OVERSHOOT if e * q > 0 else UNDERSHOOT
    if record:
        return Trajectory(np.array(ss), np.array(us), -np.array(qs), fate)
    return Trajectory(np.empty(0), np.empty(0), np.empty(0), fate)


def shoot_speed(potential: PotentialModel, config: Optional[ShootingConfig] = None, c_tol: float = 1e-7,
                c_max: Optional[float] = None) -> float:
    """Bisection on the fate flip between undershoot (slow) and overshoot (fast)."""
    if c_max is None:
        from .speed import bracket_bound, constants_for
        c_max = 2.0 * bracket_bound(potential, constants_for(potential))
    lo, hi = 0.0, float(c_max)
    if shoot(potential, lo, config).fate != UNDERSHOOT or shoot(potential, hi, config).fate != OVERSHOOT:
        raise OracleError("no heteroclinic detected")
    while hi - lo > c_tol:
        mid = 0.5 * (lo + hi)
        if shoot(potential, mid, config).fate == OVERSHOOT:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


@dataclass
class PdeConfig:
    dx: float = 0.05
    dt_pde: float = 0.05
    X: float = 100.0
    T_end: float = 150.0
    level: float = 0.5  # fraction of the distance between the wells
    start: float = -0.5  # initial front position as a fraction of X
    scheme: str = "semi-implicit"
    boundary_margin: float = 0.05  # fraction of X kept clear of the front
    record_every: int = 10

    def validate(self) -> None:
        if not (self.dx > 0 and self.dt_pde > 0 and self.X > 0 and self.T_end > 0):
            raise ValueError("dx, dt_pde, X and T_end must be > 0")
        if not 0.0 < self.level < 1.0:
            raise ValueError("tracking level must lie in (0, 1)")
        if not -1.0 < self.start < 1.0:
            raise ValueError("start must lie in (-1, 1)")
        if self.scheme not in ("semi-implicit", "explicit"):
            raise ValueError("scheme must be 'semi-implicit' or 'explicit'")
        if self.scheme == "explicit" and self.dt_pde > 0.5 * self.dx ** 2:
            raise ValueError("explicit scheme needs dt_pde <= dx^2 / 2")


@dataclass
class PdeResult:
    speed: float
    times: np.ndarray
    positions: np.ndarray
    x: np.ndarray
    w: np.ndarray  # final state (N, k)
    max_excursion: float  # largest step-wise exit from the invariant box (k=1)
    extras: dict = field(default_factory=dict)


def initial_step(x: np.ndarray, potential: PotentialModel, x0: float, width: float) -> np.ndarray:
    """Step from the minus to the plus anchor at x0, linearly mollified over ``width``."""
    s = np.clip((x - x0) / width + 0.5, 0.0, 1.0)[:, None]
    return (1.0 - s) * potential.a_minus + s * potential.a_plus


def front_position(x: np.ndarray, w: np.ndarray, potential: PotentialModel, level: float) -> float:
    """Leftmost crossing of dist(w, plus minima) = level * dist(a-, plus minima)."""
    d = potential.minima_plus.dist(w)
    thr = level * float(potential.minima_plus.dist(potential.a_minus[None, :])[0])
    below = d <= thr
    idx = np.flatnonzero(below)
    if idx.size == 0:
        return float("inf")
    i = int(idx[0])
    if i == 0:
        return float(x[0])
    d0, d1 = d[i - 1], d[i]
    s = (d0 - thr) / (d0 - d1) if d0 != d1 else 1.0
    return float(x[i - 1] + s * (x[i] - x[i - 1]))


def _neumann_banded(N: int, r: float) -> np.ndarray:
    """Banded form of I - r D2 with reflecting ends."""
    ab = np.zeros((3, N))
    ab[0, 1:] = -r
    ab[1, :] = 1.0 + 2.0 * r
    ab[2, :-1] = -r
    ab[0, 1] = -2.0 * r
    ab[2, -2] = -2.0 * r
    return ab


def run_pde(potential: PotentialModel, config: Optional[PdeConfig] = None, w0: Optional[np.ndarray] = None,
            levels=None) -> PdeResult:
    """w_t = w_xx - grad W(w) on [-X, X] with reflecting ends, tracking the front."""
    cfg = config or PdeConfig()
    cfg.validate()
    N = int(round(2.0 * cfg.X / cfg.dx)) + 1
    x = np.linspace(-cfg.X, cfg.X, N)
    dx = x[1] - x[0]
    dt = cfg.dt_pde
    w = initial_step(x, potential, cfg.start * cfg.X, 10.0 * dx) if w0 is None else np.array(w0, dtype=float)
    r = dt / dx ** 2
    ab = _neumann_banded(N, r)
    lo_box = hi_box = None
    if potential.dim == 1:
        ends = np.array([potential.a_minus[0], potential.a_plus[0]])
        lo_box, hi_box = ends.min() - 0.1, ends.max() + 0.1
    track = [cfg.level] if levels is None else list(levels)
    n_steps = int(round(cfg.T_end / dt))
    margin = cfg.boundary_margin * cfg.X
    times, pos = [], []
    excursion = 0.0
    for step in range(n_steps + 1):
        if step % cfg.record_every == 0:
            times.append(step * dt)
            pos.append([front_position(x, w, potential, lv) for lv in track])
            p = pos[-1][0]
            if not (x[0] + margin < p < x[-1] - margin):
                raise DomainTooShort("domain too short", np.array(times), np.array(pos))
        if step == n_steps:
            break
        react = w - dt * potential.grad(w)
        if cfg.scheme == "semi-implicit":
            w = solve_banded((1, 1), ab, react)
        else:
            lap = np.empty_like(w)
            lap[1:-1] = w[2:] - 2.0 * w[1:-1] + w[:-2]
            lap[0] = 2.0 * (w[1] - w[0])
            lap[-1] = 2.0 * (w[-2] - w[-1])
            w = react + r * lap
        if lo_box is not None:
            excursion = max(excursion, float(lo_box - w.min()), float(w.max() - hi_box))
    times = np.array(times)
    pos = np.array(pos)
    keep = times >= 0.5 * times[-1]
    speeds = [float(np.polyfit(times[keep], pos[keep, j], 1)[0]) for j in range(pos.shape[1])]
    return PdeResult(speeds[0], times, pos[:, 0], x, w, excursion,
                     extras={"levels": track, "speeds": speeds, "positions_all": pos})


def pde_front_speed(potential: PotentialModel, config: Optional[PdeConfig] = None) -> float:
    return run_pde(potential, config).speed
