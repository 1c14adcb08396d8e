"""Projections onto sublevel sets, radial truncation, and transition times of a profile."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from .potential import PotentialModel

THRESHOLD_SLACK = 1e-8
POLISH_TOL = 1e-15
MEMBER_SLACK = 1e-15  # boundary points produced by a projection count as members


class ProjectionError(RuntimeError):
    """Inner projection iterations did not converge."""

    def __init__(self, msg: str, last: np.ndarray, residual: float):
        super().__init__(f"{msg} (KKT residual {residual:.3e})")
        self.last = last
        self.residual = residual


def branch_of(potential: PotentialModel, u: np.ndarray) -> np.ndarray:
    """True where the nearest minima set is the minus one (ties go to minus)."""
    u = np.asarray(u, dtype=float)
    return potential.minima_minus.dist(u) <= potential.minima_plus.dist(u)


@dataclass(frozen=True, eq=False)
class SublevelSet:
    """Branch of {W <= level} around the minus or plus minima."""

    potential: PotentialModel
    level: float
    branch: str = "minus"

    def __post_init__(self):
        if self.branch not in ("minus", "plus"):
            raise ValueError("branch must be 'minus' or 'plus'")
        floor = self.potential.depth if self.branch == "minus" else 0.0
        if self.level < floor:
            raise ValueError(f"sublevel set at {self.level} is empty on the {self.branch} branch")

    @property
    def minima(self):
        p = self.potential
        return p.minima_minus if self.branch == "minus" else p.minima_plus

    def contains(self, u: np.ndarray, slack: float = 0.0) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        on_branch = branch_of(self.potential, u)
        if self.branch == "plus":
            on_branch = ~on_branch
        return (self.potential.eval(u) <= self.level + slack) & on_branch

    def interval(self) -> tuple[float, float]:
        """Endpoints of the set for scalar potentials."""
        if self.potential.dim != 1:
            raise ValueError("interval() is only defined for scalar potentials")
        return _interval(self.potential, float(self.level), self.branch)


@lru_cache(maxsize=256)
def _interval(potential: PotentialModel, level: float, branch: str) -> tuple[float, float]:
    mset = potential.minima_minus if branch == "minus" else potential.minima_plus
    pts = mset.samples[:, 0]
    lo0, hi0 = float(pts.min()), float(pts.max())

    def f(x):
        return float(potential.eval(np.array([[x]]))[0]) - level

    def walk(x0, direction):
        step = 1e-3 * max(potential.growth_radius, 1.0)
        x = x0
        while True:
            x_next = x + direction * step
            if f(x_next) > 0.0:
                if f(x) > 0.0:  # level equals the minimum value exactly
                    return x
                return brentq(f, min(x, x_next), max(x, x_next), xtol=1e-15, rtol=1e-15)
            x = x_next
            step *= 1.5
            if abs(x - x0) > 100.0 * max(potential.growth_radius, 1.0):
                raise ValueError("sublevel set appears unbounded")

    return walk(lo0, -1.0), walk(hi0, 1.0)


def project_sublevel(sset: SublevelSet, u: np.ndarray, tol: float = 1e-10,
                     max_iter: int = 200) -> np.ndarray:
    """Euclidean nearest point of a (convex) sublevel branch.

    Accepts a single point (k,) or a stack (..., k).
    """
    u = np.asarray(u, dtype=float)
    pot = sset.potential
    if pot.dim == 1:
        a, b = sset.interval()
        return np.clip(u, a, b)
    single = u.ndim == 1
    pts = np.atleast_2d(u).reshape(-1, pot.dim)
    out = pts.copy()
    outside = np.flatnonzero(~sset.contains(pts, MEMBER_SLACK * max(1.0, abs(sset.level))))
    if outside.size:
        starts = _ray_boundary(sset, pts[outside])
        for i, x0 in zip(outside, starts):
            out[i] = _project_point(sset, pts[i], x0, tol, max_iter)
    out = out.reshape(u.shape) if not single else out[0]
    return out


def _ray_boundary(sset: SublevelSet, U: np.ndarray) -> np.ndarray:
    """Level-set crossing on the segment from the nearest branch minimum to each row of U."""
    A = sset.minima.project(U)
    lo = np.zeros(len(U))
    hi = np.ones(len(U))
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        ok = sset.potential.eval(A + mid[:, None] * (U - A)) <= sset.level
        lo = np.where(ok, mid, lo)
        hi = np.where(ok, hi, mid)
    return A + lo[:, None] * (U - A)


def _project_point(sset: SublevelSet, u: np.ndarray, x: np.ndarray, tol: float, max_iter: int) -> np.ndarray:
    pot = sset.potential
    h = sset.level
    a = sset.minima.project(u[None, :])[0]

    def W(x):
        return float(pot.eval(x[None, :])[0])

    g = pot.grad(x[None, :])[0]
    lam = float(np.linalg.norm(u - x) / max(np.linalg.norm(g), 1e-300))
    k = pot.dim

    def resid(x, lam):
        g = pot.grad(x[None, :])[0]
        return np.concatenate([x - u + lam * g, [W(x) - h]]), g

    r, g = resid(x, lam)
    scale = max(1.0, float(np.linalg.norm(u - a)))
    for _ in range(max_iter):
        nr = float(np.linalg.norm(r))
        # polish to rounding so that projecting the result again is a no-op
        if nr <= POLISH_TOL * scale:
            return x
        # Newton step on the KKT system of min |x-u|^2/2 s.t. W(x) = h
        H = pot.hessian(x[None, :])[0]
        J = np.zeros((k + 1, k + 1))
        J[:k, :k] = np.eye(k) + lam * H
        J[:k, k] = g
        J[k, :k] = g
        try:
            step = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError:
            break
        s = 1.0
        while s > 1e-8:
            xn, ln = x + s * step[:k], lam + s * step[k]
            rn, gn = resid(xn, ln)
            if np.linalg.norm(rn) < (1.0 - 1e-4 * s) * nr:
                break
            s *= 0.5
        else:
            break  # stagnated at rounding level
        x, lam, r, g = xn, max(ln, 0.0), rn, gn
    nr = float(np.linalg.norm(r))
    if nr <= tol * scale:
        return x
    raise ProjectionError("sublevel projection did not converge", x, nr)


def project_tube(potential: PotentialModel, u: np.ndarray, radius: float) -> np.ndarray:
    """Nearest point of {dist(., plus minima) <= radius}."""
    u = np.asarray(u, dtype=float)
    p = potential.minima_plus.project(u)
    d = np.linalg.norm(u - p, axis=-1, keepdims=True)
    scale = np.where(d > radius, radius / np.maximum(d, 1e-300), 1.0)
    return p + scale * (u - p)


def truncation_map(potential: PotentialModel, u: np.ndarray) -> np.ndarray:
    """Radial retraction onto the ball of radius growth_radius."""
    u = np.asarray(u, dtype=float)
    R = potential.growth_radius
    r = np.linalg.norm(u, axis=-1, keepdims=True)
    return np.where(r > R, R * u / np.maximum(r, 1e-300), u)


@dataclass
class TransitionMarkers:
    t1_minus: Optional[float]
    t2_minus: Optional[float]
    t_plus: Optional[float]
    alpha_minus: float
    alpha_0: float
    eps0_plus: float

    def to_record(self) -> dict:
        return dict(self.__dict__)


def _crossing(t: np.ndarray, f: np.ndarray, i: int) -> float:
    """Zero of the linear interpolant of f between nodes i-1 and i."""
    f0, f1 = f[i - 1], f[i]
    if f1 == f0:
        return float(t[i])
    s = np.clip(f0 / (f0 - f1), 0.0, 1.0)
    return float(t[i - 1] + s * (t[i] - t[i - 1]))


def transition_markers(profile, potential: PotentialModel, constants) -> TransitionMarkers:
    """Transition times of a profile from the minus region to the plus tube.

    ``constants`` needs attributes ``alpha_minus``, ``alpha_0``, ``eps0_plus`` and
    ``rho_plus``.  A marker is None when its defining set is empty or the tails
    are outside the required regions.
    """
    am, a0, ep = float(constants.alpha_minus), float(constants.alpha_0), float(constants.eps0_plus)
    rho = float(constants.rho_plus)
    t = profile.grid.t
    u = profile.values
    E = potential.eval(u)
    minus = branch_of(potential, u)
    d_plus = potential.minima_plus.dist(u)
    out = TransitionMarkers(None, None, None, am, a0, ep)
    if not (E[0] <= am + THRESHOLD_SLACK and minus[0]):
        return out
    # the profile is continuous and starts in the component of {W <= a0} around the
    # minus minima, so it leaves that component exactly where W first exceeds a0
    idx = np.flatnonzero(E >= a0 - THRESHOLD_SLACK)
    if idx.size == 0:
        return out
    i2 = int(idx[0])
    out.t2_minus = _crossing(t, E - a0, i2)
    below = np.flatnonzero(E[:i2] <= am + THRESHOLD_SLACK)
    j = int(below[-1])
    out.t1_minus = float(t[j]) if j + 1 >= i2 else _crossing(t, am - E, j + 1)
    out.t1_minus = min(out.t1_minus, out.t2_minus)
    if d_plus[-1] > 0.5 * rho + THRESHOLD_SLACK:
        return out
    f = np.maximum((E - ep) / ep, (d_plus - 0.5 * rho) / (0.5 * rho))
    hit = np.flatnonzero(f[i2:] <= THRESHOLD_SLACK)
    if hit.size:
        ip = i2 + int(hit[0])
        out.t_plus = _crossing(t, f, ip) if ip > i2 else float(t[ip])
    return out
