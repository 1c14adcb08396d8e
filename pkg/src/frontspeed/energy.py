"""Discrete exponentially weighted energy on a truncated uniform grid.

For a profile u_0..u_{n-1} the energy is the midpoint sum over cells

    sum_i ( |u_{i+1} - u_i|^2 / (2 dt^2) + W((u_i + u_{i+1}) / 2) ) e^{c m_i} dt

with m_i the cell centre.  The gradient and the block-tridiagonal Hessian
below are exact derivatives of this sum.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .potential import PotentialModel

WEIGHT_FLOOR = 1e-300
MAX_EXPONENT = 700.0


class EnergyError(ValueError):
    """Invalid energy evaluation (weight overflow or non-finite values)."""


@dataclass(frozen=True)
class Grid:
    t_min: float
    t_max: float
    n: int

    def __post_init__(self):
        if not self.t_min < 0.0 < self.t_max:
            raise ValueError("grid must satisfy t_min < 0 < t_max")
        if self.n < 3:
            raise ValueError("grid needs at least 3 nodes")

    @property
    def dt(self) -> float:
        return (self.t_max - self.t_min) / (self.n - 1)

    @property
    def t(self) -> np.ndarray:
        return np.linspace(self.t_min, self.t_max, self.n)

    @property
    def mid(self) -> np.ndarray:
        t = self.t
        return 0.5 * (t[1:] + t[:-1])


@dataclass
class Profile:
    """Nodal values on a grid, shape (n, k), with Dirichlet anchors."""

    grid: Grid
    values: np.ndarray
    pin_left: np.ndarray
    pin_right: np.ndarray
    pinned: bool = True

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.shape[0] != self.grid.n:
            raise ValueError(f"profile has {v.shape[0]} nodes, grid has {self.grid.n}")
        self.values = v
        self.pin_left = np.atleast_1d(np.asarray(self.pin_left, dtype=float))
        self.pin_right = np.atleast_1d(np.asarray(self.pin_right, dtype=float))
        if self.pinned:
            self.values[0] = self.pin_left
            self.values[-1] = self.pin_right

    @property
    def k(self) -> int:
        return self.values.shape[1]

    def copy(self, values=None) -> "Profile":
        return Profile(self.grid, np.array(self.values if values is None else values, dtype=float),
                       self.pin_left.copy(), self.pin_right.copy(), self.pinned)

    @classmethod
    def from_function(cls, grid: Grid, f, potential: PotentialModel, pinned: bool = True) -> "Profile":
        return cls(grid, np.asarray(f(grid.t), dtype=float), potential.a_minus, potential.a_plus, pinned)


@dataclass
class WeightedEnergyReport:
    total: float
    kinetic: float
    potential: float
    per_cell: np.ndarray = field(repr=False)
    weight_floor_hit: bool
    left_tail: float  # discrete energy of u = pin_left on all cells left of the window

    @property
    def full(self) -> float:
        """Window energy plus the constant left tail."""
        return self.total + self.left_tail

    def to_record(self, c: float) -> dict:
        return {"c": c, "total": self.total, "kinetic": self.kinetic, "potential": self.potential,
                "left_tail": self.left_tail, "weight_floor_hit": self.weight_floor_hit}


def cell_weights(grid: Grid, c: float) -> tuple[np.ndarray, bool]:
    """e^{c m_i} dt for every cell, clamped to zero below the floor."""
    if not c > 0.0:
        raise EnergyError(f"c must be > 0, got {c}")
    if c * grid.t_max > MAX_EXPONENT:
        raise EnergyError("domain too long for weight")
    w = np.exp(c * grid.mid)
    low = w < WEIGHT_FLOOR
    w[low] = 0.0
    return w * grid.dt, bool(low.any())


def left_tail(grid: Grid, c: float, level: float) -> float:
    """Sum of level * e^{c m} dt over the cells m = t_min - dt/2, t_min - 3dt/2, ...

    This is the discrete counterpart of level * e^{c t_min} / c and agrees with
    it to O(dt^2); it keeps the translation identity exact on the grid.
    """
    dt = grid.dt
    return float(level * dt * np.exp(c * (grid.t_min - 0.5 * dt)) / -np.expm1(-c * dt))


def _check(u: np.ndarray) -> None:
    if not np.all(np.isfinite(u)):
        raise EnergyError("invalid profile: non-finite values")


def energy_arrays(u: np.ndarray, grid: Grid, potential: PotentialModel, c: float):
    """(per_cell kinetic, per_cell potential, floor flag) for raw values u (n, k)."""
    _check(u)
    w, floor = cell_weights(grid, c)
    du = np.diff(u, axis=0)
    kin = 0.5 * np.sum(du * du, axis=1) / grid.dt ** 2
    pot = potential.eval(0.5 * (u[1:] + u[:-1]))
    if not np.all(np.isfinite(pot)):
        raise EnergyError("invalid profile: W evaluated to NaN")
    return w * kin, w * pot, floor


def energy_value(u: np.ndarray, grid: Grid, potential: PotentialModel, c: float) -> float:
    k, p, _ = energy_arrays(u, grid, potential, c)
    return float(np.sum(k + p))


def energy(profile: Profile, potential: PotentialModel, c: float) -> WeightedEnergyReport:
    """Midpoint-rule discrete weighted energy of a profile."""
    k, p, floor = energy_arrays(profile.values, profile.grid, potential, c)
    per_cell = k + p
    tail_level = float(potential.eval(profile.pin_left[None, :])[0])
    return WeightedEnergyReport(
        total=float(np.sum(per_cell)), kinetic=float(np.sum(k)), potential=float(np.sum(p)),
        per_cell=per_cell, weight_floor_hit=floor,
        left_tail=left_tail(profile.grid, c, tail_level),
    )


def gradient_arrays(u: np.ndarray, grid: Grid, potential: PotentialModel, c: float,
                    pinned: bool = True) -> np.ndarray:
    """Exact gradient of energy_value with respect to every node, shape (n, k)."""
    _check(u)
    w, _ = cell_weights(grid, c)
    dt = grid.dt
    du = np.diff(u, axis=0) / dt ** 2
    gm = 0.5 * potential.grad(0.5 * (u[1:] + u[:-1]))
    g = np.zeros_like(u)
    wc = w[:, None]
    g[:-1] += wc * (-du + gm)
    g[1:] += wc * (du + gm)
    if pinned:
        g[0] = 0.0
        g[-1] = 0.0
    return g


def energy_gradient(profile: Profile, potential: PotentialModel, c: float) -> np.ndarray:
    """Exact gradient of the discrete energy; zero rows at pinned ends."""
    return gradient_arrays(profile.values, profile.grid, potential, c, profile.pinned)


def node_weights(grid: Grid, c: float) -> np.ndarray:
    """Lumped nodal weights (half of each adjacent cell weight), strictly positive."""
    dt = grid.dt
    w = np.exp(c * grid.mid) * dt
    out = np.zeros(grid.n)
    out[:-1] += 0.5 * w
    out[1:] += 0.5 * w
    return out


def weighted_gradient_norm(g: np.ndarray, grid: Grid, c: float) -> float:
    """Max over nodes of |g_j| divided by the nodal weight: a pointwise residual size."""
    return float(np.max(np.linalg.norm(g, axis=1) / node_weights(grid, c)))


def hessian_blocks(u: np.ndarray, grid: Grid, potential: PotentialModel, c: float,
                   psd_potential: bool = False):
    """Diagonal blocks (n, k, k) and super-diagonal blocks (n-1, k, k) of the Hessian.

    With ``psd_potential`` the potential Hessian at each midpoint is replaced by
    its positive part, which makes the whole matrix positive semidefinite.
    """
    w, _ = cell_weights(grid, c)
    n, k = u.shape
    dt = grid.dt
    H = np.asarray(potential.hessian(0.5 * (u[1:] + u[:-1])), dtype=float).reshape(n - 1, k, k)
    if psd_potential:
        lam, V = np.linalg.eigh(H)
        H = np.einsum("...ij,...j,...kj->...ik", V, np.maximum(lam, 0.0), V)
    eye = np.eye(k)
    cell_same = w[:, None, None] * (eye / dt ** 2 + 0.25 * H)
    cell_cross = w[:, None, None] * (-eye / dt ** 2 + 0.25 * H)
    diag = np.zeros((n, k, k))
    diag[:-1] += cell_same
    diag[1:] += cell_same
    return diag, cell_cross


def blocks_to_banded(diag: np.ndarray, off: np.ndarray) -> np.ndarray:
    """Upper banded storage (for scipy.linalg.solveh_banded) of a block-tridiagonal matrix."""
    n, k, _ = diag.shape
    N = n * k
    bw = 2 * k - 1
    ab = np.zeros((bw + 1, N))
    for a in range(k):
        for b in range(a, k):
            # diagonal block entries (j*k + a, j*k + b), b >= a
            ab[bw - (b - a), np.arange(n) * k + b] = diag[:, a, b]
    for a in range(k):
        for b in range(k):
            # off block entries (j*k + a, (j+1)*k + b)
            d = k + b - a
            ab[bw - d, np.arange(1, n) * k + b] = off[:, a, b]
    return ab


def translate(values: np.ndarray, m: int, pin_left: np.ndarray, pin_right: np.ndarray) -> np.ndarray:
    """v_i = u_{i+m} with pin padding: a shift of the profile by tau = m dt."""
    out = np.empty_like(values)
    n = values.shape[0]
    if m >= 0:
        out[: n - m] = values[m:]
        out[n - m:] = pin_right
    else:
        out[-m:] = values[: n + m]
        out[:-m] = pin_left
    return out


def translation_identity_check(profile: Profile, potential: PotentialModel, c: float, m: int,
                               eps: float = 1e-30, flat_tol: float = 1e-12) -> float:
    """Relative defect of E(u(. + m dt)) = e^{-c m dt} E(u) on the pinned window.

    Energies include the constant left tail, so cells shifted out of the window
    on the left are accounted for and the identity holds exactly up to rounding.
    """
    m = int(m)
    u = profile.values
    n = u.shape[0]
    if abs(m) >= n - 1:
        raise ValueError("shift exceeds the window")
    if m != 0:
        lhs = u[: abs(m) + 1] - profile.pin_left
        rhs = u[n - 1 - abs(m):] - profile.pin_right
        if np.max(np.abs(lhs)) > flat_tol or np.max(np.abs(rhs)) > flat_tol:
            raise ValueError("profile is not tail-flat over the shift; identity would be polluted by window effects")
    base = energy(profile, potential, c).full
    shifted = profile.copy(translate(u, m, profile.pin_left, profile.pin_right))
    moved = energy(shifted, potential, c).full
    return abs(moved - np.exp(-c * m * profile.grid.dt) * base) / (abs(base) + eps)
