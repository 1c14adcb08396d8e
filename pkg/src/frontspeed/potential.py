"""Unbalanced double-well potentials W: R^k -> R.

All callables are vectorised over leading axes: ``eval`` maps an array of
shape ``(..., k)`` to ``(...)`` and ``grad`` maps ``(..., k)`` to ``(..., k)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import CubicHermiteSpline
from scipy.optimize import brentq, minimize

Array = np.ndarray


class PotentialError(ValueError):
    """Raised when a potential cannot be built with the requested parameters."""


def _as_points(u, dim: int) -> Array:
    u = np.asarray(u, dtype=float)
    if dim == 1 and (u.ndim == 0 or u.shape[-1] != 1):
        u = u[..., None]
    return u


@dataclass(frozen=True, eq=False)
class MinimaSet:
    """A set of minimisers together with its nearest-point map."""

    kind: str
    project: Callable[[Array], Array]
    tube_radius: float
    coercivity_const: float
    samples: Array  # (m, k) points of the set, used by the auditor

    def dist(self, u: Array) -> Array:
        u = np.asarray(u, dtype=float)
        return np.linalg.norm(u - self.project(u), axis=-1)

    def anchor(self) -> Array:
        """A representative point (used for Dirichlet pins)."""
        return self.samples[0].copy()

    @staticmethod
    def point(a, tube_radius: float, coercivity_const: float = np.nan) -> "MinimaSet":
        a = np.atleast_1d(np.asarray(a, dtype=float))

        def project(u):
            u = np.asarray(u, dtype=float)
            return np.broadcast_to(a, u.shape).copy()

        return MinimaSet("point", project, float(tube_radius), float(coercivity_const), a[None, :])

    @staticmethod
    def finite_points(points, tube_radius: float, coercivity_const: float = np.nan) -> "MinimaSet":
        pts = np.atleast_2d(np.asarray(points, dtype=float))

        def project(u):
            u = np.asarray(u, dtype=float)
            d = np.linalg.norm(u[..., None, :] - pts, axis=-1)
            return pts[np.argmin(d, axis=-1)]

        return MinimaSet("finite-point-list", project, float(tube_radius), float(coercivity_const), pts)

    @staticmethod
    def segment(p, q, tube_radius: float, coercivity_const: float = np.nan,
                n_samples: int = 9) -> "MinimaSet":
        p = np.atleast_1d(np.asarray(p, dtype=float))
        q = np.atleast_1d(np.asarray(q, dtype=float))
        d = q - p
        dd = float(d @ d)

        def project(u):
            u = np.asarray(u, dtype=float)
            s = np.clip(((u - p) @ d) / dd, 0.0, 1.0)
            return p + s[..., None] * d

        s = np.linspace(0.0, 1.0, n_samples)
        # q first: the anchor of a minus-side segment is the end facing the other well
        samples = np.vstack([q, p, p + s[1:-1, None] * d])
        return MinimaSet("segment-1d", project, float(tube_radius), float(coercivity_const), samples)

    @staticmethod
    def curve(f: Callable[[Array], Array], s_range: tuple[float, float], tube_radius: float,
              coercivity_const: float = np.nan, resolution: int = 2048) -> "MinimaSet":
        """Parametric curve; projection by dense sampling plus local refinement."""
        s_grid = np.linspace(*s_range, resolution)
        pts = np.asarray(f(s_grid), dtype=float)
        ds = (s_range[1] - s_range[0]) / (resolution - 1)

        def project(u):
            u = np.asarray(u, dtype=float)
            flat = u.reshape(-1, u.shape[-1])
            out = np.empty_like(flat)
            for i, x in enumerate(flat):
                j = np.argmin(np.linalg.norm(pts - x, axis=-1))
                lo, hi = s_grid[max(j - 1, 0)], s_grid[min(j + 1, resolution - 1)]
                # golden-section on the bracketing parameter interval
                g = (np.sqrt(5.0) - 1.0) / 2.0
                a, b = lo, hi
                for _ in range(60):
                    c1, c2 = b - g * (b - a), a + g * (b - a)
                    if np.linalg.norm(f(np.array([c1]))[0] - x) < np.linalg.norm(f(np.array([c2]))[0] - x):
                        b = c2
                    else:
                        a = c1
                    if b - a < 1e-14 * max(ds, 1.0):
                        break
                out[i] = f(np.array([0.5 * (a + b)]))[0]
            return out.reshape(u.shape)

        return MinimaSet("parametric-curve", project, float(tube_radius), float(coercivity_const),
                         pts[:: max(resolution // 16, 1)])


@dataclass(frozen=True, eq=False)
class PotentialModel:
    """Potential with its gradient, minima sets and structural constants.

    ``minima_minus`` sits at level ``depth < 0`` and ``minima_plus`` at level 0.
    """

    dim: int
    eval: Callable[[Array], Array]
    grad: Callable[[Array], Array]
    minima_minus: MinimaSet
    minima_plus: MinimaSet
    depth: float
    growth_radius: float
    growth_coeff: float
    hess: Optional[Callable[[Array], Array]] = None
    hess_diag_bound: Optional[Callable[[Array], Array]] = None
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def __call__(self, u):
        return self.eval(u)

    def hessian(self, u: Array) -> Array:
        """Hessian, shape ``(..., k, k)``; central differences of grad when no closed form."""
        u = np.asarray(u, dtype=float)
        if self.hess is not None:
            return self.hess(u)
        k = self.dim
        h = 1e-5 * (1.0 + np.abs(u))
        out = np.empty(u.shape + (k,))
        for j in range(k):
            e = np.zeros(k)
            e[j] = 1.0
            hj = h[..., j:j + 1]
            out[..., :, j] = (self.grad(u + hj * e) - self.grad(u - hj * e)) / (2.0 * hj)
        return 0.5 * (out + np.swapaxes(out, -1, -2))

    def lipschitz_probe(self, u: Array) -> Array:
        """Largest Hessian eigenvalue estimate used for step-size control."""
        if self.hess_diag_bound is not None:
            return self.hess_diag_bound(u)
        return np.linalg.eigvalsh(self.hessian(u))[..., -1]

    @property
    def a_minus(self) -> Array:
        return self.minima_minus.anchor()

    @property
    def a_plus(self) -> Array:
        return self.minima_plus.anchor()

    def scaled(self, s2: float) -> "PotentialModel":
        """The potential s2 * W (same minima, depth scaled)."""
        hess = None if self.hess is None else (lambda u: s2 * self.hess(u))
        mm = self.minima_minus
        mp = self.minima_plus
        return PotentialModel(
            dim=self.dim,
            eval=lambda u: s2 * self.eval(u),
            grad=lambda u: s2 * self.grad(u),
            minima_minus=MinimaSet(mm.kind, mm.project, mm.tube_radius, mm.coercivity_const / s2, mm.samples),
            minima_plus=MinimaSet(mp.kind, mp.project, mp.tube_radius, mp.coercivity_const / s2, mp.samples),
            depth=s2 * self.depth,
            growth_radius=self.growth_radius,
            growth_coeff=s2 * self.growth_coeff,
            hess=hess,
            name=f"{self.name}*{s2:g}",
            params={**self.params, "scale": s2},
        )


# ---------------------------------------------------------------------------
# helpers shared by the built-ins

def _fit_coercivity(W, mset: MinimaSet, level: float, dim: int, n: int = 4001) -> float:
    """max dist^2 / (W - level) over a deterministic sample of the tube."""
    rho = mset.tube_radius
    base = mset.samples
    if dim == 1:
        r = np.linspace(-rho, rho, n)
        pts = (base[:, None, :] + r[None, :, None]).reshape(-1, 1)
    else:
        ang = np.linspace(0.0, 2 * np.pi, 64, endpoint=False)
        dirs = np.stack([np.cos(ang), np.sin(ang)] + [np.zeros_like(ang)] * (dim - 2), axis=-1)
        r = np.linspace(0.0, rho, 200)
        pts = (base[:, None, None, :] + r[None, :, None, None] * dirs[None, None, :, :]).reshape(-1, dim)
    d = mset.dist(pts)
    keep = (d > 1e-6 * rho) & (d <= rho)
    gap = W(pts[keep]) - level
    if np.any(gap <= 0):
        return float("inf")
    return float(np.max(d[keep] ** 2 / gap))


def _certify_growth(W_grad, dim: int, radius: float) -> float:
    """Sampled radial coercivity constant c0 (halved for slack); 0 if it fails."""
    rng = np.random.default_rng(12345)
    dirs = rng.standard_normal((512, dim))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    if dim == 1:
        dirs = np.array([[1.0], [-1.0]])
    scales = np.geomspace(1.0, 8.0, 25) * radius
    u = (scales[:, None, None] * dirs[None, :, :]).reshape(-1, dim)
    ratio = np.sum(W_grad(u) * u, axis=-1) / np.sum(u * u, axis=-1)
    return max(0.5 * float(ratio.min()), 0.0)


# ---------------------------------------------------------------------------
# built-in potentials

def make_tilted_cubic(beta: float) -> PotentialModel:
    """Scalar Nagumo potential W(u) = u^4/4 - (1+beta) u^3/3 + beta u^2/2.

    grad W = u (u - 1)(u - beta); wells at 0 (level 0) and 1 (level (2 beta - 1)/12).
    """
    beta = float(beta)
    if not 0.0 < beta < 0.5:
        raise PotentialError(f"beta must lie in (0, 1/2), got {beta}")

    def W(u):
        x = np.asarray(u, dtype=float)[..., 0]
        return x ** 4 / 4.0 - (1.0 + beta) * x ** 3 / 3.0 + beta * x ** 2 / 2.0

    def grad(u):
        x = np.asarray(u, dtype=float)
        return x * (x - 1.0) * (x - beta)

    def hess(u):
        x = np.asarray(u, dtype=float)
        return (3.0 * x ** 2 - 2.0 * (1.0 + beta) * x + beta)[..., None]

    depth = (2.0 * beta - 1.0) / 12.0
    # W > 0 on (0, z) with z the first positive zero of W
    z = ((1.0 + beta) / 3.0 - np.sqrt(((1.0 + beta) / 3.0) ** 2 - 0.5 * beta)) / 0.5
    plus = MinimaSet.point([0.0], 0.5 * z)
    minus = MinimaSet.point([1.0], 0.5 * (1.0 - beta))
    plus = MinimaSet.point([0.0], plus.tube_radius, _fit_coercivity(W, plus, 0.0, 1))
    minus = MinimaSet.point([1.0], minus.tube_radius, _fit_coercivity(W, minus, depth, 1))
    return PotentialModel(
        dim=1, eval=W, grad=grad, hess=hess, hess_diag_bound=lambda u: hess(u)[..., 0],
        minima_minus=minus, minima_plus=plus, depth=depth,
        growth_radius=2.0, growth_coeff=_certify_growth(grad, 1, 2.0),
        name="tilted_cubic", params={"beta": beta},
    )


def nagumo_wave(beta: float):
    """Closed-form wave of the tilted cubic: (speed, profile t -> u(t))."""
    speed = np.sqrt(2.0) * (0.5 - beta)

    def profile(t):
        t = np.asarray(t, dtype=float)
        return (0.5 * (1.0 - np.tanh(t / (2.0 * np.sqrt(2.0)))))[..., None]

    return speed, profile


def _smoothstep7(x):
    return x ** 4 * (35.0 - 84.0 * x + 70.0 * x ** 2 - 20.0 * x ** 3)


def _smoothstep7_d(x):
    return 140.0 * x ** 3 * (1.0 - x) ** 3


def _smoothstep7_dd(x):
    return 420.0 * x ** 2 * (1.0 - x) ** 2 * (1.0 - 2.0 * x)


def make_plateau_scalar(plateau=(-2.0, -1.0), depth: float = -0.05, barrier: float = 1.0,
                        left_growth: float = 1.0) -> PotentialModel:
    """Scalar C^3 potential with W = depth on a whole interval and a point well at 1.

    Between the plateau end p2 and 1 the profile is
    ``depth * (1 - S(x)) + barrier * x^4 (1 - x)^2`` with x = (u - p2)/(1 - p2)
    and S the degree-7 smoothstep; right of 1 and left of p1 it continues with
    rational pieces whose Taylor data match to third order and which grow
    quadratically.
    """
    p1, p2 = float(plateau[0]), float(plateau[1])
    h = float(depth)
    A = float(barrier)
    Al = float(left_growth)
    if not p1 < p2 < 0.0:
        raise PotentialError("plateau must satisfy p1 < p2 < 0 < 1")
    if not h < 0.0:
        raise PotentialError("depth must be < 0")
    Lx = 1.0 - p2
    # join data at u = 1 from the middle piece: W = W' = 0, W'' = 2A/Lx^2, W''' = 24A/Lx^3
    L2 = 2.0 * A / Lx ** 2
    L3 = 24.0 * A / Lx ** 3
    kap = 1.0 if L3 >= 0 else max(1.0, -2.0 * L3 / (3.0 * L2))

    def pieces(x):
        x = np.asarray(x, dtype=float)
        left = x < p1
        mid = (x > p2) & (x < 1.0)
        right = x >= 1.0
        return left, mid, right

    def W(u):
        x = np.asarray(u, dtype=float)[..., 0]
        out = np.full(x.shape, h)
        left, mid, right = pieces(x)
        y = p1 - x[left]
        out[left] = h + Al * y ** 4 / (1.0 + y ** 2)
        s = (x[mid] - p2) / Lx
        out[mid] = h * (1.0 - _smoothstep7(s)) + A * s ** 4 * (1.0 - s) ** 2
        r = (x[right] - 1.0) * kap
        out[right] = (L2 / kap ** 2) * r ** 2 / 2.0 + (L3 / kap ** 3) / 6.0 * r ** 3 / (1.0 + r)
        return out

    def grad(u):
        x = np.asarray(u, dtype=float)[..., 0]
        out = np.zeros(x.shape)
        left, mid, right = pieces(x)
        y = p1 - x[left]
        out[left] = -Al * (4.0 * y ** 3 + 2.0 * y ** 5) / (1.0 + y ** 2) ** 2
        s = (x[mid] - p2) / Lx
        out[mid] = (-h * _smoothstep7_d(s) + A * s ** 3 * (1.0 - s) * (4.0 - 6.0 * s)) / Lx
        r = (x[right] - 1.0) * kap
        out[right] = ((L2 / kap ** 2) * r + (L3 / kap ** 3) / 6.0 * (3.0 * r ** 2 + 2.0 * r ** 3)
                      / (1.0 + r) ** 2) * kap
        return out[..., None]

    def hess(u):
        x = np.asarray(u, dtype=float)[..., 0]
        out = np.zeros(x.shape)
        left, mid, right = pieces(x)
        y = p1 - x[left]
        out[left] = Al * (12.0 * y ** 2 + 6.0 * y ** 4 + 2.0 * y ** 6) / (1.0 + y ** 2) ** 3
        s = (x[mid] - p2) / Lx
        out[mid] = (-h * _smoothstep7_dd(s) + A * (12.0 * s ** 2 - 40.0 * s ** 3 + 30.0 * s ** 4)) / Lx ** 2
        r = (x[right] - 1.0) * kap
        out[right] = ((L2 / kap ** 2) + (L3 / kap ** 3) / 6.0 * (6.0 * r + 6.0 * r ** 2 + 2.0 * r ** 3)
                      / (1.0 + r) ** 3) * kap ** 2
        return out[..., None, None]

    grid = np.linspace(p2, 1.0, 20001)
    vals = W(grid[:, None])
    i_bar = int(np.argmax(vals))
    if vals[i_bar] <= 0.0:
        raise PotentialError(f"fitted barrier maximum {vals[i_bar]:.3e} <= 0")
    u_bar = grid[i_bar]
    # z is the last zero of W before the well at 1
    zs = grid[:-1][(vals[:-1] <= 0) & (vals[1:] > 0)]
    z = brentq(lambda t: float(W(np.array([t]))), zs[-1], zs[-1] + (grid[1] - grid[0]))
    rho_plus = 0.5 * min(1.0 - z, 1.0)
    rho_minus = 0.25 * Lx
    minus = MinimaSet.segment([p1], [p2], rho_minus)
    plus = MinimaSet.point([1.0], rho_plus)
    minus = MinimaSet.segment([p1], [p2], rho_minus, _fit_coercivity(W, minus, h, 1))
    plus = MinimaSet.point([1.0], rho_plus, _fit_coercivity(W, plus, 0.0, 1))
    R0 = max(abs(p1) + 2.0, 3.0)
    return PotentialModel(
        dim=1, eval=W, grad=grad, hess=hess, hess_diag_bound=lambda u: hess(u)[..., 0, 0],
        minima_minus=minus, minima_plus=plus, depth=h,
        growth_radius=R0, growth_coeff=_certify_growth(grad, 1, R0),
        name="plateau", params={"plateau": [p1, p2], "depth": h, "barrier": A,
                                "barrier_location": float(u_bar), "barrier_height": float(vals[i_bar])},
    )


def make_planar_tilted(well_minus=(0.0, 0.0), well_plus=(1.0, 0.0), tilt: float = 0.1,
                       tilt_width: Optional[float] = None) -> PotentialModel:
    """Planar quartic double well tilted by a Gaussian dip at ``well_minus``.

    W(u) = |u - a-|^2 |u - a+|^2 / 4 - tilt * exp(-|u - a-|^2 / (2 s^2)) + const,
    with const chosen so that the (numerically located) plus well sits at 0.
    """
    am = np.asarray(well_minus, dtype=float)
    ap = np.asarray(well_plus, dtype=float)
    if am.shape != (2,) or ap.shape != (2,):
        raise PotentialError("wells must be points in R^2")
    d = float(np.linalg.norm(ap - am))
    if d == 0.0:
        raise PotentialError("well_minus and well_plus must differ")
    tilt = float(tilt)
    if tilt < 0.0:
        raise PotentialError("tilt must be >= 0")
    s = 0.25 * d if tilt_width is None else float(tilt_width)

    def raw(u):
        u = np.asarray(u, dtype=float)
        A = np.sum((u - am) ** 2, axis=-1)
        B = np.sum((u - ap) ** 2, axis=-1)
        return 0.25 * A * B - tilt * np.exp(-A / (2.0 * s * s))

    def raw_grad(u):
        u = np.asarray(u, dtype=float)
        A = np.sum((u - am) ** 2, axis=-1)[..., None]
        B = np.sum((u - ap) ** 2, axis=-1)[..., None]
        G = np.exp(-A / (2.0 * s * s))
        return 0.5 * ((u - am) * B + (u - ap) * A) + tilt * G * (u - am) / (s * s)

    def local_min(x0):
        res = minimize(lambda x: float(raw(x)), x0, jac=lambda x: raw_grad(x), method="BFGS",
                       options={"gtol": 1e-13})
        return res.x

    bm, bp = local_min(am), local_min(ap)
    if np.linalg.norm(bm - am) > 0.25 * d or np.linalg.norm(bp - ap) > 0.25 * d \
            or np.linalg.norm(bm - bp) < 0.5 * d:
        raise PotentialError("a well vanished under the tilt (local minimisation left its basin)")
    shift = float(raw(bp))
    depth = float(raw(bm)) - shift
    if not depth < 0.0:
        raise PotentialError(f"depth must be < 0 (got {depth:.3e}); the wells are balanced")

    def W(u):
        return raw(u) - shift

    rho = 0.35 * d
    minus = MinimaSet.point(bm, rho)
    plus = MinimaSet.point(bp, rho)
    minus = MinimaSet.point(bm, rho, _fit_coercivity(W, minus, depth, 2))
    plus = MinimaSet.point(bp, rho, _fit_coercivity(W, plus, 0.0, 2))
    R0 = 2.0 * max(np.linalg.norm(am), np.linalg.norm(ap)) + d
    return PotentialModel(
        dim=2, eval=W, grad=raw_grad, minima_minus=minus, minima_plus=plus, depth=depth,
        growth_radius=R0, growth_coeff=_certify_growth(raw_grad, 2, R0),
        name="planar_tilted",
        params={"well_minus": am.tolist(), "well_plus": ap.tolist(), "tilt": tilt, "tilt_width": s},
    )


def load_tabulated(path, tube_minus: Optional[float] = None, tube_plus: Optional[float] = None,
                   tail_curvature: float = 1.0) -> PotentialModel:
    """Scalar potential from a CSV table with columns u, W, dW (header optional).

    Inside the table W is the cubic Hermite interpolant of (W, dW); outside it
    continues as a quadratic with matched value and slope.  The global minimum
    becomes the minus well and the other local minimum the plus well; W is
    shifted so the plus well sits at level 0.
    """
    tab = np.genfromtxt(path, delimiter=",", comments="#")
    if np.isnan(tab[0]).any():
        tab = tab[1:]
    if tab.ndim != 2 or tab.shape[1] < 3 or tab.shape[0] < 4:
        raise PotentialError(f"{path}: expected at least 4 rows of u,W,dW")
    order = np.argsort(tab[:, 0])
    x, w, dw = tab[order, 0], tab[order, 1], tab[order, 2]
    spl = CubicHermiteSpline(x, w, dw)
    dspl = spl.derivative()
    d2spl = spl.derivative(2)
    lo, hi = x[0], x[-1]
    k2 = float(tail_curvature)

    def raw(t):
        t = np.asarray(t, dtype=float)
        out = spl(np.clip(t, lo, hi))
        out = np.where(t < lo, w[0] + dw[0] * (t - lo) + 0.5 * k2 * (t - lo) ** 2, out)
        return np.where(t > hi, w[-1] + dw[-1] * (t - hi) + 0.5 * k2 * (t - hi) ** 2, out)

    def raw_d(t):
        t = np.asarray(t, dtype=float)
        out = dspl(np.clip(t, lo, hi))
        out = np.where(t < lo, dw[0] + k2 * (t - lo), out)
        return np.where(t > hi, dw[-1] + k2 * (t - hi), out)

    fine = np.linspace(lo, hi, 200001)
    vals = raw(fine)
    is_min = np.r_[False, (vals[1:-1] < vals[:-2]) & (vals[1:-1] <= vals[2:]), False]
    mins = fine[is_min]
    if mins.size < 2:
        raise PotentialError(f"{path}: need two local minima, found {mins.size}")
    mins = np.array([brentq(raw_d, m - 2 * (fine[1] - fine[0]), m + 2 * (fine[1] - fine[0]))
                     if raw_d(m - 2 * (fine[1] - fine[0])) * raw_d(m + 2 * (fine[1] - fine[0])) < 0 else m
                     for m in mins])
    levels = raw(mins)
    am = float(mins[np.argmin(levels)])
    others = [m for m in mins if m != am]
    ap = float(min(others, key=lambda m: raw(m)))
    shift = float(raw(ap))
    depth = float(raw(am)) - shift
    if not depth < 0.0:
        raise PotentialError("depth must be < 0")

    def W(u):
        return raw(np.asarray(u, dtype=float)[..., 0]) - shift

    def grad(u):
        return raw_d(np.asarray(u, dtype=float)[..., 0])[..., None]

    def hess(u):
        t = np.asarray(u, dtype=float)[..., 0]
        out = np.where((t < lo) | (t > hi), k2, d2spl(np.clip(t, lo, hi)))
        return out[..., None, None]

    gap = abs(ap - am)
    rho_m = gap / 4 if tube_minus is None else tube_minus
    rho_p = gap / 4 if tube_plus is None else tube_plus
    minus = MinimaSet.point([am], rho_m)
    plus = MinimaSet.point([ap], rho_p)
    minus = MinimaSet.point([am], rho_m, _fit_coercivity(W, minus, depth, 1))
    plus = MinimaSet.point([ap], rho_p, _fit_coercivity(W, plus, 0.0, 1))
    R0 = max(abs(lo), abs(hi)) + 1.0
    return PotentialModel(
        dim=1, eval=W, grad=grad, hess=hess, minima_minus=minus, minima_plus=plus, depth=depth,
        growth_radius=R0, growth_coeff=_certify_growth(grad, 1, R0),
        name="tabulated", params={"path": str(path)},
    )


def build(name: str, **params) -> PotentialModel:
    """Construct a built-in potential by name."""
    if name == "tilted_cubic":
        return make_tilted_cubic(params.get("beta", 0.25))
    if name == "plateau":
        return make_plateau_scalar(params.get("plateau", (-2.0, -1.0)), params.get("depth", -0.05))
    if name == "planar_tilted":
        return make_planar_tilted(params.get("well_minus", (0.0, 0.0)), params.get("well_plus", (1.0, 0.0)),
                                  params.get("tilt", 0.1))
    if name == "tabulated":
        return load_tabulated(params["path"])
    raise PotentialError(f"unknown potential {name!r}")
