"""Sampling-based checks of the structural assumptions on W and the derived constants.

Every check is a deterministic function of (potential, samples, seed).  A
"fail" verdict always carries a witness point; a "pass" is statistical.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .geometry import branch_of, truncation_map
from .potential import MinimaSet, PotentialModel

PASS, FAIL, INCONCLUSIVE = "pass", "fail", "inconclusive"
CONVEXITY_SLACK = 1e-8
N_KAPPA = 10


class AuditError(RuntimeError):
    """A required constant could not be computed from the audit."""


# ---------------------------------------------------------------------------
# closed-form constant formulas

def sfC(C: float) -> float:
    """C^2 (C^2 + (C + 1)^2) / 2."""
    return 0.5 * C * C * (C * C + (C + 1.0) ** 2)


def gamma_minus(C: float) -> float:
    return 1.0 / (C + sfC(C))


def gamma_plus(C: float) -> float:
    return 1.0 / (np.e * (C + sfC(C)))


def eta_bc(C: float) -> float:
    """Width used in the boundary-condition inequality; equals gamma_minus(C)."""
    return 1.0 / (0.5 * C * C * (C * C + (C + 1.0) ** 2) + C)


def eta0(r0: float, kappa_quarter: float, level: float) -> float:
    """min( sqrt(e^-1 (r0/4) sqrt(2 (kappa_{r0/4} - level))), r0/4 )."""
    gap = kappa_quarter - level
    if gap <= 0:
        raise AuditError("kappa at r0/4 does not exceed the well level")
    return min(np.sqrt(np.exp(-1.0) * (r0 / 4.0) * np.sqrt(2.0 * gap)), r0 / 4.0)


def eps0(C: float, eta: float, kappa_eta: float, kappa_rhat: float, level: float) -> float:
    """Small-energy threshold near a well; margins kappa_r - level stand in for beta(r)."""
    m = min(eta * eta / 4.0, kappa_eta - level, kappa_rhat - level)
    return m / (C * C * (C + 1.0))


# ---------------------------------------------------------------------------
# report types

@dataclass
class Verdict:
    status: str
    measured: Optional[float] = None
    witness: Optional[list] = None
    note: str = ""


@dataclass
class AuditedConstants:
    depth: float
    rho_minus: float
    rho_plus: float
    C_minus: float
    C_plus: float
    h0: float
    h_minus: float
    sigma: float
    sigma_of_h: list  # [(h, sigma(h)), ...]
    kappa_r: dict  # {"r_minus": [...], "minus": [...], "r_plus": [...], "plus": [...]}
    kappa_minus_quarter: float
    kappa_plus_quarter: float
    kappa_minus_eta: float
    kappa_plus_eta: float
    kappa_minus_rhat: float
    kappa_plus_rhat: float
    r_hat_minus: float
    r_hat_plus: float
    eta0_minus: float
    eta0_plus: float
    eps0_minus: float
    eps0_plus: float
    sfC_minus: float
    sfC_plus: float
    gamma_minus: float
    gamma_plus: float
    d0: float
    d_alpha0: float
    R: float
    omega: float
    alpha_ss: float

    @property
    def alpha_minus(self) -> float:
        return self.h_minus

    @property
    def alpha_0(self) -> float:
        return self.h0

    def to_record(self) -> dict:
        return asdict(self)

    def recheck(self) -> float:
        """Largest relative mismatch between stored derived constants and their formulas."""
        pairs = [
            (self.sfC_minus, sfC(self.C_minus)), (self.sfC_plus, sfC(self.C_plus)),
            (self.gamma_minus, gamma_minus(self.C_minus)), (self.gamma_plus, gamma_plus(self.C_plus)),
            (self.eta0_minus, eta0(self.rho_minus, self.kappa_minus_quarter, self.depth)),
            (self.eta0_plus, eta0(self.rho_plus, self.kappa_plus_quarter, 0.0)),
            (self.eps0_minus, eps0(self.C_minus, self.eta0_minus, self.kappa_minus_eta,
                                   self.kappa_minus_rhat, self.depth)),
            (self.eps0_plus, eps0(self.C_plus, self.eta0_plus, self.kappa_plus_eta,
                                  self.kappa_plus_rhat, 0.0)),
            (self.alpha_ss, min(self.h0, self.eps0_plus)),
        ]
        return max(abs(a - b) / max(abs(b), 1e-300) for a, b in pairs)


@dataclass
class AuditReport:
    verdicts: dict
    constants: Optional[AuditedConstants]
    samples: int
    seed: int
    notes: list = field(default_factory=list)

    @property
    def status(self) -> str:
        gating = {k: v for k, v in self.verdicts.items() if k != "boundary_condition"}
        if any(v.status == FAIL for v in gating.values()):
            return FAIL
        if all(v.status == PASS for v in gating.values()):
            return PASS
        return INCONCLUSIVE

    def to_record(self) -> dict:
        return {
            "status": self.status, "samples": self.samples, "seed": self.seed,
            "verdicts": {k: asdict(v) for k, v in self.verdicts.items()},
            "constants": None if self.constants is None else self.constants.to_record(),
            "notes": list(self.notes),
        }


# ---------------------------------------------------------------------------
# sampling

def _unit_dirs(rng, m: int, k: int) -> np.ndarray:
    if k == 1:
        return rng.choice([-1.0, 1.0], size=(m, 1))
    d = rng.standard_normal((m, k))
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def _set_points(rng, mset: MinimaSet, m: int) -> np.ndarray:
    """Random points of a minima set (convex combinations along segments)."""
    s = mset.samples
    if mset.kind == "segment-1d":
        lam = rng.uniform(0.0, 1.0, (m, 1))
        return s[1] + lam * (s[0] - s[1])
    return s[rng.integers(0, len(s), m)]


def _tube_points(rng, mset: MinimaSet, m: int, k: int, radius: float) -> np.ndarray:
    r = rng.uniform(0.0, radius, (m, 1))
    return _set_points(rng, mset, m) + r * _unit_dirs(rng, m, k)


def _ball_points(rng, potential: PotentialModel, m: int) -> np.ndarray:
    k, R = potential.dim, potential.growth_radius
    if k == 1:
        return np.linspace(-R, R, m)[:, None]
    r = R * rng.uniform(0.0, 1.0, (m, 1)) ** (1.0 / k)
    return r * _unit_dirs(rng, m, k)


def _coercivity(W, mset: MinimaSet, level: float, pts: np.ndarray, flat_tol: float = 1e-12):
    """(max dist^2 / (W - level), worst point, flat) over tube samples.

    Returns inf with a witness when W is clearly below the level off the set;
    points where W - level is within rounding of zero are skipped and flagged.
    """
    d = mset.dist(pts)
    keep = (d > 1e-4 * mset.tube_radius) & (d <= mset.tube_radius)
    d, p = d[keep], pts[keep]
    gap = W(p) - level
    tol = flat_tol * max(1.0, abs(level))
    bad = gap < -tol
    if bad.any():
        i = int(np.argmax(np.where(bad, d, -1.0)))
        return np.inf, p[i], False
    flat = gap <= tol
    ratio = np.where(flat, 0.0, d * d / np.where(flat, 1.0, gap))
    i = int(np.argmax(ratio))
    return float(ratio[i]), p[i], bool(flat.any())


def _kappa(W, mset: MinimaSet, pts: np.ndarray, radii: np.ndarray) -> np.ndarray:
    d = mset.dist(pts)
    vals = W(pts)
    rho = mset.tube_radius
    out = np.empty(len(radii))
    for i, r in enumerate(radii):
        sel = (d >= r) & (d <= rho)
        out[i] = vals[sel].min() if sel.any() else np.nan
    return out


def _ray_derivative(potential: PotentialModel, base: np.ndarray, u: np.ndarray, theta: float) -> np.ndarray:
    """d/dlambda W(base + lambda (u - base)) at lambda = theta."""
    x = base + theta * (u - base)
    return np.sum(potential.grad(x) * (u - base), axis=-1)


# ---------------------------------------------------------------------------

def audit(potential: PotentialModel, samples: int = 10_000, seed: int = 0) -> AuditReport:
    """Check coercivity, sublevel convexity, ray monotonicity and growth; compute constants."""
    if samples < 10_000:
        raise ValueError("audit needs at least 10^4 samples")
    rng = np.random.default_rng(seed)
    W = potential.eval
    k = potential.dim
    a = potential.depth
    mm, mp = potential.minima_minus, potential.minima_plus
    verdicts: dict[str, Verdict] = {}
    notes: list[str] = []

    # tube samples (plus a dense radial line in 1D) and a global pool in the ball
    def tube_pool(mset, m):
        pts = _tube_points(rng, mset, m, k, mset.tube_radius)
        if k == 1:
            base = mset.samples[:2, 0]
            line = np.linspace(base.min() - mset.tube_radius, base.max() + mset.tube_radius, m)
            pts = np.vstack([pts, line[:, None]])
        return pts

    tm1, tp1 = tube_pool(mm, samples), tube_pool(mp, samples)
    tm2, tp2 = tube_pool(mm, 2 * samples), tube_pool(mp, 2 * samples)
    ball = np.vstack([_ball_points(rng, potential, samples), tm1, tp1])

    # coercivity constants and their stability under doubling
    consts = {}
    for name, mset, level, p1, p2 in (("minus", mm, a, tm1, tm2), ("plus", mp, 0.0, tp1, tp2)):
        C1, w1, _ = _coercivity(W, mset, level, p1)
        C2, w2, flat = _coercivity(W, mset, level, np.vstack([p1, p2]))
        consts[name] = C2
        wit = np.atleast_1d(w2).tolist()
        if not np.isfinite(C2):
            verdicts[f"coercivity_{name}"] = Verdict(
                FAIL, None, wit, f"W falls below its well level at a tube point off the {name} minima")
        elif abs(C2 - C1) > 0.1 * C1:
            verdicts[f"coercivity_{name}"] = Verdict(
                INCONCLUSIVE, C2, wit, f"constant moved from {C1:.4g} to {C2:.4g} when samples doubled")
        elif flat:
            verdicts[f"coercivity_{name}"] = Verdict(
                INCONCLUSIVE, C2, wit, "W is numerically flat at sampled points off the minima set")
        else:
            verdicts[f"coercivity_{name}"] = Verdict(PASS, C2, wit)

    # kappa_r on a 10-point grid of radii and at the radii used by the constants
    pool_m = np.vstack([tm1, tm2])
    pool_p = np.vstack([tp1, tp2])
    r_m = np.linspace(mm.tube_radius / N_KAPPA, mm.tube_radius, N_KAPPA)
    r_p = np.linspace(mp.tube_radius / N_KAPPA, mp.tube_radius, N_KAPPA)
    k_m = _kappa(W, mm, pool_m, r_m)
    k_p = _kappa(W, mp, pool_p, r_p)
    kappa_plus_half = float(_kappa(W, mp, pool_p, np.array([0.5 * mp.tube_radius]))[0])
    kappa_minus_half = float(_kappa(W, mm, pool_m, np.array([0.5 * mm.tube_radius]))[0])

    # levels: h0 separates the plus half-tube, h_minus traps the minus half-tube
    h0 = 0.5 * kappa_plus_half
    d_plus_ball = mp.dist(ball)
    d_minus_ball = mm.dist(ball)
    out_minus = d_minus_ball > 0.5 * mm.tube_radius
    m_out = float(W(ball[out_minus]).min()) if out_minus.any() else 0.0
    h_minus = a + 0.5 * (min(kappa_minus_half, m_out, 0.0) - a)
    lv_ok = h0 > 0.0 and a < h_minus < 0.0
    verdicts["levels"] = Verdict(PASS if lv_ok else FAIL, h_minus,
                                 None if lv_ok else np.atleast_1d(ball[out_minus][np.argmin(W(ball[out_minus]))]).tolist()
                                 if out_minus.any() else [float("nan")] * k,
                                 f"h0={h0:.4g}, h_minus={h_minus:.4g}")

    Eb = W(ball)
    minus_branch = branch_of(potential, ball) & (d_plus_ball > 0.5 * mp.tube_radius)

    # midpoint convexity of the minus sublevel branches
    worst = (-np.inf, None, None)
    empty = False
    for h in (0.5 * a, h_minus, h0):
        members = ball[minus_branch & (Eb <= h)]
        if len(members) < 2:
            empty = True
            continue
        i = rng.integers(0, len(members), samples)
        j = rng.integers(0, len(members), samples)
        mid = 0.5 * (members[i] + members[j])
        excess = W(mid) - h
        q = int(np.argmax(excess))
        if excess[q] > worst[0]:
            worst = (float(excess[q]), mid[q], h)
    if worst[1] is None:
        verdicts["convexity"] = Verdict(INCONCLUSIVE, None, None, "no sampled members")
    elif worst[0] > CONVEXITY_SLACK:
        verdicts["convexity"] = Verdict(FAIL, worst[0], np.atleast_1d(worst[1]).tolist(),
                                        f"midpoint above level {worst[2]:.4g}")
    else:
        verdicts["convexity"] = Verdict(INCONCLUSIVE if empty else PASS, worst[0], None,
                                        "midpoint sampling (statistical)")

    # ray monotonicity; the infimum over lambda in the admissible set is taken at lambda = 1
    region = ball[minus_branch & (Eb <= h0) & (Eb > 0.5 * (a + h_minus))]
    bases = mm.samples
    if len(region) == 0:
        sigma = np.nan
        verdicts["monotonicity"] = Verdict(INCONCLUSIVE, None, None, "empty sampling region")
    else:
        dv = np.min([_ray_derivative(potential, b, region, 1.0) for b in bases], axis=0)
        q = int(np.argmin(dv))
        sigma = float(dv[q])
        verdicts["monotonicity"] = Verdict(PASS if sigma > 0 else FAIL, sigma,
                                           None if sigma > 0 else np.atleast_1d(region[q]).tolist())

    # local monotonicity along the segment from the nearest minus minimiser
    sig_h = []
    near = ball[(Eb <= h_minus) & branch_of(potential, ball)]
    bad_local = None
    for h in a + np.array([0.1, 0.3, 0.5, 0.7, 0.9]) * (h_minus - a):
        sel = near[W(near) >= h]
        if len(sel) == 0:
            sig_h.append((float(h), float("nan")))
            continue
        p = mm.project(sel)
        vals = np.min([_ray_derivative(potential, p, sel, th) for th in (1.0 - 1e-3, 1.0, 1.0 + 1e-3)], axis=0)
        q = int(np.argmin(vals))
        sig_h.append((float(h), float(vals[q])))
        if vals[q] <= 0 and bad_local is None:
            bad_local = sel[q]
    if bad_local is not None:
        verdicts["local_monotonicity"] = Verdict(FAIL, min(s for _, s in sig_h), np.atleast_1d(bad_local).tolist())
    elif any(np.isnan(s) for _, s in sig_h):
        verdicts["local_monotonicity"] = Verdict(INCONCLUSIVE, None, None, "empty sampling shell")
    else:
        verdicts["local_monotonicity"] = Verdict(PASS, min(s for _, s in sig_h))

    # radial growth outside the truncation ball
    R0 = potential.growth_radius
    dirs = _unit_dirs(rng, samples, k)
    far = dirs * rng.uniform(R0, 4.0 * R0, (samples, 1))
    gain = W(truncation_map(potential, far)) - W(far)
    q = int(np.argmax(gain))
    ok = gain[q] <= 1e-12 and potential.growth_coeff > 0
    verdicts["growth"] = Verdict(PASS if ok else FAIL, potential.growth_coeff,
                                 None if ok else np.atleast_1d(far[q]).tolist())

    # distances between regions
    d0 = _set_distance(mm, mp, rng) - 0.5 * mm.tube_radius - 0.5 * mp.tube_radius
    low = ball[minus_branch & (Eb <= h0)]
    d_alpha0 = float(np.maximum(mp.dist(low) - 0.5 * mp.tube_radius, 0.0).min()) if len(low) else np.nan
    R = 1.1 * float(mm.dist(low).max()) if len(low) else np.nan

    constants = None
    C_m, C_p = consts["minus"], consts["plus"]
    if np.isfinite(C_m) and np.isfinite(C_p) and lv_ok:
        try:
            constants = _build_constants(potential, pool_m, pool_p, C_m, C_p, h0, h_minus, sigma, sig_h,
                                         {"r_minus": r_m.tolist(), "minus": k_m.tolist(),
                                          "r_plus": r_p.tolist(), "plus": k_p.tolist()},
                                         d0, d_alpha0, R)
        except AuditError as exc:
            notes.append(f"constants unavailable: {exc}")
    else:
        notes.append("constants unavailable: coercivity or level check failed")

    # boundary-condition inequality (reported, never gating)
    if np.isfinite(C_m) and np.isfinite(d_alpha0):
        eta = eta_bc(C_m)
        rhs = 0.5 * (d_alpha0 * eta) ** 2
        verdicts["boundary_condition"] = Verdict(
            PASS if -a < rhs else FAIL, rhs, None if -a < rhs else [float(d_alpha0)],
            f"-depth={-a:.4g} vs (d eta)^2/2={rhs:.4g}; not required for the speed computation")
    else:
        verdicts["boundary_condition"] = Verdict(INCONCLUSIVE, None, None, "inputs unavailable")

    return AuditReport(verdicts, constants, samples, seed, notes)


def _set_distance(mm: MinimaSet, mp: MinimaSet, rng) -> float:
    a = np.vstack([mm.samples, _set_points(rng, mm, 256)])
    b = np.vstack([mp.samples, _set_points(rng, mp, 256)])
    return float(np.min(np.linalg.norm(a[:, None, :] - b[None, :, :], axis=-1)))


def _build_constants(potential, pool_m, pool_p, C_m, C_p, h0, h_minus, sigma, sig_h, kappa_table,
                     d0, d_alpha0, R) -> AuditedConstants:
    W = potential.eval
    a = potential.depth
    mm, mp = potential.minima_minus, potential.minima_plus
    rm, rp = mm.tube_radius, mp.tube_radius

    def kap(mset, pool, r):
        v = float(_kappa(W, mset, pool, np.array([r]))[0])
        if not np.isfinite(v):
            raise AuditError(f"no samples in the shell at r={r:.3g}")
        return v

    kmq, kpq = kap(mm, pool_m, rm / 4.0), kap(mp, pool_p, rp / 4.0)
    e_m, e_p = eta0(rm, kmq, a), eta0(rp, kpq, 0.0)
    rh_m, rh_p = rm / (C_m + 1.0), rp / (C_p + 1.0)
    kme, kpe = kap(mm, pool_m, e_m), kap(mp, pool_p, e_p)
    kmr, kpr = kap(mm, pool_m, rh_m), kap(mp, pool_p, rh_p)
    ep_m = eps0(C_m, e_m, kme, kmr, a)
    ep_p = eps0(C_p, e_p, kpe, kpr, 0.0)
    if not (np.isfinite(sigma) and sigma > 0):
        raise AuditError("omega (ray monotonicity constant) is not positive")
    if not (np.isfinite(d_alpha0) and d_alpha0 > 0):
        raise AuditError("d_alpha0 is not positive")
    return AuditedConstants(
        depth=a, rho_minus=rm, rho_plus=rp, C_minus=C_m, C_plus=C_p, h0=h0, h_minus=h_minus,
        sigma=sigma, sigma_of_h=sig_h, kappa_r=kappa_table,
        kappa_minus_quarter=kmq, kappa_plus_quarter=kpq, kappa_minus_eta=kme, kappa_plus_eta=kpe,
        kappa_minus_rhat=kmr, kappa_plus_rhat=kpr, r_hat_minus=rh_m, r_hat_plus=rh_p,
        eta0_minus=e_m, eta0_plus=e_p, eps0_minus=ep_m, eps0_plus=ep_p,
        sfC_minus=sfC(C_m), sfC_plus=sfC(C_p), gamma_minus=gamma_minus(C_m), gamma_plus=gamma_plus(C_p),
        d0=d0, d_alpha0=d_alpha0, R=R, omega=sigma, alpha_ss=min(h0, ep_p),
    )


def constants(potential: PotentialModel, report: AuditReport, override: bool = False) -> AuditedConstants:
    """Constants from an audit; non-passing audits need ``override``."""
    if report.status != PASS and not override:
        raise AuditError(f"audit status is {report.status}; pass override=True to use its constants")
    if report.constants is None:
        raise AuditError("; ".join(report.notes) or "constants missing")
    return report.constants


def solver_levels(potential: PotentialModel, samples: int = 10_000, seed: int = 0) -> dict:
    """The levels the minimiser needs (h_minus, rho_plus), available even when C is unusable."""
    rep = audit(potential, samples, seed)
    return {"h_minus": rep.verdicts["levels"].measured, "rho_plus": potential.minima_plus.tube_radius,
            "report": rep}
