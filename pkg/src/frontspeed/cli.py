"""Command line front-end: solve, scan, oracle, audit."""

from __future__ import annotations

import argparse
import sys
import traceback
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import __version__
from .artifacts import now, write_csv, write_json, write_manifest
from .auditor import FAIL, AuditError, audit
from .config import ConfigError, RunConfig, apply, load
from .energy import Grid
from .geometry import transition_markers
from .minimizer import MinimizeConfig, minimize
from .oracles import DomainTooShort, PdeConfig, ShootingConfig, run_pde, shoot_speed
from .potential import PotentialError, build
from .speed import (bisect_speed, bracket_bound, decay_rate, m_tol, scan, sign_changes, speed_formula,
                    transition_time_bounds)

EXIT_OK = 0
EXIT_RUN_ERROR = 1
EXIT_CONFIG_ERROR = 2

# agreement tolerances between the bisection and the two oracles
SHOOT_AGREEMENT = 1e-3
PDE_AGREEMENT = 0.02


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="frontspeed", description="Traveling-wave speed solver.")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    for cmd, text in (("solve", "minimise at c, or bisect for the speed when c is not set"),
                      ("scan", "tabulate the constrained minimum over a range of speeds"),
                      ("oracle", "shooting and PDE estimates of the speed"),
                      ("audit", "check the potential's structural assumptions")):
        p = sub.add_parser(cmd, help=text)
        p.add_argument("--config", help="key = value configuration file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override one configuration key (repeatable)")
        for f in fields(RunConfig):
            if f.name == "params":
                continue
            p.add_argument(_flag(f.name), dest="cfg_" + f.name, default=None, metavar="VALUE")
    return ap


def resolve_config(args) -> RunConfig:
    cfg = load(args.config) if args.config else RunConfig()
    for f in fields(RunConfig):
        v = getattr(args, "cfg_" + f.name, None)
        if v is not None:
            apply(cfg, f.name, v)
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        apply(cfg, *item.split("=", 1))
    return cfg.validate()


def _potential(cfg: RunConfig):
    name = "tabulated" if cfg.potential_file is not None else cfg.potential
    try:
        return build(name, **cfg.potential_kwargs())
    except (PotentialError, OSError, KeyError) as exc:
        raise ConfigError(f"cannot build potential: {exc}") from None


def _grid(cfg: RunConfig) -> Grid:
    return Grid(cfg.t_min, cfg.t_max, cfg.n)


def _min_config(cfg: RunConfig) -> MinimizeConfig:
    mc = MinimizeConfig(T=cfg.T, max_iters=cfg.max_iters, grad_tol=cfg.grad_tol)
    try:
        mc.onset(_grid(cfg))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return mc


def _audit(pot, cfg, out: Path):
    rep = audit(pot, cfg.audit_samples, cfg.seed)
    write_json(out / "audit.json", rep.to_record())
    return rep


def _require_constants(rep):
    if rep.status == FAIL:
        bad = [k for k, v in rep.verdicts.items() if v.status == FAIL and k != "boundary_condition"]
        raise AuditError(f"potential fails the audit: {', '.join(bad)}")
    if rep.constants is None:
        raise AuditError("; ".join(rep.notes) or "audited constants unavailable")
    return rep.constants


def _write_profile(path: Path, profile) -> None:
    k = profile.k
    header = ["t"] + [f"u{j}" for j in range(k)]
    write_csv(path, header, np.column_stack([profile.grid.t, profile.values]))


def _verification(profile, pot, c, K) -> dict:
    """Residual, transition markers, time bounds, decay fit and speed formula for one profile."""
    from .minimizer import residual
    rec = {"ode_residual": residual(profile, pot, c)}
    markers = transition_markers(profile, pot, K)
    rec["markers"] = markers.to_record()
    try:
        T1, T2, Tss = transition_time_bounds(c, K.R, K.omega, pot.depth, K.alpha_ss)
        rec["time_bounds"] = {"T1": T1, "T2": T2, "Tss": Tss}
    except ValueError as exc:
        rec["time_bounds"] = {"error": str(exc)}
    try:
        fit = decay_rate(profile, pot, c)
        rec["decay"] = {"rate": fit.rate, "predicted": fit.predicted, "window": list(fit.t_window)}
    except Exception as exc:  # noqa: BLE001 - recorded, not fatal
        rec["decay"] = {"error": str(exc)}
    try:
        rec["formula_speed"] = speed_formula(profile, pot)
    except Exception as exc:  # noqa: BLE001
        rec["formula_speed"] = None
        rec["formula_error"] = str(exc)
    return rec


def cmd_solve(cfg: RunConfig, pot, out: Path) -> dict:
    rep = _audit(pot, cfg, out)
    K = _require_constants(rep)
    grid = _grid(cfg)
    mc = _min_config(cfg)
    if cfg.c is not None:
        res = minimize(pot, grid, cfg.c, mc, "default", K)
        _write_profile(out / "profile.csv", res.profile)
        write_csv(out / "iterations.csv", ["iteration", "energy", "grad_norm"],
                  [(r[0], r[1], r[2]) for r in res.log])
        rec = {"c": cfg.c, "energy": res.energy, "m_tol": m_tol(pot, grid, cfg.c), "converged": res.converged,
               "iterations": res.iterations, "constraint_active_left": res.constraint_active_left,
               "constraint_active_right": res.constraint_active_right, "grad_norm": res.grad_norm}
        rec["verification"] = _verification(res.profile, pot, cfg.c, K)
        write_json(out / "minimize.json", rec)
        return {"minimize": rec, "audit_status": rep.status}
    sr = bisect_speed(pot, grid, mc, cfg.c_tol, K)
    _write_profile(out / "profile.csv", sr.profile)
    write_csv(out / "bisection.csv", ["c", "m", "m_tol", "in_D"], sr.history)
    rec = sr.to_record()
    rec["bracket_bound"] = bracket_bound(pot, K)
    rec["verification"] = _verification(sr.profile, pot, sr.profile_c, K)
    write_json(out / "speed.json", rec)
    return {"speed": rec, "audit_status": rep.status}


def cmd_scan(cfg: RunConfig, pot, out: Path) -> dict:
    if cfg.scan_min is None:
        raise ConfigError("scan needs scan_min and scan_max")
    rep = _audit(pot, cfg, out)
    K = _require_constants(rep)
    cs = np.linspace(cfg.scan_min, cfg.scan_max, cfg.scan_n)
    rows = scan(pot, _grid(cfg), cs, _min_config(cfg), K)
    write_csv(out / "scan.csv", ["c", "m", "m_tol", "in_D"], rows)
    flips = [0.5 * (a[0] + b[0]) for a, b in zip(rows, rows[1:]) if a[3] != b[3]]
    return {"scan": {"sign_changes": sign_changes(rows), "flip_locations": flips,
                     "audit_status": rep.status}}


def cmd_oracle(cfg: RunConfig, pot, out: Path) -> dict:
    res = {}
    K = None
    if cfg.shooting or cfg.triangle:
        K = _require_constants(_audit(pot, cfg, out))
    if cfg.shooting:
        if pot.dim != 1:
            raise ConfigError("shooting needs a scalar potential; set shooting = false")
        sc = ShootingConfig(dt_ode=cfg.shoot_dt, start_offset=cfg.shoot_offset)
        res["shooting_speed"] = shoot_speed(pot, sc, cfg.shoot_tol, 2.0 * bracket_bound(pot, K))
    if cfg.pde:
        pc = PdeConfig(dx=cfg.pde_dx, dt_pde=cfg.pde_dt, X=cfg.pde_X, T_end=cfg.pde_T_end, level=cfg.pde_level)
        try:
            pr = run_pde(pot, pc)
        except DomainTooShort as exc:
            write_csv(out / "front.csv", ["t", "x_front"], np.column_stack([exc.times, exc.positions[:, 0]]))
            raise
        write_csv(out / "front.csv", ["t", "x_front"], np.column_stack([pr.times, pr.positions]))
        res["pde_speed"] = pr.speed
    if cfg.triangle:
        sr = bisect_speed(pot, _grid(cfg), _min_config(cfg), cfg.c_tol, K)
        res["c_star"] = sr.c_star
        checks = {}
        if "shooting_speed" in res:
            checks["shooting"] = abs(sr.c_star - res["shooting_speed"]) <= SHOOT_AGREEMENT
        if "pde_speed" in res:
            checks["pde"] = abs(sr.c_star - res["pde_speed"]) <= PDE_AGREEMENT * sr.c_star
        res["triangle"] = {"checks": checks, "pass": all(checks.values())}
    write_json(out / "oracle.json", res)
    return {"oracle": res}


def cmd_audit(cfg: RunConfig, pot, out: Path) -> dict:
    rep = _audit(pot, cfg, out)
    return {"audit_status": rep.status}


COMMANDS = {"solve": cmd_solve, "scan": cmd_scan, "oracle": cmd_oracle, "audit": cmd_audit}


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        pot = _potential(cfg)
        if args.command in ("solve", "scan"):
            _min_config(cfg)
        if args.command == "scan" and cfg.scan_min is None:
            raise ConfigError("scan needs scan_min and scan_max")
        if args.command == "oracle" and cfg.shooting and pot.dim != 1:
            raise ConfigError("shooting needs a scalar potential; set shooting = false")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(cfg.dumps())
    started = now()
    constants = None
    try:
        results = COMMANDS[args.command](cfg, pot, out)
        code, error = EXIT_OK, None
    except Exception as exc:  # noqa: BLE001 - every failure is recorded in the manifest
        results = {}
        code = EXIT_RUN_ERROR
        error = {"type": type(exc).__name__, "message": str(exc), "traceback": traceback.format_exc()}
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
    audit_file = out / "audit.json"
    if audit_file.is_file():
        from .artifacts import read_json
        constants = read_json(audit_file).get("constants")
    write_manifest(out, args.command, cfg.to_record(), __version__, started, results, constants, error)
    if code == EXIT_OK:
        print(f"wrote {out}")
    return code


if __name__ == "__main__":
    sys.exit(main())
