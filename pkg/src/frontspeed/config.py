"""Flat key=value run configuration.

One setting per line, ``#`` starts a comment, blank lines are ignored::

    potential = tilted_cubic
    param.beta = 0.25
    t_min = -40
    t_max = 40
    n = 4001

Potential parameters use the ``param.`` prefix; tuple values are written
comma-separated (``param.plateau = -2,-1``).  Unknown keys are rejected.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    potential: str = "tilted_cubic"
    potential_file: Optional[str] = None
    params: dict = field(default_factory=dict)
    t_min: float = -40.0
    t_max: float = 40.0
    n: int = 4001
    c: Optional[float] = None  # solve: minimise at this speed instead of bisecting
    c_tol: float = 1e-4
    T: Optional[float] = None
    max_iters: int = 400
    grad_tol: float = 1e-5
    scan_min: Optional[float] = None
    scan_max: Optional[float] = None
    scan_n: int = 21
    shooting: bool = True
    pde: bool = True
    triangle: bool = False  # oracle: also run the bisection and compare
    shoot_dt: float = 0.01
    shoot_offset: float = 1e-7
    shoot_tol: float = 1e-7
    pde_dx: float = 0.05
    pde_dt: float = 0.05
    pde_X: float = 100.0
    pde_T_end: float = 150.0
    pde_level: float = 0.5
    audit_samples: int = 10_000
    seed: int = 0
    out: str = "run"

    def validate(self) -> "RunConfig":
        if self.potential == "tabulated" or self.potential_file is not None:
            if self.potential_file is None:
                raise ConfigError("tabulated potential needs potential_file")
            if not Path(self.potential_file).is_file():
                raise ConfigError(f"potential file not found: {self.potential_file}")
        elif self.potential not in ("tilted_cubic", "plateau", "planar_tilted"):
            raise ConfigError(f"unknown potential {self.potential!r}")
        if not self.t_min < 0.0 < self.t_max:
            raise ConfigError("need t_min < 0 < t_max")
        if self.n < 3:
            raise ConfigError("n must be >= 3")
        if self.c is not None and not self.c > 0:
            raise ConfigError("c must be > 0")
        for name in ("c_tol", "grad_tol", "shoot_dt", "shoot_tol", "pde_dx", "pde_dt", "pde_X", "pde_T_end"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0")
        if not 0.0 < self.pde_level < 1.0:
            raise ConfigError("pde_level must lie in (0, 1)")
        if (self.scan_min is None) != (self.scan_max is None):
            raise ConfigError("scan_min and scan_max go together")
        if self.scan_min is not None and not 0.0 < self.scan_min < self.scan_max:
            raise ConfigError("need 0 < scan_min < scan_max")
        if self.scan_n < 2:
            raise ConfigError("scan_n must be >= 2")
        if self.audit_samples < 10_000:
            raise ConfigError("audit_samples must be >= 10000")
        return self

    def potential_kwargs(self) -> dict:
        if self.potential_file is not None:
            return {"path": self.potential_file}
        return dict(self.params)

    def to_record(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def dumps(self) -> str:
        """Config text without the output location, so reruns elsewhere compare equal."""
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "out":
                continue
            if f.name == "params":
                for k, pv in sorted(v.items()):
                    lines.append(f"param.{k} = {_format(pv)}")
            elif v is not None:
                lines.append(f"{f.name} = {_format(v)}")
        return "\n".join(lines) + "\n"


def _format(v) -> str:
    if isinstance(v, (tuple, list)):
        return ",".join(repr(float(x)) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _convert(key: str, raw: str):
    typ = _TYPES[key]
    if raw.lower() in ("none", "") and "Optional" in str(typ):
        return None
    try:
        if "bool" in str(typ):
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if "int" in str(typ):
            return int(raw)
        if "float" in str(typ):
            return float(raw)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None
    return raw


def _param_value(raw: str):
    parts = [p.strip() for p in raw.split(",")]
    try:
        vals = [float(p) for p in parts]
    except ValueError:
        raise ConfigError(f"bad potential parameter value {raw!r}") from None
    return vals[0] if len(vals) == 1 else tuple(vals)


def apply(cfg: RunConfig, key: str, raw: str) -> None:
    """Set one key from its text value."""
    key = key.strip()
    raw = raw.strip()
    if key.startswith("param."):
        cfg.params[key[len("param."):]] = _param_value(raw)
        return
    if key not in _TYPES or key == "params":
        raise ConfigError(f"unknown key {key!r}")
    setattr(cfg, key, _convert(key, raw))


def parse(text: str, base: Optional[RunConfig] = None) -> RunConfig:
    cfg = base or RunConfig()
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, raw = line.split("=", 1)
        apply(cfg, key, raw)
    return cfg


def load(path) -> RunConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {path}")
    return parse(p.read_text())
