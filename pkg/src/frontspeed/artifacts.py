"""CSV/JSON writers and the checksummed run manifest."""

from __future__ import annotations

import hashlib
import json
import math
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

MANIFEST = "manifest.json"


def _plain(obj):
    """json default: numpy scalars/arrays and tuples to plain Python."""
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"not JSON serialisable: {type(obj).__name__}")


def _finite(obj):
    # NaN/inf are not valid JSON; store them as strings
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    if isinstance(obj, np.generic):
        return _finite(obj.item())
    if isinstance(obj, np.ndarray):
        return _finite(obj.tolist())
    return obj


def write_json(path, record) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_finite(record), indent=2, sort_keys=True, default=_plain) + "\n")
    return path


def read_json(path):
    return json.loads(Path(path).read_text())


def write_csv(path, header, rows) -> Path:
    """Numeric table with full round-trip precision (%.17g)."""
    path = Path(path)
    arr = np.atleast_2d(np.asarray(rows, dtype=float))
    if arr.size == 0:
        arr = np.empty((0, len(header)))
    np.savetxt(path, arr, fmt="%.17g", delimiter=",", header=",".join(header), comments="")
    return path


def read_csv(path):
    """(header, array) from write_csv output."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return header, data


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir, command: str, config: dict, version: str, started: str, results: dict,
                   constants=None, error=None) -> Path:
    """Manifest over every other file in out_dir."""
    out = Path(out_dir)
    files = sorted(p for p in out.iterdir() if p.is_file() and p.name != MANIFEST)
    record = {
        "command": command, "version": version, "config": config, "seed": config.get("seed"),
        "started": started, "finished": now(), "constants": constants, "results": results,
        "error": error, "status": "ok" if error is None else "error",
        "checksums": {p.name: sha256(p) for p in files},
    }
    return write_json(out / MANIFEST, record)


def verify_manifest(out_dir) -> list:
    """Problems found when re-checking the manifest checksums (empty when clean)."""
    out = Path(out_dir)
    man = read_json(out / MANIFEST)
    problems = []
    for name, digest in man["checksums"].items():
        p = out / name
        if not p.is_file():
            problems.append(f"missing: {name}")
        elif sha256(p) != digest:
            problems.append(f"modified: {name}")
    return problems


def now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")
