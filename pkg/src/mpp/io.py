"""CSV and JSON emission of paths, samples and summaries.

Floats are written with 17 significant digits so that parsing the files
reproduces the arrays exactly.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .errors import ConfigError, DomainError
from .geometry import Manifold, manifold_from_config
from .records import PathRecord

__all__ = [
    "FLOAT_FMT",
    "header_comment",
    "write_path_csv",
    "read_path_csv",
    "write_samples_csv",
    "read_samples_csv",
    "path_summary",
    "dumps_json",
    "write_json",
]

FLOAT_FMT = "%.16e"
SCALAR_COLS = ("t", "c", "energy_so_far")


def _fmt(x):
    return FLOAT_FMT % x


def header_comment(m: Manifold | None):
    if m is None:
        return None
    return f"# manifold={json.dumps(m.to_dict(), sort_keys=True)} sha256={m.spec_hash()}"


def write_path_csv(rec: PathRecord, path):
    """Columns t, x0.., v0.., chi0.., c, energy_so_far (the last groups only when present)."""
    if rec is None or len(rec.t) == 0:
        raise DomainError("refusing to write an empty path")
    cols = [("t", rec.t[:, None])]
    cols.append(("x", rec.points))
    for name in ("v", "chi"):
        arr = getattr(rec, name)
        if arr is not None:
            cols.append((name, np.asarray(arr).reshape(len(rec.t), -1)))
    for name, col in (("c", "c"), ("energy", "energy_so_far")):
        arr = getattr(rec, name)
        if arr is not None:
            cols.append((col, np.asarray(arr)[:, None]))
    header = []
    for name, arr in cols:
        header += [name] if arr.shape[1] == 1 and name in SCALAR_COLS else [f"{name}{i}" for i in range(arr.shape[1])]
    data = np.hstack([a for _, a in cols])
    path = Path(path)
    with path.open("w", newline="") as fh:
        comment = header_comment(rec.manifold)
        if comment:
            fh.write(comment + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in data:
            w.writerow([_fmt(x) for x in row])
    return path


def _read_table(path):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    meta = None
    rows = []
    with path.open() as fh:
        for line in fh:
            if line.startswith("#"):
                if "manifold=" in line:
                    blob = line.split("manifold=", 1)[1].rsplit(" sha256=", 1)[0]
                    meta = json.loads(blob)
                continue
            rows.append(line)
    reader = csv.reader(rows)
    try:
        header = next(reader)
    except StopIteration:
        raise ConfigError(f"{path}: empty file") from None
    try:
        data = np.array([[float(x) for x in r] for r in reader if r], dtype=float)
    except ValueError as exc:
        raise ConfigError(f"{path}: malformed number ({exc})") from exc
    if data.size == 0:
        data = data.reshape(0, len(header))
    return header, data, meta


def read_path_csv(path) -> PathRecord:
    header, data, meta = _read_table(path)
    groups = {}
    for j, name in enumerate(header):
        key = name.rstrip("0123456789") if name not in SCALAR_COLS else name
        groups.setdefault(key, []).append(j)
    get = lambda k: data[:, groups[k]] if k in groups else None
    m = manifold_from_config(meta) if meta else None
    return PathRecord(
        t=get("t")[:, 0], points=get("x"), v=get("v"), chi=get("chi"),
        c=None if get("c") is None else get("c")[:, 0],
        energy=None if get("energy_so_far") is None else get("energy_so_far")[:, 0], manifold=m,
    )


def write_samples_csv(points, path, m: Manifold | None = None, extra_header=None):
    """One row per sample with the embedding coordinates; the header comment records the manifold hash."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.size == 0:
        raise DomainError("refusing to write an empty sample set")
    path = Path(path)
    with path.open("w", newline="") as fh:
        comment = header_comment(m)
        if comment:
            fh.write(comment + "\n")
        if extra_header:
            fh.write(f"# {extra_header}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"x{i}" for i in range(pts.shape[1])])
        for row in pts:
            w.writerow([_fmt(x) for x in row])
    return path


def read_samples_csv(path):
    """(points, manifold config or None)."""
    header, data, meta = _read_table(path)
    if len(data) == 0:
        raise ConfigError(f"{path}: no samples")
    return data, meta


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps_json(obj) -> str:
    """Deterministic JSON: sorted keys, shortest round-trip float repr, trailing newline."""
    return json.dumps(_clean(obj), sort_keys=True, indent=2) + "\n"


def write_json(obj, path):
    path = Path(path)
    path.write_text(dumps_json(obj))
    return path


def path_summary(rec: PathRecord, energy=None, length=None) -> dict:
    out = {
        "endpoint": rec.endpoint,
        "T": rec.T,
        "n_steps": len(rec.t) - 1,
    }
    if rec.chi is not None:
        out["chi_T_norm"] = float(np.linalg.norm(rec.chi[-1]))
    if rec.c is not None:
        out["c"] = float(rec.c[0])
        out["first_integral_drift"] = rec.first_integral_drift()
        out["energy"] = 0.5 * float(rec.c[0]) ** 2 * rec.T if energy is None else energy
        out["length"] = float(rec.c[0]) * rec.T if length is None else length
    if rec.manifold is not None:
        out["manifold"] = rec.manifold.to_dict()
    return out
