"""On-disk schemas: metadata-stamped CSV tables, JSON config sidecars, fit
reports.

Every table is plain CSV preceded by ``#`` metadata lines so any external
plotting tool can consume it, and every write is deterministic: keys sorted,
floats in shortest round-trip form. read_table(write_table(x)) == x at the
byte level, which the tests pin.
"""

import json
import os
import re

import numpy as np

from . import __version__

_INT_RE = re.compile(r"^-?\d+$")


def _fmt_cell(x):
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def write_table(path, columns, meta=None):
    """Write an ordered dict of equal-length columns as CSV with `#` metadata.

    Metadata values go through JSON so strings survive quoting; rows use the
    shortest float repr (exact round trip). Returns the path.
    """
    names = list(columns)
    arrays = [np.asarray(columns[k]) for k in names]
    n = len(arrays[0]) if arrays else 0
    if any(len(a) != n for a in arrays):
        raise ValueError("columns have unequal lengths")
    lines = []
    for key in sorted(meta or {}):
        lines.append(f"# {key} = {json.dumps((meta or {})[key])}")
    lines.append(",".join(names))
    for i in range(n):
        lines.append(",".join(_fmt_cell(a[i]) for a in arrays))
    text = "\n".join(lines) + "\n"
    with open(path, "w") as fh:
        fh.write(text)
    return path


def read_table(path):
    """Inverse of write_table: returns (columns, meta).

    Integer-looking columns come back int64, everything else float64.
    """
    meta = {}
    rows = []
    header = None
    with open(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("#"):
                key, _, val = line[1:].partition("=")
                meta[key.strip()] = json.loads(val.strip())
            elif header is None:
                header = line.split(",")
            else:
                rows.append(line.split(","))
    if header is None:
        raise ValueError(f"{path}: no header row")
    columns = {}
    for j, name in enumerate(header):
        cells = [r[j] for r in rows]
        if cells and all(_INT_RE.match(c) for c in cells):
            columns[name] = np.array([int(c) for c in cells], dtype=np.int64)
        else:
            columns[name] = np.array([float(c) for c in cells])
    return columns, meta


def sidecar_path(csv_path):
    root, _ = os.path.splitext(csv_path)
    return root + ".json"


def write_sidecar(csv_path, config):
    """Provenance sidecar next to a CSV: resolved config + code version."""
    payload = dict(config)
    payload["code_version"] = __version__
    path = sidecar_path(csv_path)
    with open(path, "w") as fh:
        fh.write(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    return path


def read_sidecar(csv_path):
    with open(sidecar_path(csv_path)) as fh:
        return json.load(fh)


def ensemble_meta(cfg, n_traj):
    p = cfg.protocol
    return {
        "family": p.family,
        "L": p.L,
        "delta": p.delta,
        "kappa": p.kappa,
        "eta": p.eta,
        "initial_kind": p.initial_kind,
        "t_max": cfg.t_max,
        "master_seed": cfg.master_seed,
        "n_traj": n_traj,
    }


def write_ensemble(path, stats, cfg):
    """EnsembleStats -> CSV (+ JSON sidecar). Missing observables become NaN
    columns so the schema is fixed."""
    n = len(stats.times)
    nan = np.full(n, np.nan)
    cols = {
        "time": stats.times,
        "mean_P": stats.mean,
        "var_P": stats.variance,
        "stderr_P": stats.stderr,
        "mean_entropy": stats.mean_entropy if stats.mean_entropy is not None else nan,
        "mean_Sz": stats.mean_Sz if stats.mean_Sz is not None else nan,
        "mean_J2": stats.mean_J2 if stats.mean_J2 is not None else nan,
        "n_traj": np.full(n, stats.n_traj, dtype=np.int64),
    }
    meta = ensemble_meta(cfg, stats.n_traj)
    write_table(path, cols, meta)
    write_sidecar(path, meta)
    return path


def write_fit(path, fit):
    """FitResult -> small JSON report (schema pinned by FitResult.to_json)."""
    with open(path, "w") as fh:
        fh.write(fit.to_json() + "\n")
    return path


def read_fit(path):
    with open(path) as fh:
        return json.load(fh)
