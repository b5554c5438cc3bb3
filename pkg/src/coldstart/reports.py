"""CSV / JSON writers and readers for datasets, traces, profiles and reports.

Floats are written with ``repr`` so files round-trip exactly and identical
inputs give identical bytes.
"""

import csv
import json
import math

import numpy as np

from .radial_model import GSpec, RegressionDataset, WParams


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def read_csv(path) -> tuple:
    """Return ``(header, rows)`` with numeric cells converted to float."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        return [], []
    header, body = rows[0], rows[1:]
    out = []
    for lineno, r in enumerate(body, start=2):
        if not r:
            continue
        if len(r) != len(header):
            raise ValueError(f"{path}:{lineno}: expected {len(header)} fields, got {len(r)}")
        conv = []
        for cell in r:
            try:
                conv.append(float(cell))
            except ValueError:
                conv.append(cell)
        out.append(conv)
    return header, out


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def _clean(o):
    # JSON has no inf/nan; encode them as strings so output stays valid
    if isinstance(o, float) and not math.isfinite(o):
        return "inf" if o > 0 else ("-inf" if o < 0 else "nan")
    if isinstance(o, dict):
        return {str(k): _clean(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_clean(v) for v in o]
    if isinstance(o, np.ndarray):
        return _clean(o.tolist())
    if isinstance(o, np.floating):
        return _clean(float(o))
    return o


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(_clean(obj), fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


# ---------------------------------------------------------------- datasets


def write_dataset(data: RegressionDataset, csv_path, meta_path):
    d = data.X.shape[1]
    header = ["i"] + [f"x{j + 1}" for j in range(d)] + ["y", "eps"]
    rows = ([i] + list(data.X[i]) + [data.Y[i], data.eps[i]] for i in range(data.N))
    write_csv(csv_path, header, rows)
    write_json(meta_path, dict(N=data.N, D=data.D, d=d, seed=data.seed, wparams=data.wparams.to_dict(),
                               gspec=dict(variant=data.gspec.variant)))


def read_dataset(csv_path, meta_path) -> RegressionDataset:
    with open(meta_path) as fh:
        meta = json.load(fh)
    header, rows = read_csv(csv_path)
    arr = np.array(rows, dtype=float).reshape(-1, len(header))
    d = meta["d"]
    return RegressionDataset(
        N=meta["N"], D=meta["D"], X=arr[:, 1 : 1 + d], Y=arr[:, 1 + d], eps=arr[:, 2 + d], seed=meta["seed"],
        gspec=GSpec(meta["gspec"]["variant"]), wparams=WParams(**meta["wparams"]),
    )


# ---------------------------------------------------------------- profiles


PROFILE_HEADER = ["r", "eps", "F_N", "energy", "entropy", "stderr"]


def write_profile(path, rows):
    write_csv(path, PROFILE_HEADER, rows)
