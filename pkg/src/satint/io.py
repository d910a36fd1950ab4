"""CSV and JSON artifacts with 12 significant digits, plus matching readers."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

DIGITS = 12


def fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    v = float(value)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return f"{v:.{DIGITS}g}"


def parse_float(text: str) -> float:
    return float("nan") if text == "" else float(text)


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty CSV")
    return rows[0], rows[1:]


def read_csv_columns(path) -> dict[str, np.ndarray]:
    header, rows = read_csv(path)
    data = np.array([[parse_float(c) for c in row] for row in rows], dtype=float).reshape(-1, len(header))
    return {name: data[:, j] for j, name in enumerate(header)}


def jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [jsonable(v) for v in obj]
    if obj is None or isinstance(obj, (bool, np.bool_, str)):
        return bool(obj) if isinstance(obj, np.bool_) else obj
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    v = float(obj)
    if not math.isfinite(v):
        return fmt(v)
    return float(f"{v:.{DIGITS}g}")


def _restore(obj):
    if isinstance(obj, dict):
        return {k: _restore(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_restore(v) for v in obj]
    if obj in ("inf", "-inf", "nan"):
        return float(obj)
    return obj


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(jsonable(obj), indent=2, sort_keys=True) + "\n")


def read_json(path):
    """Inverse of :func:`write_json`; non-finite floats come back as floats."""
    return _restore(json.loads(Path(path).read_text()))


# --- typed artifacts -------------------------------------------------------------

def trajectory_header(n: int) -> list[str]:
    return (["t"] + [f"x{i + 1}" for i in range(n)] + ["u", "y", "eta", "V"]
            + [f"xi{i + 1}" for i in range(n)] + ["wcoord"])


def write_trajectory(path, run) -> None:
    n = run.x.shape[1]
    cols = np.column_stack([run.t, run.x, run.u, run.y, run.eta, run.V, run.xi, run.wcoord])
    write_csv(path, trajectory_header(n), cols.tolist())


def read_trajectory(path) -> dict[str, np.ndarray]:
    return read_csv_columns(path)


def write_map(path, emap) -> None:
    n = emap.n
    cols = np.column_stack([emap.u_grid, emap.xi_values, emap.g_values])
    write_csv(path, ["u"] + [f"xi{i + 1}" for i in range(n)] + ["G"], cols.tolist())


def read_map(path) -> dict[str, np.ndarray]:
    return read_csv_columns(path)


def write_evidence(path, cert) -> None:
    write_csv(path, ["u0", "abscissa", "worst_ratio"],
              [(e.u0, e.abscissa, e.worst_ratio) for e in cert.evidence])


def read_evidence(path) -> dict[str, np.ndarray]:
    return read_csv_columns(path)


def write_roa(path, grid) -> None:
    n = grid.X0.shape[1]
    header = [f"x{i + 1}" for i in range(n)] + ["u0", "in_XT", "converged", "settle_time"]
    rows = [list(s.x0) + [s.u0, s.in_XT, s.converged, s.settle_time] for s in grid.samples()]
    write_csv(path, header, rows)


def read_roa(path) -> list:
    from .roa import XtSample

    header, rows = read_csv(path)
    n = len(header) - 4
    out = []
    for row in rows:
        conv = None if row[n + 2] == "" else row[n + 2] == "1"
        out.append(XtSample(np.array([float(c) for c in row[:n]]), float(row[n]), row[n + 1] == "1",
                            conv, float(row[n + 3])))
    return out


def write_lemma_report(path, report) -> None:
    write_json(path, report.to_dict())


def read_lemma_report(path):
    from .lemmas import InstanceRecord, LemmaReport

    d = read_json(path)
    d["details"] = [InstanceRecord(**rec) for rec in d["details"]]
    return LemmaReport(**d)
