"""Deterministic artifact writers: CSV tables and result records.

Comma-separated, '.' decimals, header row, LF endings, shortest-roundtrip
float formatting; every numeric row carries the config hash.  No wall-clock
content ever lands in an artifact, so reruns with equal (config, seed) are
byte-identical regardless of worker count.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def write_rows(path, header: list[str], rows, config_hash: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header + ["config_hash"])
        for row in rows:
            writer.writerow([_fmt(v) for v in row] + [config_hash])


def write_curve_csv(path, curve, config_hash: str) -> None:
    write_rows(
        path,
        ["abscissa", "value", "unreliable"],
        zip(curve.grid, curve.values, curve.unreliable),
        config_hash,
    )


def write_plot_columns(path, curve) -> None:
    """Two-column plot-ready dump (abscissa value), reliable points only."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    keep = ~curve.unreliable
    lines = [f"{_fmt(x)} {_fmt(y)}" for x, y in zip(curve.grid[keep], curve.values[keep])]
    path.write_text("\n".join(lines) + "\n")


def write_exact_law_csv(path, law, config_hash: str) -> None:
    rows = []
    for outcome, p in zip(law.support, law.probs):
        if isinstance(outcome, tuple):
            rows.append(list(outcome) + [p])
        else:
            rows.append([outcome, p])
    width = max(len(r) for r in rows) - 1
    header = [f"outcome_{i}" for i in range(width)] + ["prob"]
    rows.append(["truncation"] * width + [law.truncation_mass])
    write_rows(path, header, rows, config_hash)


def write_grid_points_csv(path, points, config_hash: str) -> None:
    write_rows(
        path,
        ["n", "hits", "reps", "p_hat", "log_se", "used"],
        [(p.n, p.hits, p.reps, p.p_hat, p.log_se if p.hits else float("inf"), p.used)
         for p in points],
        config_hash,
    )


def write_property_report(path, reports) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = []
    for rep in reports:
        lines.append(f"# {rep.curve_kind}")
        lines.extend(rep.lines())
    path.write_text("\n".join(lines) + "\n")


def _json_default(obj):
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def write_results_json(path, records: dict) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(records, indent=2, sort_keys=True, default=_json_default) + "\n")
