"""CSV tables and plot-ready (figure, series, x, y) exports."""

import csv
import json
from pathlib import Path

from .simulator import MetricsLog, SweepResult

SERIES_FIELDS = ("figure", "series", "x", "y")

# sweep metric -> figure stem
PANELS = {
    "acceptance_ratio": "acceptance",
    "overload_ratio": "overload",
    "total_loss": "loss",
    "mean_frag": "frag",
}


class ReportError(ValueError):
    pass


def _cell(v):
    if isinstance(v, bool):
        return "True" if v else "False"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse(s):
    if s in ("True", "False"):
        return s == "True"
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        return s


def write_csv(rows, path, fields=None):
    """Write dict rows; floats keep full repr precision so reading back is exact."""
    rows = list(rows)
    if fields is None:
        if not rows:
            raise ReportError(f"{path}: no rows and no header given")
        fields = list(rows[0])
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fields)
        for r in rows:
            w.writerow([_cell(r[f]) for f in fields])
    return path


def read_csv(path):
    with open(path, newline="") as fh:
        return [{k: _parse(v) for k, v in row.items()} for row in csv.DictReader(fh)]


def write_json(doc, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")
    return path


def sweep_series(result):
    """{figure name: [series rows]} with one figure per panel metric."""
    cells = result.cells()
    if not cells:
        raise ReportError("empty sweep")
    figs = {}
    for metric, stem in PANELS.items():
        rows = [{"figure": f"{stem}_vs_{result.parameter}", "series": c["policy"],
                 "x": c["value"], "y": c["mean"]}
                for c in cells if c["metric"] == metric]
        if rows:
            figs[f"{stem}_vs_{result.parameter}"] = rows
    return figs


def runtime_series(rows):
    if not rows:
        raise ReportError("empty runtime table")
    return {"runtime_vs_nodes": [{"figure": "runtime_vs_nodes", "series": r["policy"],
                                  "x": r["nodes"], "y": r["median_ms"]} for r in rows]}


def correlation_series(rows):
    """Bar table: x = coefficient type, one series per load metric."""
    if not rows:
        raise ReportError("empty correlation table")
    return {"correlation": [{"figure": "correlation", "series": r["metric"],
                             "x": r["method"], "y": r["value"]} for r in rows]}


def metrics_series(log):
    m = log.measured()
    if not m:
        raise ReportError("metrics log has no measured slots")
    out = {}
    for name in ("frag", "loss"):
        out[f"{name}_vs_slot"] = [{"figure": f"{name}_vs_slot", "series": log.config.get("policy", ""),
                                   "x": s["t"], "y": s[name]} for s in m]
    return out


def emit_report(obj, fmt, out_dir, kind=None):
    """Write ``obj`` as CSV tables (``fmt="csv"``) or plot series
    (``fmt="plot-series"``) under ``out_dir``; returns the written paths.

    ``obj`` is a MetricsLog, a SweepResult, or a list of rows with ``kind``
    one of "runtime" and "correlation".
    """
    out_dir = Path(out_dir)
    if fmt not in ("csv", "plot-series"):
        raise ReportError(f"unknown report format {fmt!r}")
    if isinstance(obj, MetricsLog):
        if not obj.slots:
            raise ReportError("metrics log is empty")
        if fmt == "csv":
            from .simulator import SLOT_FIELDS
            return [write_csv(obj.slots, out_dir / "metrics.csv", SLOT_FIELDS)]
        figs = metrics_series(obj)
    elif isinstance(obj, SweepResult):
        if not obj.rows:
            raise ReportError("empty sweep")
        if fmt == "csv":
            return [write_csv(obj.rows, out_dir / "sweep.csv"),
                    write_csv(obj.cells(), out_dir / "cells.csv")]
        figs = sweep_series(obj)
    else:
        rows = list(obj or [])
        if not rows:
            raise ReportError("nothing to report")
        if fmt == "csv":
            return [write_csv(rows, out_dir / f"{kind or 'table'}.csv")]
        if kind == "runtime":
            figs = runtime_series(rows)
        elif kind == "correlation":
            figs = correlation_series(rows)
        else:
            raise ReportError(f"no plot series for table kind {kind!r}")
    return [write_csv(rows, out_dir / "series" / f"{name}.csv", SERIES_FIELDS)
            for name, rows in figs.items()]
