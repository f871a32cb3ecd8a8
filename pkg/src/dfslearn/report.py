"""Aligned text and CSV tables for scans and sweeps, and run manifests."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import platform
import sys

import numpy as np
import scipy

from . import __version__


def _fmt(x, digits=4):
    if x is None:
        return "-"
    if isinstance(x, float):
        if not np.isfinite(x):
            return "failed"
        return f"{x:.{digits}f}"
    return str(x)


def scan_table_rows(scan):
    """``(label, F/N, Gap, T_best, Delta_T F)`` per row; Gap is the drop from the row above."""
    out = []
    prev = None
    for row in scan.rows:
        value = row.value
        gap = None if prev is None or not np.isfinite(value) else prev - value
        rep = row.report
        out.append((row.structure.label(), value if np.isfinite(value) else None, gap,
                    None if rep is None else rep.best_epoch,
                    None if rep is None else rep.final_delta))
        if np.isfinite(value):
            prev = value
    return out


SCAN_COLUMNS = ("structure", "F/N", "Gap", "T_best", "Delta_T F")


def align(header, rows):
    cells = [list(header)] + [[_fmt(c) for c in r] for r in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    lines = []
    for k, r in enumerate(cells):
        parts = [r[0].ljust(widths[0])] + [c.rjust(w) for c, w in zip(r[1:], widths[1:])]
        lines.append("  ".join(parts).rstrip())
        if k == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def to_csv(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow(["" if c is None else (repr(c) if isinstance(c, float) else c) for c in r])
    return buf.getvalue()


def report_tables(results, fmt="text"):
    """Render a :class:`ScanResult` or a sweep (``{"columns", "rows"}`` dict)."""
    if isinstance(results, dict):
        header, rows = tuple(results["columns"]), [tuple(r) for r in results["rows"]]
        footer = ""
    else:
        header, rows = SCAN_COLUMNS, scan_table_rows(results)
        footer = "" if results.reference_value is None else f"F_E/N = {results.reference_value:.4f}\n"
    if fmt == "csv":
        return to_csv(header, rows)
    if fmt != "text":
        raise ValueError(f"unknown table format {fmt!r}")
    return align(header, rows) + footer


def history_csv(report):
    return to_csv(("epoch", "train", "test"), report.history)


def config_hash(config):
    blob = json.dumps(config, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def manifest(command, config, seeds, outputs):
    return {
        "command": command,
        "config": config,
        "config_hash": config_hash(config),
        "seeds": seeds,
        "outputs": sorted(outputs),
        "versions": {
            "dfslearn": __version__,
            "python": sys.version.split()[0],
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "platform": platform.platform(),
        },
    }
