"""Serialization of traces, spectra, and bound reports.

Time series go to CSV (one row per accepted step), reports to JSON with
nested verdicts, plot data to plain two-column text. All floating-point
values are printed with 17 significant digits, which round-trips 64-bit
floats exactly, and the JSON writer is canonical (sorted keys, fixed
indentation) so identical runs produce byte-identical files; the one
timestamp lives on its own line and is easy to exclude from comparisons.
"""

from __future__ import annotations

import json
import numpy as np

TRACE_COLUMNS = ("t", "dt", "area", "r", "R_min", "R_max", "max_abs_R_minus_r")


def format_float(x):
    return format(float(x), ".17g")


def write_trace_csv(path, trace):
    steps = trace.steps
    columns = {
        "t": steps["t"],
        "dt": steps["dt"],
        "area": steps["area"],
        "r": steps["r"],
        "R_min": steps["R_min"],
        "R_max": steps["R_max"],
        "max_abs_R_minus_r": steps["max_dev"],
    }
    with open(path, "w", encoding="ascii") as fh:
        fh.write(",".join(TRACE_COLUMNS) + "\n")
        n = len(columns["t"])
        for i in range(n):
            fh.write(",".join(format_float(columns[c][i]) for c in TRACE_COLUMNS) + "\n")


def read_trace_csv(path):
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().strip().split(",")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    data = np.array([[float(x) for x in row] for row in rows])
    return {name: data[:, j] for j, name in enumerate(header)}


def write_spectrum_csv(path, branch_set):
    """Branch-ordered and sorted eigenvalues plus crossing flags per time."""
    k = branch_set.k
    header = (
        ["t"]
        + [f"branch_{b}" for b in range(k)]
        + [f"sorted_{b}" for b in range(k)]
        + [f"flag_{b}" for b in range(k)]
    )
    with open(path, "w", encoding="ascii") as fh:
        fh.write(",".join(header) + "\n")
        for j, t in enumerate(branch_set.times):
            row = [format_float(t)]
            row += [format_float(branch_set.values[b, j]) for b in range(k)]
            row += [format_float(branch_set.sorted_values[b, j]) for b in range(k)]
            row += [str(int(branch_set.flagged[b, j])) for b in range(k)]
            fh.write(",".join(row) + "\n")


def read_spectrum_csv(path):
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().strip().split(",")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    k = sum(1 for name in header if name.startswith("branch_"))
    data = np.array([[float(x) for x in row] for row in rows])
    out = {
        "times": data[:, 0],
        "values": data[:, 1 : 1 + k].T,
        "sorted_values": data[:, 1 + k : 1 + 2 * k].T,
        "flagged": data[:, 1 + 2 * k : 1 + 3 * k].T.astype(bool),
    }
    return out


def write_plot_series(path, x, y):
    with open(path, "w", encoding="ascii") as fh:
        for xi, yi in zip(x, y):
            fh.write(f"{format_float(xi)} {format_float(yi)}\n")


def canonical_json(obj):
    """Canonical JSON text: sorted keys, 2-space indent, 17-digit floats."""
    return "".join(_emit(obj, 0)) + "\n"


def _emit(obj, depth):
    pad = "  " * depth
    inner = "  " * (depth + 1)
    if isinstance(obj, dict):
        if not obj:
            yield "{}"
            return
        yield "{\n"
        keys = sorted(obj)
        for pos, key in enumerate(keys):
            yield f"{inner}{json.dumps(str(key))}: "
            yield from _emit(obj[key], depth + 1)
            yield ",\n" if pos < len(keys) - 1 else "\n"
        yield pad + "}"
    elif isinstance(obj, (list, tuple)):
        seq = list(obj)
        if not seq:
            yield "[]"
            return
        yield "[\n"
        for pos, item in enumerate(seq):
            yield inner
            yield from _emit(item, depth + 1)
            yield ",\n" if pos < len(seq) - 1 else "\n"
        yield pad + "]"
    elif isinstance(obj, bool) or obj is None:
        yield json.dumps(obj)
    elif isinstance(obj, (int, np.integer)):
        yield str(int(obj))
    elif isinstance(obj, (float, np.floating)):
        value = float(obj)
        if value != value or value in (float("inf"), float("-inf")):
            raise ValueError("non-finite float in report")
        yield format_float(value)
    elif isinstance(obj, str):
        yield json.dumps(obj)
    elif isinstance(obj, np.ndarray):
        yield from _emit(obj.tolist(), depth)
    else:
        raise TypeError(f"cannot serialize {type(obj)!r}")


def write_report_json(path, report_dict):
    with open(path, "w", encoding="ascii") as fh:
        fh.write(canonical_json(report_dict))


def read_report_json(path):
    with open(path, "r", encoding="ascii") as fh:
        return json.load(fh)
