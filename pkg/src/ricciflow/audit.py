"""Re-run bound checks from artifacts stored on disk.

The trace CSV keeps the per-step curvature extremes, which are exactly the
binding vertices of the envelope inequalities, and the spectrum CSV keeps
branch-ordered eigenvalues with crossing flags, so everything except the
eigenvector-dependent residual statistics can be re-audited without
re-running the flow. Vertex indices of witnesses are not stored in the CSV,
so audited witnesses carry times (and branch indices) only.
"""

from __future__ import annotations

import datetime
import os

from . import bounds as bnd
from .errors import ConfigError
from .reporting import read_report_json, read_spectrum_csv, read_trace_csv, write_report_json


def audit_directory(path):
    report_path = os.path.join(path, "report.json")
    if not os.path.exists(report_path):
        raise ConfigError(f"no report.json in {path}")
    stored = read_report_json(report_path)
    kind = stored.get("kind")
    if kind == "flow":
        checks = _audit_flow_dir(path, stored["inputs"])
    elif kind == "pair":
        checks = []
        for idx in (1, 2):
            sub = os.path.join(path, f"surface_{idx}")
            for check in _audit_flow_dir(sub, stored[f"surface_{idx}"]["inputs"]):
                check = dict(check)
                check["name"] = f"surface_{idx}/{check['name']}"
                checks.append(check)
        checks.extend(_audit_pair(path, stored["inputs"]))
    else:
        raise ConfigError(f"unknown report kind {kind!r}")

    result = {
        "version": 1,
        "kind": f"audit_{kind}",
        "generated_at": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "source_report": stored.get("generated_at"),
        "checks": checks,
        "all_satisfied": all(c["satisfied"] for c in checks),
    }
    write_report_json(os.path.join(path, "audit_report.json"), result)
    return result


def _audit_flow_dir(path, inputs):
    trace = read_trace_csv(os.path.join(path, "trace.csv"))
    spectrum = read_spectrum_csv(os.path.join(path, "spectrum.csv"))
    alpha, beta, r = inputs["alpha"], inputs["beta"], inputs["r"]
    h = inputs["mean_edge_length"]
    c_disc = inputs["c_disc"]
    tol_env = c_disc * h * h * abs(r)

    checks = bnd.envelope_check_series(
        trace["t"], trace["R_min"], trace["R_max"], r, alpha, beta, tol_env
    )
    if trace["t"].shape[0] >= 3:
        checks.append(
            bnd.rmax_ode_series(trace["t"], trace["R_max"], r, c_disc * h * h * r * r)
        )
    k = spectrum["values"].shape[0]
    if spectrum["times"].shape[0] >= 3:
        checks.append(
            bnd.corridor_check_series(
                spectrum["times"],
                spectrum["values"],
                spectrum["flagged"],
                r,
                alpha,
                beta,
                h,
                branches=list(range(1, min(6, k))),
                c_disc=c_disc,
            )
        )
    n_ratio = min(10, k - 1)
    mu0 = spectrum["sorted_values"][1 : 1 + n_ratio, 0]
    mu1 = spectrum["sorted_values"][1 : 1 + n_ratio, -1]
    ratio_check, _ = bnd.ratio_bound_check(
        mu0, mu1, alpha, beta, r, tol_ratio=inputs["tol_ratio"]
    )
    checks.append(ratio_check)
    return [c.as_dict() for c in checks]


def _audit_pair(path, inputs):
    spec1 = read_spectrum_csv(os.path.join(path, "surface_1", "spectrum.csv"))
    spec2 = read_spectrum_csv(os.path.join(path, "surface_2", "spectrum.csv"))
    k = spec1["values"].shape[0]
    n_cmp = min(10, k - 1)
    alpha, beta, r = inputs["alpha"], inputs["beta"], inputs["r"]
    delta = inputs["delta_hat"]
    tol = inputs["tol_ratio"]
    s1_start = spec1["sorted_values"][1 : 1 + n_cmp, 0]
    s2_start = spec2["sorted_values"][1 : 1 + n_cmp, 0]
    s1_end = spec1["sorted_values"][1 : 1 + n_cmp, -1]
    s2_end = spec2["sorted_values"][1 : 1 + n_cmp, -1]
    buser = bnd.buser_comparison_check(s1_end, s2_end, delta, tol)
    mt, _ = bnd.main_theorem_check(s1_start, s2_start, alpha, beta, r, delta, tol)
    return [buser.as_dict(), mt.as_dict()]
