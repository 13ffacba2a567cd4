"""Command-line surface: gen, flow, pair, timemap, and audit subcommands.

Exit status is 0 when every enabled check is satisfied, 1 when some check
failed, and 2 on errors (reported as a single JSON object on stdout so
failures stay machine-readable).

The ``RICCIFLOW_THREADS`` environment variable caps the numeric thread
pools (default: all logical processors); it is applied before the numeric
stack is imported, and results are deterministic at the documented
tolerances regardless of its value.
"""

from __future__ import annotations

import argparse
import json
import os
import sys


def _apply_thread_env():
    threads = os.environ.get("RICCIFLOW_THREADS")
    if threads:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, threads)


def make_parser():
    parser = argparse.ArgumentParser(
        prog="ricciflow",
        description="Normalized Ricci flow on closed triangulated surfaces, "
        "with Laplace-spectrum tracking and inequality audits.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a genus-2 mesh and report invariants")
    gen.add_argument("--level", type=int, default=2, help="subdivision level")
    gen.add_argument("--out", help="directory for mesh.json")
    gen.add_argument("--quiet", action="store_true")

    for name, description in (
        ("flow", "run one normalized flow with full audits"),
        ("pair", "run the two-surface comparison pipeline"),
    ):
        cmd = sub.add_parser(name, help=description)
        cmd.add_argument("--config", required=True, help="experiment config JSON")
        cmd.add_argument("--out", help="output directory (overrides config)")
        cmd.add_argument("--seed", type=int, help="override the flow seed")
        cmd.add_argument("--quiet", action="store_true")

    tmap = sub.add_parser("timemap", help="unnormalized/normalized flow time table")
    tmap.add_argument("--area0", type=float, required=True)
    tmap.add_argument("--chi", type=int, required=True)
    tmap.add_argument("--tau", required=True, help="comma-separated tau values")
    tmap.add_argument("--quiet", action="store_true")

    audit = sub.add_parser("audit", help="re-run checks on stored artifacts")
    audit.add_argument("--dir", required=True, help="directory with run artifacts")
    audit.add_argument("--quiet", action="store_true")
    return parser


def main(argv=None):
    _apply_thread_env()
    args = make_parser().parse_args(argv)
    from .errors import RicciFlowError

    try:
        handler = {
            "gen": _cmd_gen,
            "flow": _cmd_flow,
            "pair": _cmd_pair,
            "timemap": _cmd_timemap,
            "audit": _cmd_audit,
        }[args.command]
        return handler(args)
    except RicciFlowError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}))
        return 2


def _say(args, message):
    if not args.quiet:
        print(message)


def _cmd_gen(args):
    from .geometry import ConformalMetric, measure_curvature
    from .mesh import generate_genus2
    from .reporting import write_report_json

    mesh, base_lengths = generate_genus2(args.level)
    metric = ConformalMetric.flat(mesh, base_lengths)
    fld = measure_curvature(metric)
    _say(
        args,
        f"level {args.level}: V={mesh.vertex_count} E={mesh.edge_count} "
        f"F={mesh.triangle_count} chi={mesh.chi} genus={mesh.genus}",
    )
    _say(
        args,
        f"area={fld.total_area:.6f} r={fld.r:.6f} "
        f"R in [{fld.R_min:.6f}, {fld.R_max:.6f}]",
    )
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        payload = {
            "version": 1,
            "vertex_count": mesh.vertex_count,
            "chi": mesh.chi,
            "genus": mesh.genus,
            "triangles": mesh.triangles.tolist(),
            "edges": mesh.edges.tolist(),
            "base_lengths": [float(x) for x in base_lengths],
        }
        write_report_json(os.path.join(args.out, "mesh.json"), payload)
        _say(args, f"wrote {os.path.join(args.out, 'mesh.json')}")
    return 0


def _load_config(args):
    from .errors import ConfigError
    from .experiment import ExperimentConfig

    try:
        with open(args.config, "r", encoding="ascii") as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    config = ExperimentConfig.from_dict(data)
    updates = {}
    if args.out:
        updates["output_dir"] = args.out
    if args.seed is not None:
        from dataclasses import replace as dc_replace

        updates["flow"] = dc_replace(config.flow, seed=args.seed)
    if updates:
        from dataclasses import replace as dc_replace

        config = dc_replace(config, **updates)
    return config


def _progress_printer(args):
    if args.quiet:
        return None

    def progress(t, dev, dt):
        print(f"  t={t:.5f} max|R-r|={dev:.3e} dt={dt:.3e}", flush=True)

    return progress


def _cmd_flow(args):
    from .experiment import run_flow_experiment

    config = _load_config(args)
    artifacts = run_flow_experiment(config, progress=_progress_printer(args))
    ok = artifacts.report_dict["all_satisfied"]
    _say(args, f"converged={artifacts.trace.converged} checks_satisfied={ok}")
    for check in artifacts.report.checks:
        _say(
            args,
            f"  {check.name}: {'ok' if check.satisfied else 'VIOLATED'} "
            f"margin={check.worst_margin:+.6g}",
        )
    return 0 if ok else 1


def _cmd_pair(args):
    from .experiment import run_pair_experiment

    config = _load_config(args)
    artifacts = run_pair_experiment(config, progress=None)
    ok = artifacts.report_dict["all_satisfied"]
    _say(
        args,
        f"delta_hat={artifacts.delta_hat:.6g} bound_factor={artifacts.bound_factor:.6g} "
        f"checks_satisfied={ok}",
    )
    for check in artifacts.report_dict["pair_checks"]:
        _say(
            args,
            f"  {check['name']}: {'ok' if check['satisfied'] else 'VIOLATED'} "
            f"margin={check['worst_margin']:+.6g}",
        )
    return 0 if ok else 1


def _cmd_timemap(args):
    from .flow import rf_nrf_time_map

    try:
        taus = [float(x) for x in args.tau.split(",") if x.strip()]
    except ValueError as exc:
        from .errors import ConfigError

        raise ConfigError(f"bad tau list: {args.tau!r}") from exc
    if args.chi >= 0:
        from .errors import HypothesisError

        raise HypothesisError("timemap requires negative Euler characteristic")
    print(f"{'tau':>16} {'t':>16} {'area':>16}")
    for tau in taus:
        t, area = rf_nrf_time_map(args.area0, args.chi, tau)
        print(f"{tau:16.10g} {t:16.10g} {area:16.10g}")
    return 0


def _cmd_audit(args):
    from .audit import audit_directory

    result = audit_directory(args.dir)
    ok = result["all_satisfied"]
    _say(args, f"audit: checks_satisfied={ok}")
    for check in result["checks"]:
        _say(
            args,
            f"  {check['name']}: {'ok' if check['satisfied'] else 'VIOLATED'} "
            f"margin={check['worst_margin']:+.6g}",
        )
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
