"""Command-line entry point.

    grasq run <config> [--out DIR] [--format csv,json,svg] [--jobs N]
    grasq validate <config>
    grasq list-kinds

Exit codes: 0 all checks pass, 1 some check failed, 2 configuration error,
3 internal error.
"""

import argparse
import datetime
import os
import platform
import sys
import time
import traceback
from concurrent.futures import ProcessPoolExecutor

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_INTERNAL = 0, 1, 2, 3


def _run_one(exp):
    from grasq.cli.experiments import run

    t0 = time.perf_counter()
    try:
        res = {"result": run(exp)}
    except Exception as exc:  # wrapped with context, reported as an internal error
        res = {"error": f"{type(exc).__name__}: {exc}", "traceback": traceback.format_exc()}
    res["seconds"] = time.perf_counter() - t0
    return res


def run_descriptor(desc, jobs=1):
    """Run every experiment; results keep the descriptor order whatever ``jobs`` is."""
    if jobs > 1 and len(desc.experiments) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_run_one, desc.experiments))
    return [_run_one(e) for e in desc.experiments]


def _meta(results, desc, args):
    from grasq import __version__
    from grasq.kernels import BACKEND

    return {"timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds"),
            "version": __version__, "kernel_backend": BACKEND, "python": platform.python_version(),
            "jobs": args.jobs,
            "timings": {e.name: round(r["seconds"], 6) for e, r in zip(desc.experiments, results)}}


def _cmd_run(args):
    from grasq.cli.config import ConfigError, load
    from grasq.cli.report import FORMATS, build_report, emit_report

    formats = [f.strip() for f in args.format.split(",") if f.strip()]
    bad = [f for f in formats if f not in FORMATS]
    if bad:
        print(f"error: unknown format(s) {', '.join(bad)}; choose from {', '.join(FORMATS)}", file=sys.stderr)
        return EXIT_CONFIG
    if args.jobs < 1:
        print("error: --jobs must be positive", file=sys.stderr)
        return EXIT_CONFIG
    try:
        desc = load(args.config)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    results = run_descriptor(desc, args.jobs)
    report = build_report(desc, results)
    try:
        emit_report(report, args.out, formats, meta=_meta(results, desc, args))
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    for e, r in zip(report["experiments"], results):
        if e["status"] == "error":
            print(f"ERROR {e['name']}: {e['error']}", file=sys.stderr)
            continue
        for c in e["checks"]:
            mark = "PASS" if c["passed"] else "FAIL"
            print(f"{mark} {e['name']}.{c['name']}: {c['value']} {c['relation']} {c['bound']}")
    print(f"report written to {os.path.abspath(args.out)} ({report['status']})")
    return {"pass": EXIT_OK, "fail": EXIT_FAIL, "error": EXIT_INTERNAL}[report["status"]]


def _cmd_validate(args):
    from grasq.cli.config import ConfigError, load

    try:
        desc = load(args.config)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for e in desc.experiments:
        extra = ", ".join(f"{k} = {v:.6g}" if isinstance(v, float) else f"{k} = {v}" for k, v in e.derived.items())
        print(f"ok {e.name} ({e.kind})" + (f": {extra}" if extra else ""))
    return EXIT_OK


def _cmd_list(args):
    from grasq.cli.experiments import KINDS

    for name, k in KINDS.items():
        print(f"{name:18s} {k.summary}")
        if args.verbose:
            for p, spec in k.params.items():
                req = " (required)" if spec.required else ""
                print(f"    {p}: {spec.kind} = {spec.default!r}{req}")
            for t, v in k.tolerances.items():
                print(f"    tolerance {t} = {v!r}")
    return EXIT_OK


def build_parser():
    ap = argparse.ArgumentParser(prog="grasq", description="Grassmann stochastic analysis experiment driver")
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run the experiments of a descriptor")
    r.add_argument("config")
    r.add_argument("--out", default="grasq-out", help="output directory (default grasq-out)")
    r.add_argument("--format", default="csv,json,svg", help="comma-separated subset of csv,json,svg")
    r.add_argument("--jobs", type=int, default=1, help="worker processes for multi-experiment descriptors")
    r.set_defaults(func=_cmd_run)
    v = sub.add_parser("validate", help="parse and validate a descriptor")
    v.add_argument("config")
    v.set_defaults(func=_cmd_validate)
    k = sub.add_parser("list-kinds", help="list experiment kinds")
    k.add_argument("-v", "--verbose", action="store_true", help="show parameters and tolerances")
    k.set_defaults(func=_cmd_list)
    return ap


def main(argv=None):
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        return args.func(args)
    except Exception:
        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
