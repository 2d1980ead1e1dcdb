"""Command-line entry point: run, batch, plot, replay, list.

Exit codes: 0 success, 2 scenario schema error, 3 no feasible avoidance point for
longer than the tolerance window, 4 collision in ``--strict`` mode.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .metrics import compute_metrics
from .runner import RunTrace, dumps, run_scenario
from .scenario import BUNDLED, ScenarioError, bundled_path, load_scenario

EXIT_OK = 0
EXIT_SCHEMA = 2
EXIT_NO_FEASIBLE = 3
EXIT_COLLISION = 4


def _resolve(name: str) -> Path:
    p = Path(name)
    if p.exists() or name not in BUNDLED:
        return p
    return bundled_path(name)


def _metrics_text(metrics: dict) -> str:
    flat = {k: v for k, v in metrics.items() if k != "type"}
    return json.dumps(flat, sort_keys=True, indent=2) + "\n"


def _exit_code(metrics: dict, strict: bool) -> int:
    if metrics["no_feasible_exceeded"]:
        return EXIT_NO_FEASIBLE
    if strict and metrics["collisions"] > 0:
        return EXIT_COLLISION
    return EXIT_OK


def cmd_run(args) -> int:
    try:
        sc = load_scenario(_resolve(args.scenario))
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_SCHEMA
    except ScenarioError as e:
        print(f"schema error: {e}", file=sys.stderr)
        return EXIT_SCHEMA
    enabled = False if args.disable_avoidance else None
    trace = run_scenario(sc, enabled, args.seed)
    if args.trace:
        trace.write(args.trace)
    text = _metrics_text(trace.metrics)
    if args.metrics:
        Path(args.metrics).write_text(text)
    else:
        sys.stdout.write(text)
    return _exit_code(trace.metrics, args.strict)


def _batch_one(job):
    path, out, strict = job
    try:
        sc = load_scenario(path)
    except ScenarioError as e:
        return path.name, EXIT_SCHEMA, str(e)
    trace = run_scenario(sc)
    stem = path.stem
    trace.write(out / f"{stem}.trace.jsonl")
    (out / f"{stem}.metrics.json").write_text(_metrics_text(trace.metrics))
    return path.name, _exit_code(trace.metrics, strict), trace.metrics["mode_sequence"]


def cmd_batch(args) -> int:
    src = Path(args.dir)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    files = sorted(src.glob("*.yaml")) + sorted(src.glob("*.yml"))
    if not files:
        print(f"error: no scenario files in {src}", file=sys.stderr)
        return EXIT_SCHEMA
    jobs = [(f, out, args.strict) for f in files]
    if args.jobs == 1:
        results = [_batch_one(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_batch_one, jobs))
    worst = EXIT_OK
    for name, code, info in results:
        print(f"{name}: exit {code} ({info})")
        worst = max(worst, code)
    return worst


def cmd_plot(args) -> int:
    from .plots import emit_comparison, emit_plots

    traces = [RunTrace.read(p) for p in args.trace]
    out = Path(args.out)
    written = []
    for p, tr in zip(args.trace, traces):
        sub = out if len(traces) == 1 else out / Path(p).name.split(".")[0]
        written += emit_plots(tr, sub)
    if len(traces) > 1:
        written.append(emit_comparison(traces, out / "compare.png"))
    for w in written:
        print(w)
    return EXIT_OK


def cmd_replay(args) -> int:
    trace = RunTrace.read(args.trace)
    stored = trace.metrics
    records = trace.records[:-1] if stored is not None else trace.records
    fresh = {"type": "metrics", **compute_metrics(records)}
    sys.stdout.write(_metrics_text(fresh))
    if stored is not None and dumps(stored) != dumps(fresh):
        print("replay: metrics differ from the stored block", file=sys.stderr)
        return 1
    return EXIT_OK


def cmd_list(args) -> int:
    for name in BUNDLED:
        print(f"{name}\t{bundled_path(name)}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="yieldnav", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one scenario")
    r.add_argument("--scenario", required=True, help="scenario file or bundled scenario name")
    r.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    r.add_argument("--disable-avoidance", action="store_true", help="baseline run")
    r.add_argument("--trace", help="write the JSONL trace here")
    r.add_argument("--metrics", help="write the metrics summary here (default: stdout)")
    r.add_argument("--strict", action="store_true", help="exit 4 on any collision")
    r.set_defaults(func=cmd_run)

    b = sub.add_parser("batch", help="run every scenario in a directory")
    b.add_argument("--dir", required=True)
    b.add_argument("--out", required=True)
    b.add_argument("--jobs", type=int, default=None, help="worker processes (default: CPUs)")
    b.add_argument("--strict", action="store_true")
    b.set_defaults(func=cmd_batch)

    p = sub.add_parser("plot", help="render traces")
    p.add_argument("--trace", required=True, nargs="+")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plot)

    rp = sub.add_parser("replay", help="recompute metrics from a trace")
    rp.add_argument("--trace", required=True)
    rp.set_defaults(func=cmd_replay)

    ls = sub.add_parser("list", help="list bundled scenarios")
    ls.set_defaults(func=cmd_list)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
