"""Command-line front end.

Subcommands: analyze, optimize, search, simulate, generate, experiment.
Exit codes: 0 success, 2 input error, 3 unschedulable/infeasible verdict,
4 solver failure.  The only environment knob is RTSS_THREADS (parallelism
degree for experiment batches).
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import experiments, optimizer, oracle, rta, simulator, workload
from .taskmodel import (ServerParams, TaskSetError, parse_taskset,
                        serialize_taskset)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_UNSCHEDULABLE = 3
EXIT_SOLVER = 4


def _load_taskset(path):
    return parse_taskset(Path(path).read_text())


def _emit(doc, out):
    text = json.dumps(doc, indent=2) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_analyze(args):
    ts = _load_taskset(args.taskset)
    result = rta.rt_response_times(ts.rt_tasks)
    print(f"{'task':<16}{'wcet':>10}{'period':>10}{'response':>12}  ok")
    for task, w in zip(ts.rt_tasks, result.response_times):
        ok = "yes" if w <= task.deadline + rta.EPS else "NO"
        print(f"{task.name:<16}{task.wcet:>10.3f}{task.period:>10.3f}"
              f"{w:>12.3f}  {ok}")
    verdict = "schedulable" if result.schedulable else "unschedulable"
    slack = rta.rm_slack_bound(len(ts.rt_tasks), max(1, len(ts.sec_tasks)),
                               ts.rt_utilization)
    print(f"verdict: {verdict}")
    print(f"rt utilization: {ts.rt_utilization:.6f}")
    print(f"security slack (rate-monotonic bound): {slack:.6f}")
    return EXIT_OK


def _solution_doc(sol):
    return {
        "status": "schedulable",
        "mode": "server",
        "periods": {k: v for k, v in sorted(sol.periods.items())},
        "server": {"capacity": sol.server.capacity,
                   "period": sol.server.period},
        "eta": sol.eta,
        "xi": sol.xi,
        "iterations": sol.iterations,
        "inner_iterations": list(sol.inner_iterations),
        "trace": [list(row) for row in sol.trace],
    }


def cmd_optimize(args):
    ts = _load_taskset(args.taskset)
    if args.mode == "noserver":
        ps = optimizer.solve_periods(ts, None)
        if ps.status != "optimal":
            _emit({"status": "unschedulable", "mode": "noserver",
                   "reason": "no rate-monotonic slack for the requested "
                             "periods"}, args.out)
            return EXIT_UNSCHEDULABLE
        _emit({"status": "schedulable", "mode": "noserver",
               "periods": {k: v for k, v in sorted(ps.periods.items())},
               "eta": ps.eta, "surrogate_value": ps.surrogate_value},
              args.out)
        return EXIT_OK
    try:
        sol = optimizer.co_optimize(ts, epsilon=args.epsilon, j_max=args.jmax)
    except optimizer.Unschedulable as exc:
        _emit({"status": "unschedulable", "mode": "server",
               "reason": str(exc)}, args.out)
        return EXIT_UNSCHEDULABLE
    _emit(_solution_doc(sol), args.out)
    return EXIT_OK


def cmd_search(args):
    ts = _load_taskset(args.taskset)
    if args.periods == "gp":
        try:
            periods = optimizer.co_optimize(ts).periods
        except optimizer.Unschedulable as exc:
            _emit({"status": "unschedulable", "reason": str(exc)}, args.out)
            return EXIT_UNSCHEDULABLE
    elif args.periods == "des":
        periods = {t.name: t.t_des for t in ts.sec_tasks}
    else:
        periods = {t.name: t.t_max for t in ts.sec_tasks}
    cfg = oracle.SearchConfig(args.pmax, args.delta)
    found = oracle.exhaustive_search(ts, periods, cfg)
    if found is None:
        _emit({"status": "infeasible", "periods_mode": args.periods},
              args.out)
        return EXIT_UNSCHEDULABLE
    _emit({"status": "feasible", "periods_mode": args.periods,
           "capacity": found.capacity, "period": found.period,
           "utilization": found.utilization,
           "periods": {k: v for k, v in sorted(periods.items())}}, args.out)
    return EXIT_OK


def _load_solution(path, ts):
    doc = json.loads(Path(path).read_text())
    if doc.get("status") != "schedulable" or "server" not in doc:
        raise TaskSetError("solution file: not a schedulable server solution")
    periods = doc.get("periods", {})
    names = {t.name for t in ts.sec_tasks}
    if set(periods) != names:
        raise TaskSetError("solution file: periods do not match the "
                           "task set's security tasks")
    server = ServerParams(doc["server"]["capacity"], doc["server"]["period"])
    return {str(k): float(v) for k, v in periods.items()}, server


def cmd_simulate(args):
    ts = _load_taskset(args.taskset)
    periods, server = _load_solution(args.solution, ts)
    cfg = simulator.SimConfig(server=server, assigned_periods=periods,
                              horizon=args.horizon,
                              record_events=bool(args.out))
    trace = simulator.simulate(ts, cfg)
    rt_names = [t.name for t in ts.rt_tasks]
    sec_names = [t.name for t in ts.sec_tasks]
    summary = {
        "horizon": trace.horizon,
        "rt_deadline_misses": trace.miss_total(rt_names),
        "sec_deadline_misses": trace.miss_total(sec_names),
        "misses_by_task": {k: v for k, v in sorted(trace.misses.items())
                           if v},
        "max_response": {name: (max(trace.response_times(name))
                                if trace.jobs[name] else None)
                         for name in rt_names + sec_names},
    }
    if args.out:
        with open(args.out, "w") as fh:
            simulator.export_trace_csv(trace, fh)
    if args.attack_experiment:
        summary["attack_experiment"] = _attack_experiment(
            ts, periods, server, trace.horizon, args)
    _emit(summary, None)
    return EXIT_OK


def _attack_experiment(ts, periods, server, horizon, args):
    """Detection latency with adapted periods versus maximum periods."""
    monitored = args.monitored or ts.sec_tasks[0].name
    rng = np.random.Generator(
        np.random.Philox(np.random.SeedSequence(args.seed)))
    span = max(horizon - 2.0 * max(t.t_max for t in ts.sec_tasks), 0.0)
    attacks = sorted(float(a) for a in rng.uniform(0.0, span,
                                                   args.attack_experiment))
    base = simulator.SimConfig(server=server, assigned_periods=periods,
                               horizon=horizon, record_events=False)
    lat_adapted = simulator.detection_latency(ts, base, attacks, monitored)
    slow = {t.name: t.t_max for t in ts.sec_tasks}
    cfg_max = replace(base, assigned_periods=slow)
    lat_max = simulator.detection_latency(ts, cfg_max, attacks, monitored)
    pairs = [(a, la, lm) for a, la, lm in zip(attacks, lat_adapted, lat_max)
             if la is not None and lm is not None]
    return {
        "monitored_task": monitored,
        "attacks": len(attacks),
        "censored": len(attacks) - len(pairs),
        "mean_latency_adapted": (float(np.mean([p[1] for p in pairs]))
                                 if pairs else None),
        "mean_latency_max_period": (float(np.mean([p[2] for p in pairs]))
                                    if pairs else None),
        "samples": [{"attack": a, "adapted": la, "max_period": lm}
                    for a, la, lm in pairs],
    }


def _util_pair(text):
    lo, hi = (float(x) for x in text.split(","))
    return lo, hi


def cmd_generate(args):
    spec = workload.GenSpec(seed=args.seed)
    if args.rt_util:
        spec = replace(spec, rt_base_util=_util_pair(args.rt_util))
    if args.sec_util:
        spec = replace(spec, sec_base_util=_util_pair(args.sec_util))
    if args.count == 1:
        ts = workload.generate(spec)
        text = serialize_taskset(ts, meta=workload.gen_metadata(spec))
        if args.out:
            Path(args.out).write_text(text)
        else:
            sys.stdout.write(text)
        return EXIT_OK
    if not args.out_dir:
        raise TaskSetError("--out-dir is required for --count > 1")
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = ["set_id,seed,rt_util,sec_util,m,n"]
    for i, seed, ts in workload.generate_batch(spec, args.count):
        meta = dict(workload.gen_metadata(spec), seed=seed)
        (out_dir / f"set_{i:04d}.json").write_text(
            serialize_taskset(ts, meta=meta))
        sec_u = sum(t.wcet / t.t_des for t in ts.sec_tasks)
        manifest.append(f"{i},{seed},{ts.rt_utilization:.6f},{sec_u:.6f},"
                        f"{len(ts.rt_tasks)},{len(ts.sec_tasks)}")
    (out_dir / "manifest.csv").write_text("\n".join(manifest) + "\n")
    return EXIT_OK


def _parse_groups(text):
    out = []
    for part in text.split(","):
        if "-" in part:
            lo, hi = part.split("-")
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    return out


def cmd_experiment(args):
    groups = _parse_groups(args.groups) if args.groups else \
        (list(range(4)) if args.figure == "tightness" else list(range(9)))
    rows, outcomes = experiments.run_experiment(
        args.figure, groups, args.sets_per_group, args.seed,
        p_max=args.pmax, delta=args.delta)
    if args.out:
        with open(args.out, "w") as fh:
            experiments.write_summary_csv(rows, fh)
    else:
        experiments.write_summary_csv(rows, sys.stdout)
    if args.detail_out:
        with open(args.detail_out, "w") as fh:
            experiments.write_detail_csv(outcomes, fh)
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="secserv",
        description="Size a lowest-priority security server and adapt "
                    "monitoring periods for a fixed-priority RT task set.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="RT response-time analysis")
    p.add_argument("taskset")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("optimize", help="joint period/server optimization")
    p.add_argument("taskset")
    p.add_argument("--epsilon", type=float, default=1e-9,
                   help="convergence tolerance on the weighted tightness")
    p.add_argument("--jmax", type=int, default=20,
                   help="maximum outer iterations")
    p.add_argument("--mode", choices=("server", "noserver"),
                   default="server")
    p.add_argument("--out")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("search", help="exhaustive server-parameter search")
    p.add_argument("taskset")
    p.add_argument("--pmax", type=float, default=2500.0)
    p.add_argument("--delta", type=float, default=0.5)
    p.add_argument("--periods", choices=("gp", "des", "max"), default="gp",
                   help="periods handed to the oracle")
    p.add_argument("--out")
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("simulate", help="replay a solution")
    p.add_argument("taskset")
    p.add_argument("solution")
    p.add_argument("--horizon", type=float, default=None)
    p.add_argument("--out", help="trace CSV path")
    p.add_argument("--attack-experiment", type=int, default=0,
                   metavar="N", help="run N seeded attack injections")
    p.add_argument("--monitored", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("generate", help="random task sets")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--rt-util", help="lo,hi")
    p.add_argument("--sec-util", help="lo,hi")
    p.add_argument("--out")
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("experiment", help="batch experiments")
    p.add_argument("--figure", choices=("sched", "quality", "tightness"),
                   required=True)
    p.add_argument("--groups", help="e.g. 0-8 or 0,2,4")
    p.add_argument("--sets-per-group", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--pmax", type=float, default=2500.0)
    p.add_argument("--delta", type=float, default=0.5)
    p.add_argument("--out")
    p.add_argument("--detail-out")
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (TaskSetError, FileNotFoundError, IsADirectoryError,
            json.JSONDecodeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except optimizer.SolverFailure as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
