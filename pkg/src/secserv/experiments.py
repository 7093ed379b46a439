"""Batch experiment protocols: schedulability counts, server-utilization
quality against the exhaustive oracle, and period-tightness statistics
over randomly generated task sets grouped by base utilization.

Each set is generated from a seed derived deterministically from the
master seed and the (group, set) position, so results are reproducible
and independent of the parallelism degree (``RTSS_THREADS``).
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import optimizer, oracle, workload

SEC_UTIL_SCHED = (0.11, 0.2)   # security utilization band for the
RT_UTIL_TIGHT = (0.31, 0.4)    # schedulability sweep; RT band for the
                               # tightness sweep


@dataclass(frozen=True)
class SetOutcome:
    set_id: int
    seed: int
    group: str
    m: int
    n: int
    rt_util: float
    sec_util: float
    gp_schedulable: bool
    oracle_schedulable: bool
    util_gp: float
    p_gp: float
    util_oracle: float
    util_diff: float
    p_gp_beyond_pmax: bool
    xi: float
    eta: float
    iterations: int
    inner_max: int


@dataclass(frozen=True)
class GroupResult:
    util_group: str
    sets_total: int
    sched_gp: int
    sched_oracle: int
    mean_util_diff: float
    mean_xi: float
    mean_iterations: float


def derive_seed(master, group_index, set_index):
    seq = np.random.SeedSequence(master, spawn_key=(group_index, set_index))
    return int(seq.generate_state(1)[0])


def _group_label(lo, hi):
    return f"{lo:.2f}-{hi:.2f}"


def _run_one(job):
    """Generate, optimize, and oracle-check a single task set.

    ``oracle_periods`` picks what the exhaustive search gets to work
    with: the GP-optimized periods ("gp", falling back to the maximum
    allowable ones when the GP finds no solution) or plain "max"/"des".
    """
    set_id, seed, group, spec, cfg, oracle_periods = job
    ts = workload.generate(spec)
    m, n = len(ts.rt_tasks), len(ts.sec_tasks)
    rt_u = ts.rt_utilization
    sec_u = sum(t.wcet / t.t_des for t in ts.sec_tasks)
    sol = None
    try:
        sol = optimizer.co_optimize(ts)
    except optimizer.Unschedulable:
        pass
    if oracle_periods == "gp" and sol is not None:
        periods = sol.periods
    elif oracle_periods == "des":
        periods = {t.name: t.t_des for t in ts.sec_tasks}
    else:
        periods = {t.name: t.t_max for t in ts.sec_tasks}
    found = oracle.exhaustive_search(ts, periods, cfg)
    u_gp = sol.server.utilization if sol else math.nan
    p_gp = sol.server.period if sol else math.nan
    u_ex = found.utilization if found else math.nan
    diff = u_ex - u_gp if (sol and found) else math.nan
    return SetOutcome(
        set_id, seed, group, m, n, rt_u, sec_u,
        sol is not None, found is not None,
        u_gp, p_gp, u_ex, diff,
        bool(sol and sol.server.period > cfg.p_max),
        sol.xi if sol else math.nan,
        sol.eta if sol else math.nan,
        sol.iterations if sol else 0,
        max(sol.inner_iterations) if sol else 0)


def _pool_map(jobs):
    threads = int(os.environ.get("RTSS_THREADS", "1") or "1")
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            chunk = max(1, len(jobs) // (4 * threads))
            return list(pool.map(_run_one, jobs, chunksize=chunk))
    return [_run_one(j) for j in jobs]


def run_experiment(figure, groups, sets_per_group, seed,
                   p_max=2500.0, delta=0.5):
    """Run one experiment protocol; returns (group_rows, set_outcomes).

    * "sched": RT utilization sweeps over the groups with the security
      band fixed; the oracle judges schedulability at the maximum
      allowable periods, the GP via the joint optimization.
    * "quality": same sweep, but the oracle sizes the server for the
      GP-optimized periods so the utilization difference is like for
      like.
    * "tightness": RT band fixed, security utilization sweeps; reports
      the normalized period displacement of schedulable sets.
    """
    if figure not in ("sched", "quality", "tightness"):
        raise ValueError(f"unknown figure {figure!r}")
    cfg = oracle.SearchConfig(p_max, delta)
    jobs = []
    for gi in groups:
        band = workload.util_group(gi)
        if figure == "tightness":
            spec = workload.GenSpec(rt_base_util=RT_UTIL_TIGHT,
                                    sec_base_util=band)
        else:
            spec = workload.GenSpec(rt_base_util=band,
                                    sec_base_util=SEC_UTIL_SCHED)
        label = _group_label(*band)
        mode = "max" if figure == "sched" else "gp"
        for si in range(sets_per_group):
            s = derive_seed(seed, gi, si)
            jobs.append((si, s, label, replace(spec, seed=s), cfg, mode))
    outcomes = _pool_map(jobs)
    rows = []
    per_group = {}
    for o in outcomes:
        per_group.setdefault(o.group, []).append(o)
    for gi in groups:
        band = workload.util_group(gi)
        label = _group_label(*band)
        group = per_group.get(label, [])
        sched = [o for o in group if o.gp_schedulable]
        diffs = [o.util_diff for o in group if not math.isnan(o.util_diff)]
        xis = [o.xi for o in sched]
        rows.append(GroupResult(
            label, len(group),
            sum(o.gp_schedulable for o in group),
            sum(o.oracle_schedulable for o in group),
            float(np.mean(diffs)) if diffs else math.nan,
            float(np.mean(xis)) if xis else math.nan,
            float(np.mean([o.iterations for o in sched])) if sched
            else math.nan))
    return rows, outcomes


def write_summary_csv(rows, stream):
    stream.write("util_group,sets_total,sched_gp,sched_oracle,"
                 "mean_util_diff,mean_xi,mean_iterations\n")
    for r in rows:
        stream.write(f"{r.util_group},{r.sets_total},{r.sched_gp},"
                     f"{r.sched_oracle},{r.mean_util_diff:.6f},"
                     f"{r.mean_xi:.6f},{r.mean_iterations:.6f}\n")


def write_detail_csv(outcomes, stream):
    stream.write("set_id,seed,group,m,n,rt_util,sec_util,gp_schedulable,"
                 "oracle_schedulable,util_gp,p_gp,util_oracle,util_diff,"
                 "p_gp_beyond_pmax,xi,eta,iterations,inner_max\n")
    for o in outcomes:
        stream.write(f"{o.set_id},{o.seed},{o.group},{o.m},{o.n},"
                     f"{o.rt_util:.6f},{o.sec_util:.6f},"
                     f"{int(o.gp_schedulable)},{int(o.oracle_schedulable)},"
                     f"{o.util_gp:.6f},{o.p_gp:.6f},{o.util_oracle:.6f},"
                     f"{o.util_diff:.6f},{int(o.p_gp_beyond_pmax)},"
                     f"{o.xi:.6f},{o.eta:.6f},{o.iterations},{o.inner_max}\n")
