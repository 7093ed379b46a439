"""Discrete-event fixed-priority preemptive scheduler with a budgeted
lowest-priority server hosting the security tasks.

RT tasks run rate-monotonically above the server; the server executes
security tasks in their fixed order while it is active and has capacity.
A security arrival finding the server inactive activates it with full
capacity and a replenishment due one period later; exhausting the
capacity with work pending suspends the server until that replenishment.
Jobs always run for their full WCET (worst-case simulation).

Event tie-breaking at equal timestamps is deterministic: completions are
handled before releases, releases before replenishments, and releases in
priority order.
"""

from __future__ import annotations

import math
from bisect import bisect_left
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .taskmodel import ServerParams

TIME_EPS = 1e-9
HORIZON_CAP = 1e6


def default_horizon(periods):
    """Twice the exact rational lcm of the periods, capped at 10^6 ms."""
    fracs = [Fraction(p) for p in periods if p > 0]
    if not fracs:
        return HORIZON_CAP
    num = math.lcm(*(f.numerator for f in fracs))
    den = math.gcd(*(f.denominator for f in fracs))
    twice = 2 * Fraction(num, den)
    return HORIZON_CAP if twice > HORIZON_CAP else float(twice)


@dataclass(frozen=True)
class SimConfig:
    server: ServerParams | None = None
    assigned_periods: dict | None = None
    horizon: float | None = None
    release_pattern: str = "synchronous"  # or "sporadic"
    seed: int = 0
    replenish_guard: bool = False
    record_events: bool = True


@dataclass
class SimTrace:
    """Time-ordered events plus per-job bookkeeping.

    ``events`` rows are (time, entity, kind, detail); ``jobs`` maps task
    name to completed (release, first_start, completion) triples in
    completion order; ``misses`` counts deadline misses per task,
    including jobs still unfinished at the horizon.
    """

    horizon: float
    events: list = field(default_factory=list)
    jobs: dict = field(default_factory=dict)
    misses: dict = field(default_factory=dict)

    def response_times(self, name):
        return [c - r for r, _, c in self.jobs[name]]

    def miss_total(self, names):
        return sum(self.misses[n] for n in names)


def export_trace_csv(trace, stream):
    "Write events as CSV: time,entity,kind,detail with 6-decimal times."
    stream.write("time,entity,kind,detail\n")
    for t, entity, kind, detail in trace.events:
        stream.write(f"{t:.6f},{entity},{kind},{detail}\n")


def _release_table(count, period, pattern, horizon, rng):
    """Release instants for one task up to the horizon.

    Synchronous releases are exact period multiples (k * T computed by
    multiplication, not accumulation).  Sporadic releases start uniformly
    inside the first period and space successive jobs by T * (1 + u/2).
    """
    if pattern == "synchronous":
        n = int(math.floor(horizon / period + TIME_EPS)) + 1
        out = [k * period for k in range(n)]
        return [t for t in out if t < horizon - TIME_EPS]
    times = []
    t = float(rng.uniform(0.0, period))
    while t < horizon - TIME_EPS:
        times.append(t)
        t += period * (1.0 + 0.5 * float(rng.uniform(0.0, 1.0)))
    return times


def simulate(ts, cfg):
    """Run the scheduler and return the SimTrace."""
    rt = ts.rt_tasks
    sec = ts.sec_tasks
    if sec and (cfg.server is None or cfg.assigned_periods is None):
        raise ValueError("security tasks need server and assigned_periods")
    sec_t = [cfg.assigned_periods[t.name] for t in sec] if sec else []
    horizon = cfg.horizon
    if horizon is None:
        horizon = default_horizon([t.period for t in rt] if rt else sec_t)
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    if cfg.release_pattern not in ("synchronous", "sporadic"):
        raise ValueError(f"unknown release pattern {cfg.release_pattern!r}")

    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(cfg.seed)))
    rt_names = [t.name for t in rt]
    sec_names = [t.name for t in sec]
    rt_c = [t.wcet for t in rt]
    rt_t = [t.period for t in rt]
    sec_c = [t.wcet for t in sec]
    m, n = len(rt), len(sec)

    rel = [_release_table(i, rt_t[i], cfg.release_pattern, horizon, rng)
           for i in range(m)]
    rel += [_release_table(m + j, sec_t[j], cfg.release_pattern, horizon, rng)
            for j in range(n)]
    rel_pos = [0] * (m + n)
    # job = [release, abs_deadline, remaining, started, first_start]
    queues = [[] for _ in range(m + n)]
    heads = [0] * (m + n)  # queue consumption index (cheaper than deque)

    q_cap = cfg.server.capacity if cfg.server else 0.0
    p_rep = cfg.server.period if cfg.server else 0.0
    active = False
    waiting = False
    cap = 0.0
    replenish_at = 0.0
    last_full = -math.inf
    guard = cfg.replenish_guard

    record = cfg.record_events
    events = []
    emit = events.append
    jobs_done = {name: [] for name in rt_names + sec_names}
    misses = dict.fromkeys(rt_names + sec_names, 0)
    names = rt_names + sec_names
    deadline_of = rt_t + sec_t

    running = None  # queue index of the running job's task
    now = 0.0

    while True:
        # releases due now, higher priority first
        for i in range(m + n):
            tbl, pos = rel[i], rel_pos[i]
            while pos < len(tbl) and tbl[pos] <= now + TIME_EPS:
                r = tbl[pos]
                pos += 1
                queues[i].append([r, r + deadline_of[i], rt_c[i] if i < m
                                  else sec_c[i - m], False, 0.0])
                if record:
                    emit((r, names[i], "release", ""))
                if i >= m and not active:
                    active = True
                    if guard and r < last_full + p_rep - TIME_EPS:
                        replenish_at = last_full + p_rep
                    else:
                        cap = q_cap
                        last_full = r
                        replenish_at = r + p_rep
                    if record:
                        emit((r, "server", "server_activate",
                              f"capacity={cap:.6f}"))
            rel_pos[i] = pos

        # replenishment due now (only matters while suspended with work)
        if waiting and replenish_at <= now + TIME_EPS:
            cap = q_cap
            last_full = now
            replenish_at = now + p_rep
            waiting = False
            if record:
                emit((now, "server", "replenish", f"capacity={cap:.6f}"))

        # pick the runner: highest-priority RT job, else the server
        cand = None
        for i in range(m):
            if heads[i] < len(queues[i]):
                cand = i
                break
        if cand is None and active and not waiting:
            for j in range(m, m + n):
                if heads[j] < len(queues[j]):
                    if cap <= TIME_EPS:
                        waiting = True
                        wake = last_full + p_rep if guard else replenish_at
                        replenish_at = max(replenish_at, wake, now)
                        if record:
                            emit((now, "server", "capacity_exhausted", ""))
                    else:
                        cand = j
                    break

        job = queues[cand][heads[cand]] if cand is not None else None
        if running is not None and running != cand:
            prev = queues[running][heads[running]]
            if prev[2] > TIME_EPS and record:
                emit((now, names[running], "preempt", ""))
        if cand is not None and (running != cand or not job[3]):
            if record:
                emit((now, names[cand], "resume" if job[3] else "start", ""))
            if not job[3]:
                job[3] = True
                job[4] = now
        running = cand

        # next decision point
        t_next = horizon
        for i in range(m + n):
            pos = rel_pos[i]
            if pos < len(rel[i]) and rel[i][pos] < t_next:
                t_next = rel[i][pos]
        if waiting and replenish_at < t_next:
            t_next = replenish_at
        if cand is not None:
            if cand < m:
                t_next = min(t_next, now + job[2])
            else:
                t_next = min(t_next, now + job[2], now + cap)

        if cand is None and t_next >= horizon - TIME_EPS:
            break

        delta = t_next - now
        if cand is not None and delta > 0:
            job[2] -= delta
            if cand >= m:
                cap -= delta
        now = t_next

        if cand is not None and job[2] <= TIME_EPS:
            if record:
                emit((now, names[cand], "complete", f"release={job[0]:.6f}"))
            jobs_done[names[cand]].append((job[0], job[4], now))
            if now > job[1] + TIME_EPS:
                misses[names[cand]] += 1
                if record:
                    emit((now, names[cand], "deadline_miss",
                          f"deadline={job[1]:.6f}"))
            heads[cand] += 1
            if heads[cand] > 64:  # drop consumed prefix
                del queues[cand][:heads[cand]]
                heads[cand] = 0
            running = None
            if cand >= m and not any(
                    heads[j] < len(queues[j]) for j in range(m, m + n)):
                active = False
                waiting = False
                if record:
                    emit((now, "server", "server_suspend", ""))
        elif cand is not None and cand >= m and cap <= TIME_EPS:
            waiting = True
            wake = last_full + p_rep if guard else replenish_at
            replenish_at = max(replenish_at, wake, now)
            running = None
            if record:
                emit((now, "server", "capacity_exhausted", ""))
                emit((now, names[cand], "preempt", ""))

        if now >= horizon - TIME_EPS:
            break

    # unfinished work whose deadline already passed
    for i in range(m + n):
        for job in queues[i][heads[i]:]:
            if job[1] <= horizon + TIME_EPS:
                misses[names[i]] += 1
                if record:
                    emit((horizon, names[i], "deadline_miss",
                          f"deadline={job[1]:.6f}"))

    return SimTrace(horizon, events, jobs_done, misses)


def detection_latency(ts, cfg, attack_times, monitored_task):
    """Time from each attack instant to the completion of the first
    monitored-task job that starts at or after it.

    A job already running when the attack lands scans stale state, so it
    does not count; None marks attacks with no qualifying job before the
    horizon (censored).
    """
    if monitored_task not in {t.name for t in ts.sec_tasks}:
        raise ValueError(f"{monitored_task!r} is not a security task")
    trace = simulate(ts, cfg)
    jobs = trace.jobs[monitored_task]
    starts = [s for _, s, _ in jobs]
    out = []
    for a in attack_times:
        k = bisect_left(starts, a - TIME_EPS)
        out.append(jobs[k][2] - a if k < len(jobs) else None)
    return out
