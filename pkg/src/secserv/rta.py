"""Closed-form and fixed-point schedulability mathematics.

Everything here is a pure function of immutable inputs: worst-case
response times, server busy periods and interference delays, the linear
lower-bound supply function of the server, per-task workload bounds, and
the utilization bounds used by the period-adaptation problem.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .taskmodel import ServerParams

# Absolute guard for float round-off in fixed points and boundary checks;
# iterates are finite sums of rationals of the inputs, so exact comparison
# would work in exact arithmetic.
EPS = 1e-9


def _ceil(x):
    "Ceiling with a round-off guard so k*T/T lands on k, not k+1."
    return math.ceil(x - EPS)


def response_time(wcet, deadline, hp):
    """Worst-case response time of a task under fixed-priority preemption.

    ``hp`` lists (wcet, period) of all higher-priority tasks.  Returns
    (response_time, schedulable, iterations).  The fixed point starts at
    the task's own wcet; iteration stops on convergence or as soon as the
    iterate exceeds the deadline (unschedulable verdict, last iterate
    returned).
    """
    r = wcet
    iterations = 0
    while True:
        iterations += 1
        w = wcet + sum(_ceil(r / t) * c for c, t in hp)
        if w > deadline + EPS:
            return w, False, iterations
        if abs(w - r) <= EPS:
            return w, True, iterations
        r = w


@dataclass(frozen=True)
class RtaResult:
    """Per-task response times for an RT task set in priority order."""

    response_times: tuple
    schedulable: bool
    iterations: int


def rt_response_times(rt_tasks):
    """Response-time analysis of a rate-monotonic task list.

    ``rt_tasks`` must already be in priority order (as validated task
    sets are).  Analysis continues past the first miss so every task gets
    a response-time estimate.
    """
    results = []
    schedulable = True
    total_iter = 0
    for i, task in enumerate(rt_tasks):
        hp = [(t.wcet, t.period) for t in rt_tasks[:i]]
        w, ok, it = response_time(task.wcet, task.deadline, hp)
        results.append(w)
        total_iter += it
        schedulable = schedulable and ok
    return RtaResult(tuple(results), schedulable, total_iter)


def rm_slack_bound(m, n, rt_util):
    """Utilization slack left for n security tasks below m RT tasks.

    Liu-Layland bound for m+n rate-monotonic tasks minus the RT
    utilization; negative means the no-server period problem is
    infeasible.
    """
    return (m + n) * (2.0 ** (1.0 / (m + n)) - 1.0) - rt_util


def server_ub(n, server):
    """Utilization bound for n fixed-priority tasks inside the server.

    Valid when every task period is at least 3P - 2Q; reduces to the
    Liu-Layland bound n(2^(1/n) - 1) at full capacity (Q == P).
    """
    q = server.capacity / server.period
    return n * (((3.0 - q) / (3.0 - 2.0 * q)) ** (1.0 / n) - 1.0)


def busy_period_exact(server, rt_tasks):
    """Longest interval the server needs to exhaust its capacity.

    Fixed point of w = Q + sum(ceil(w/T_h) * C_h) over the RT tasks,
    started at Q.  Returns None (diverged) as soon as the iterate exceeds
    the replenishment period, which means the server is unschedulable.
    """
    q, p = server.capacity, server.period
    w = q
    while True:
        w_next = q + sum(_ceil(w / t.period) * t.wcet for t in rt_tasks)
        if w_next > p + EPS:
            return None
        if abs(w_next - w) <= EPS:
            return w_next
        w = w_next


def delay_exact(server, rt_tasks):
    """Worst-case RT interference on one server replenishment, exact.

    None when the busy period diverges.
    """
    w = busy_period_exact(server, rt_tasks)
    if w is None:
        return None
    return sum(_ceil(w / t.period) * t.wcet for t in rt_tasks)


def delay_approx(period, rt_tasks):
    """Linearized interference bound: sum((P/T_h + 1) * C_h).

    Upper-bounds the exact delay whenever the busy period fits in P,
    because ceil(y) <= y + 1.
    """
    return sum((period / t.period + 1.0) * t.wcet for t in rt_tasks)


@dataclass(frozen=True)
class SupplyModel:
    """Server supply parameters: the server and its interference delay."""

    server: ServerParams
    delay: float
    delay_mode: str  # "exact" or "approx"


def supply_exact(server, rt_tasks):
    """SupplyModel with the exact delay, or None if the server diverges."""
    d = delay_exact(server, rt_tasks)
    if d is None:
        return None
    return SupplyModel(server, d, "exact")


def supply_approx(server, rt_tasks):
    """SupplyModel with the linearized delay (always defined)."""
    return SupplyModel(server, delay_approx(server.period, rt_tasks), "approx")


def lsbf(supply, t):
    """Linear lower bound on server supply over an interval of length t.

    (Q/P) * (t - (P - Q) - delay), deliberately un-clamped: consumers
    compare the raw linear value against workload bounds.
    """
    q, p = supply.server.capacity, supply.server.period
    return (q / p) * (t - (p - q) - supply.delay)


def workload_bound(wcet, deadline, hp):
    """Worst-case demand of a task and its higher-priority peers by its
    deadline: C + sum(ceil(D/T_h) * C_h) over (wcet, period) pairs."""
    return wcet + sum(_ceil(deadline / t) * c for c, t in hp)


def sec_workloads(sec_tasks, periods):
    """Workload bound per security task under assigned periods.

    Priorities follow list order; each task's deadline is its assigned
    period.
    """
    out = {}
    hp = []
    for task in sec_tasks:
        d = periods[task.name]
        out[task.name] = workload_bound(task.wcet, d, hp)
        hp.append((task.wcet, periods[task.name]))
    return out


def sec_schedulable_sufficient(sec_tasks, periods, supply):
    """Sufficient per-task schedulability test inside the server.

    A security task passes when the minimum supply by its deadline covers
    its workload bound: lsbf(D_i) >= I_i.  This is sufficient, not
    necessary: a task may still be schedulable when it fails here.
    """
    loads = sec_workloads(sec_tasks, periods)
    return {name: lsbf(supply, periods[name]) >= load - EPS
            for name, load in loads.items()}
