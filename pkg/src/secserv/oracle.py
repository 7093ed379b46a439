"""Exhaustive server-parameter search with exact interference analysis.

This is the ground-truth comparator for the GP-based sizing: it sweeps
the replenishment period over a grid, takes for each period the largest
capacity whose exact busy period still fits, checks the raw supply bound
per security task with the exact (non-linearized) delay, and returns the
feasible pair of highest utilization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import rta
from .taskmodel import ServerParams

_EPS = 1e-9


@dataclass(frozen=True)
class SearchConfig:
    p_max: float = 2500.0
    granularity: float = 0.5

    def __post_init__(self):
        if not (self.p_max >= self.granularity > 0):
            raise ValueError("need p_max >= granularity > 0")


def qmin_for_task(deadline, period, delay, workload):
    """Smallest capacity that satisfies the supply bound for one task.

    Positive root of the quadratic obtained from
    (Q/P) * (D - (P - Q) - delay) >= I; substituting the result back
    yields equality.
    """
    b = deadline - period - delay
    return (-b + math.sqrt(b * b + 4.0 * workload * period)) / 2.0


def qmin_over_tasks(sec_tasks, periods, period, delay):
    """Minimum capacity covering every security task at a given P, delay."""
    if not sec_tasks:
        raise ValueError("empty security task list")
    loads = rta.sec_workloads(sec_tasks, periods)
    return max(qmin_for_task(periods[t.name], period, delay, loads[t.name])
               for t in sec_tasks)


def _interference(w, rt_periods, rt_wcets):
    "RT demand ceil(w/T_h)*C_h summed, vectorized over windows w."
    if rt_periods.size == 0:
        return np.zeros_like(w)
    return np.ceil(w[:, None] / rt_periods[None, :] - _EPS) @ rt_wcets


def exhaustive_search(ts, periods, cfg=SearchConfig()):
    """Best exact-feasible server pair on the period grid, or None.

    For each grid P the candidate capacity is the largest Q whose busy
    period converges within P.  Q(w) = w - interference(w) grows between
    RT release instants and peaks right at them, so scanning the release
    multiples and the grid points themselves finds that largest Q
    exactly.  The busy period and delay at the chosen Q are then made
    self-consistent by fixed-point iteration, and the pair is kept only
    if the raw supply bound holds for every security task (equivalently,
    Q is at least the per-task quadratic minimum at that exact delay).
    Ties on utilization prefer the smaller period, then smaller capacity.
    """
    sec = ts.sec_tasks
    if not sec:
        raise ValueError("empty security task list")
    rt_periods = np.array([t.period for t in ts.rt_tasks], dtype=float)
    rt_wcets = np.array([t.wcet for t in ts.rt_tasks], dtype=float)
    loads = rta.sec_workloads(sec, periods)
    deadlines = np.array([periods[t.name] for t in sec])
    demands = np.array([loads[t.name] for t in sec])

    steps = int(math.floor(cfg.p_max / cfg.granularity + _EPS))
    p_grid = np.arange(1, steps + 1) * cfg.granularity
    cands = [p_grid]
    for t in rt_periods:
        k = int(math.floor(cfg.p_max / t + _EPS))
        if k > 0:
            cands.append(np.arange(1, k + 1) * t)
    windows = np.unique(np.concatenate(cands))
    q_at = windows - _interference(windows, rt_periods, rt_wcets)
    best_q = np.maximum.accumulate(q_at)
    q = best_q[np.searchsorted(windows, p_grid + 1e-12, side="right") - 1]

    alive = q > 1e-12
    busy = np.where(alive, q, 0.0)
    for _ in range(100000):
        nxt = q + _interference(busy, rt_periods, rt_wcets)
        nxt = np.where(alive, nxt, busy)
        over = nxt > p_grid + _EPS
        alive &= ~over
        nxt = np.where(over, busy, nxt)
        if np.all(np.abs(nxt - busy) <= _EPS):
            busy = nxt
            break
        busy = nxt
    else:
        raise RuntimeError("busy-period iteration failed to settle")

    delay = busy - q
    margin = (q / p_grid) * (deadlines[:, None] - (p_grid - q) - delay) \
        - demands[:, None]
    feasible = alive & np.all(margin >= -_EPS, axis=0)
    if not feasible.any():
        return None
    idx = np.flatnonzero(feasible)
    util = q[idx] / p_grid[idx]
    order = np.lexsort((q[idx], p_grid[idx], -util))
    pick = idx[order[0]]
    return ServerParams(float(q[pick]), float(p_grid[pick]))
