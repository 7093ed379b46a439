"""Builds and solves the period-adaptation and server-sizing problems.

Three layers:

* problem builders that translate a task set into geometric programs
  (period adaptation with or without a server; server sizing for fixed
  periods, with the supply denominator condensed into a monomial);
* the condensation loop that re-anchors the monomial approximation at the
  previous capacity until the server objective settles;
* the joint alternating scheme that starts from the maximum allowable
  periods and alternates period and server solves until the cumulative
  weighted tightness stops moving.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import gp, rta
from .taskmodel import ServerParams

# Floor for the Q/P box (GP variables must stay positive) and the factor
# on the largest allowable period that caps them; a replenishment period
# beyond every monitoring deadline buys nothing because the supply
# blackout P - Q + delay must stay below the smallest deadline.
_BOX_LO = 1e-6
_BOX_HI_FACTOR = 2.0


class Unschedulable(Exception):
    """Security tasks cannot be hosted without breaking RT guarantees."""


class SolverFailure(RuntimeError):
    """The GP solver gave up before reaching its tolerances."""


class InfeasibleProblem(ValueError):
    """A builder proved infeasibility before handing off to the solver."""


@dataclass(frozen=True)
class PeriodSolution:
    periods: dict
    eta: float
    surrogate_value: float
    status: str  # "optimal" | "infeasible"


@dataclass(frozen=True)
class ServerFit:
    server: ServerParams | None
    status: str  # "optimal" | "infeasible"
    iterations: int
    converged: bool


@dataclass(frozen=True)
class JointSolution:
    periods: dict
    server: ServerParams
    eta: float
    xi: float
    iterations: int
    trace: tuple  # (iteration, eta, capacity, period) per outer round
    inner_iterations: tuple = field(default_factory=tuple)


def weighted_tightness(sec_tasks, periods):
    """Cumulative weighted tightness: sum of weight * t_des / period."""
    return sum(t.weight * t.t_des / periods[t.name] for t in sec_tasks)


def xi_metric(periods, t_des, t_max):
    """Normalized distance of achieved periods from the desired ones.

    ||T - T_des||_2 / ||T_max - T_des||_2; 0 means every task got its
    desired period, 1 means every task sits at its maximum.
    """
    num = math.sqrt(sum((p - d) ** 2 for p, d in zip(periods, t_des)))
    den = math.sqrt(sum((mx - d) ** 2 for mx, d in zip(t_max, t_des)))
    if den == 0:
        raise ValueError("t_max equals t_des everywhere; xi is undefined")
    return num / den


def _surrogate_objective(sec_tasks):
    # Maximizing sum(w * t_des / T) is handled as the standard GP
    # minimization of the per-task inverses; the true tightness is
    # reported alongside the surrogate value.
    return gp.Posynomial([
        gp.Monomial(1.0 / (t.weight * t.t_des), {t.name: 1.0})
        for t in sec_tasks])


def build_period_problem(ts, server=None):
    """Period-adaptation GP for the security tasks.

    With a server, the utilization budget is the server bound for the
    given (Q, P) and every period must be at least 3P - 2Q (the bound's
    validity condition).  Without a server the budget is the remaining
    rate-monotonic slack below the RT tasks and every period must be at
    least the largest RT period so RM priorities stay intact.
    """
    sec = ts.sec_tasks
    if not sec:
        raise ValueError("no security tasks to adapt")
    variables = [(t.name, t.t_des, t.t_max) for t in sec]
    util = gp.Posynomial([gp.Monomial(t.wcet, {t.name: -1.0}) for t in sec])
    constraints = []
    if server is None:
        slack = rta.rm_slack_bound(len(ts.rt_tasks), len(sec),
                                   ts.rt_utilization)
        if slack <= 0:
            raise InfeasibleProblem(
                f"no rate-monotonic slack left for security tasks "
                f"(bound {slack:.6f})")
        constraints.append(util * (1.0 / slack))
        if ts.rt_tasks:
            t_bar = max(t.period for t in ts.rt_tasks)
            for t in sec:
                if t_bar > t.t_max:
                    raise InfeasibleProblem(
                        f"RM order needs {t.name} period >= {t_bar}, "
                        f"beyond its t_max {t.t_max}")
                constraints.append(gp.Monomial(t_bar, {t.name: -1.0}))
    else:
        bound = rta.server_ub(len(sec), server)
        if bound <= 0:
            raise InfeasibleProblem("server utilization bound is not positive")
        constraints.append(util * (1.0 / bound))
        floor = 3.0 * server.period - 2.0 * server.capacity
        if floor > 0:
            for t in sec:
                if floor > t.t_max * (1 + 1e-12):
                    raise InfeasibleProblem(
                        f"smallest-period bound {floor:.6f} exceeds t_max "
                        f"of {t.name}")
                constraints.append(gp.Monomial(floor, {t.name: -1.0}))
    return gp.GpProblem(tuple(variables), _surrogate_objective(sec),
                        tuple(constraints))


def solve_periods(ts, server=None):
    """Solve the period-adaptation problem; returns a PeriodSolution."""
    try:
        problem = build_period_problem(ts, server)
    except InfeasibleProblem:
        return PeriodSolution({}, math.nan, math.nan, "infeasible")
    sol = gp.solve(problem)
    if sol.status == "infeasible":
        return PeriodSolution({}, math.nan, math.nan, "infeasible")
    if sol.status != "optimal":
        raise SolverFailure(f"period problem: solver status {sol.status}, "
                            f"kkt residual {sol.kkt_residual:.3g}")
    periods = {t.name: sol.values[t.name] for t in ts.sec_tasks}
    return PeriodSolution(periods, weighted_tightness(ts.sec_tasks, periods),
                          sol.objective_value, "optimal")


def build_server_problem(ts, periods, y0, floor_cap=None):
    """Server-sizing GP for fixed security periods.

    Minimizes P/Q (i.e. maximizes server utilization) subject to the
    linearized server schedulability test and, per security task, the
    supply-versus-workload bound with its posynomial denominator Q + T*
    condensed into a monomial anchored at y0 for that task.

    ``floor_cap``, when given, additionally bounds the validity floor of
    the in-server utilization bound: 3P - 2Q <= floor_cap, written as
    3P / (2Q + floor_cap) <= 1 with the denominator condensed the same
    way.  Without it the utilization objective drives P (and with it the
    floor) above every allowable monitoring period, which starves the
    period-adaptation step; the joint optimizer always supplies a cap.
    """
    sec = ts.sec_tasks
    if not sec:
        raise ValueError("no security tasks; nothing to size a server for")
    q = gp.variable("Q")
    p = gp.variable("P")
    sum_c = sum(t.wcet for t in ts.rt_tasks)
    sum_u = ts.rt_utilization
    # Server busy in one replenishment period: Q plus linearized RT
    # interference must fit inside P.
    sched_terms = [gp.Monomial(1.0, {"Q": 1.0, "P": -1.0})]
    if ts.rt_tasks:
        sched_terms.append(gp.Monomial(sum_u))
        sched_terms.append(gp.Monomial(sum_c, {"P": -1.0}))
    constraints = [gp.Posynomial(sched_terms)]
    loads = rta.sec_workloads(sec, periods)
    for task in sec:
        t_star = periods[task.name]
        load = loads[task.name]
        # P*(Q + I) + delay*Q with the linearized delay, expanded:
        num_terms = [gp.Monomial(1.0 + sum_u, {"P": 1.0, "Q": 1.0}),
                     gp.Monomial(load, {"P": 1.0})]
        if sum_c > 0:
            num_terms.append(gp.Monomial(sum_c, {"Q": 1.0}))
        ghat = gp.condense(q + t_star, {"Q": y0[task.name]})
        constraints.append(gp.Posynomial(num_terms) / (ghat * q))
    if floor_cap is not None:
        anchor = min(y0.values())
        hhat = gp.condense(2.0 * q + float(floor_cap), {"Q": anchor})
        constraints.append(gp.Monomial(3.0, {"P": 1.0}) / hhat)
    hi = _BOX_HI_FACTOR * max(t.t_max for t in sec)
    return gp.GpProblem((("Q", _BOX_LO, hi), ("P", _BOX_LO, hi)),
                        q ** -1 * p, tuple(constraints))


def solve_server_params(ts, periods, rel_tol=1e-9, max_rounds=10,
                        floor_cap=None, y0_init=1.0):
    """Size the server for fixed periods via the condensation loop.

    The monomial anchors start at ``y0_init`` and move to the solved
    capacity after each round until the objective settles (relative
    change below ``rel_tol``) or ``max_rounds`` solves have run.  An
    infeasible first round is retried across a ladder of anchors before
    giving up, because condensation is conservative: a bad anchor can
    make a feasible problem look infeasible, never the reverse.  The
    final pair is re-validated against the un-condensed supply bound;
    condensation under-estimates the true denominator, so a solution of
    the condensed problem always passes.
    """
    sec = ts.sec_tasks
    anchor = float(y0_init)
    prev = None
    rounds = 0
    converged = False
    values = None
    recovery = iter([1.0, 10.0, 100.0, 1000.0, 10000.0])
    while rounds < max_rounds:
        rounds += 1
        y0 = {t.name: anchor for t in sec}
        sol = gp.solve(build_server_problem(ts, periods, y0, floor_cap))
        if sol.status == "infeasible":
            if values is not None:
                break  # keep the last feasible round's answer
            for cand in recovery:
                if abs(cand - anchor) > 1e-9 * max(cand, anchor):
                    anchor = cand
                    break
            else:
                return ServerFit(None, "infeasible", rounds, False)
            continue
        if sol.status != "optimal":
            raise SolverFailure(f"server problem: solver status {sol.status}, "
                                f"kkt residual {sol.kkt_residual:.3g}")
        values = sol.values
        if prev is not None and abs(sol.objective_value - prev) <= \
                rel_tol * max(1.0, abs(prev)):
            converged = True
            break
        prev = sol.objective_value
        anchor = values["Q"]
    if values is None:
        return ServerFit(None, "infeasible", rounds, False)
    server = ServerParams(min(values["Q"], values["P"]), values["P"])
    supply = rta.supply_approx(server, ts.rt_tasks)
    if not all(rta.sec_schedulable_sufficient(sec, periods, supply).values()):
        return ServerFit(None, "infeasible", rounds, converged)
    return ServerFit(server, "optimal", rounds, converged)


def check_joint(ts, periods, server, tol=1e-6):
    """Validate a (periods, server) pair against every model constraint,
    independent of how it was produced.  Returns named booleans."""
    sec = ts.sec_tasks
    checks = {}
    checks["period_boxes"] = all(
        t.t_des * (1 - tol) <= periods[t.name] <= t.t_max * (1 + tol)
        for t in sec)
    floor = 3.0 * server.period - 2.0 * server.capacity
    checks["smallest_period"] = all(
        periods[t.name] >= floor - tol * max(1.0, floor) for t in sec)
    util = sum(t.wcet / periods[t.name] for t in sec)
    checks["server_util_bound"] = util <= rta.server_ub(len(sec), server) + tol
    delay = rta.delay_approx(server.period, ts.rt_tasks)
    checks["server_schedulable"] = (server.capacity + delay
                                    <= server.period * (1 + tol))
    supply = rta.supply_approx(server, ts.rt_tasks)
    checks["supply"] = all(
        rta.sec_schedulable_sufficient(sec, periods, supply).values())
    return checks


def _choose_floor_cap(ts, periods_init):
    """Pick the validity-floor cap for the server solves.

    The cap trades period freedom against server utilization: a small
    cap keeps the smallest-period bound 3P - 2Q out of the way of the
    desired periods, a large one lets the server grow.  Candidates are
    probed with a short server solve plus one period solve and scored by
    the resulting weighted tightness; the smallest cap wins ties.  When
    the most permissive cap already lets every task run at its desired
    period, no other cap can do better and the sweep is skipped.
    """
    sec = ts.sec_tasks
    lo = min(t.t_des for t in sec)
    hi = max(lo, min(t.t_max for t in sec))
    full = sum(t.weight for t in sec)

    def probe(cap):
        fit = solve_server_params(ts, periods_init, max_rounds=2,
                                  floor_cap=cap)
        if fit.server is None:
            return None
        ps = solve_periods(ts, fit.server)
        return ps.eta if ps.status == "optimal" else None

    tried = {}

    def eta_at(cap):
        if cap not in tried:
            tried[cap] = probe(cap)
        return tried[cap]

    if (first := eta_at(lo)) is not None and first >= full * (1 - 1e-9):
        return lo
    if hi <= lo * (1 + 1e-12):
        return lo
    for cap in np.geomspace(lo, hi, 12)[1:]:
        eta_at(float(cap))
    for _ in range(3):
        feas = [(e, c) for c, e in tried.items() if e is not None]
        if not feas:
            return hi
        best = max(feas, key=lambda ec: (ec[0], -ec[1]))[1]
        grid = sorted(tried)
        i = grid.index(best)
        left = grid[i - 1] if i > 0 else best
        right = grid[i + 1] if i + 1 < len(grid) else best
        if right - left <= 1e-9 * right:
            break
        for cap in np.geomspace(left, right, 6)[1:-1]:
            eta_at(float(cap))
    feas = [(e, c) for c, e in tried.items() if e is not None]
    if not feas:
        return hi
    return max(feas, key=lambda ec: (ec[0], -ec[1]))[1]


def co_optimize(ts, epsilon=1e-9, j_max=20):
    """Jointly pick security periods and server parameters.

    Starts from the maximum allowable periods, sizes a server (no server
    there means the set is unschedulable), then alternates period and
    server solves.  Any intermediate infeasibility keeps the last fully
    validated triple; iteration stops when the weighted tightness moves
    by at most ``epsilon`` or after ``j_max`` rounds.  Raises
    Unschedulable when no valid triple exists.
    """
    sec = ts.sec_tasks
    if not sec:
        raise ValueError("no security tasks to schedule")
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if j_max < 1:
        raise ValueError("j_max must be at least 1")
    periods = {t.name: float(t.t_max) for t in sec}
    cap = _choose_floor_cap(ts, periods)
    fit = solve_server_params(ts, periods,
                              floor_cap=min(cap, min(periods.values())))
    inner = [fit.iterations]
    if fit.server is None:
        raise Unschedulable("no server fits even the maximum allowable "
                            "monitoring periods")
    server = fit.server
    eta = weighted_tightness(sec, periods)
    trace = [(1, eta, server.capacity, server.period)]
    j = 1
    while j < j_max:
        j += 1
        ps = solve_periods(ts, server)
        if ps.status != "optimal":
            j -= 1
            break
        fit = solve_server_params(ts, ps.periods,
                                  floor_cap=min(cap, *ps.periods.values()),
                                  y0_init=server.capacity)
        inner.append(fit.iterations)
        if fit.server is None:
            j -= 1
            break
        periods, server = ps.periods, fit.server
        trace.append((j, ps.eta, server.capacity, server.period))
        delta, eta = abs(ps.eta - eta), ps.eta
        if delta <= epsilon:
            break

    checks = check_joint(ts, periods, server)
    if not checks["smallest_period"]:
        raise Unschedulable(
            "final periods violate the smallest-period validity bound "
            f"3P - 2Q = {3 * server.period - 2 * server.capacity:.6f}")
    bad = [name for name, ok in checks.items() if not ok]
    if bad:
        raise Unschedulable(f"final solution failed validation: {bad}")
    xi = xi_metric([periods[t.name] for t in sec],
                   [t.t_des for t in sec], [t.t_max for t in sec]) \
        if any(t.t_max > t.t_des for t in sec) else 0.0
    return JointSolution(periods, server, weighted_tightness(sec, periods),
                         xi, j, tuple(trace), tuple(inner))
