"""Posynomial algebra and a deterministic geometric-program solver.

A geometric program minimizes a posynomial subject to posynomial <= 1
constraints over positive variables.  The usual log substitution
x = exp(y) turns every posynomial into a log-sum-exp of affine functions
of y, giving a smooth convex program that is solved here with a
log-barrier interior-point method (phase-1 feasibility search, then
Newton with backtracking).  Everything is deterministic: same problem,
same answer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class GpError(ValueError):
    """Malformed monomial/posynomial/problem or evaluation error."""


class Monomial:
    """c * prod(x_l ^ a_l) with c > 0; exponents may be any reals."""

    __slots__ = ("coeff", "exponents")

    def __init__(self, coeff, exponents=None):
        if coeff <= 0:
            raise GpError(f"monomial coefficient must be positive, got {coeff}")
        self.coeff = float(coeff)
        self.exponents = {k: float(v) for k, v in (exponents or {}).items()
                          if v != 0}

    def value(self, x):
        v = self.coeff
        for name, a in self.exponents.items():
            if name not in x:
                raise GpError(f"unbound variable {name!r}")
            base = x[name]
            if base <= 0:
                raise GpError(f"variable {name!r} must be positive, got {base}")
            v *= base ** a
        return v

    def variables(self):
        return set(self.exponents)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            other = Monomial(other)
        if isinstance(other, Monomial):
            exps = dict(self.exponents)
            for k, v in other.exponents.items():
                exps[k] = exps.get(k, 0.0) + v
            return Monomial(self.coeff * other.coeff, exps)
        if isinstance(other, Posynomial):
            return other * self
        return NotImplemented

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, (int, float)):
            other = Monomial(other)
        if isinstance(other, Monomial):
            return self * other ** -1
        return NotImplemented

    def __pow__(self, e):
        return Monomial(self.coeff ** e,
                        {k: v * e for k, v in self.exponents.items()})

    def __add__(self, other):
        return Posynomial([self]) + other

    __radd__ = __add__

    def __repr__(self):
        return f"Monomial({format_posynomial(self)!r})"


class Posynomial:
    """Sum of monomials; closed under addition and multiplication."""

    __slots__ = ("terms",)

    def __init__(self, terms):
        terms = tuple(terms)
        if not terms:
            raise GpError("posynomial needs at least one term")
        if not all(isinstance(t, Monomial) for t in terms):
            raise GpError("posynomial terms must be monomials")
        self.terms = terms

    def value(self, x):
        return sum(t.value(x) for t in self.terms)

    def variables(self):
        out = set()
        for t in self.terms:
            out |= t.variables()
        return out

    def __add__(self, other):
        other = as_posynomial(other)
        return Posynomial(self.terms + other.terms)

    __radd__ = __add__

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            other = Monomial(other)
        if isinstance(other, Monomial):
            return Posynomial([t * other for t in self.terms])
        if isinstance(other, Posynomial):
            return Posynomial([a * b for a in self.terms for b in other.terms])
        return NotImplemented

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, (int, float)):
            other = Monomial(other)
        if isinstance(other, Monomial):
            return self * other ** -1
        return NotImplemented

    def __repr__(self):
        return f"Posynomial({format_posynomial(self)!r})"


def variable(name):
    "The monomial x_name."
    return Monomial(1.0, {name: 1.0})


def as_posynomial(obj):
    if isinstance(obj, Posynomial):
        return obj
    if isinstance(obj, Monomial):
        return Posynomial([obj])
    if isinstance(obj, (int, float)):
        return Posynomial([Monomial(obj)])
    raise GpError(f"cannot treat {obj!r} as a posynomial")


def posy_eval(p, x):
    """Evaluate a monomial or posynomial at a positive assignment."""
    return as_posynomial(p).value(x)


def condense(p, at):
    """Geometric-mean condensation of a posynomial into a monomial.

    With weights alpha_l = u_l(at) / p(at), returns
    ghat(x) = prod((u_l(x)/alpha_l)^alpha_l), which touches p at the
    anchor (ghat(at) = p(at)) and under-estimates it everywhere else
    (ghat <= p by the AM-GM inequality).  A single-term posynomial comes
    back unchanged.
    """
    p = as_posynomial(p)
    if len(p.terms) == 1:
        return p.terms[0]
    for name, v in at.items():
        if v <= 0:
            raise GpError(f"anchor for {name!r} must be positive, got {v}")
    total = p.value(at)
    coeff = 1.0
    exps = {}
    for term in p.terms:
        alpha = term.value(at) / total
        coeff *= (term.coeff / alpha) ** alpha
        for name, a in term.exponents.items():
            exps[name] = exps.get(name, 0.0) + alpha * a
    return Monomial(coeff, exps)


@dataclass(frozen=True)
class GpProblem:
    """A GP in standard form: minimize a posynomial subject to
    posynomial <= 1 constraints, with per-variable box bounds.

    ``variables`` is an ordered list of (name, lower, upper); bounds are
    positive, upper may be inf.  Boxes become monomial constraints in the
    solver, which keeps the feasibility phase trivial.
    """

    variables: tuple
    objective: Posynomial
    constraints: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "variables",
                           tuple((n, float(lo), float(hi))
                                 for n, lo, hi in self.variables))
        object.__setattr__(self, "objective", as_posynomial(self.objective))
        object.__setattr__(self, "constraints",
                           tuple(as_posynomial(c) for c in self.constraints))
        names = [n for n, _, _ in self.variables]
        if len(set(names)) != len(names):
            raise GpError("duplicate variable names")
        for n, lo, hi in self.variables:
            if not (0 < lo <= hi):
                raise GpError(f"variable {n!r}: bounds must satisfy 0 < lo <= hi")
        declared = set(names)
        used = self.objective.variables()
        for c in self.constraints:
            used |= c.variables()
        undeclared = used - declared
        if undeclared:
            raise GpError(f"undeclared variables: {sorted(undeclared)}")


@dataclass(frozen=True)
class GpSolution:
    values: dict
    objective_value: float
    status: str  # "optimal" | "infeasible" | "max_iter"
    kkt_residual: float
    newton_steps: int


def format_posynomial(p):
    "Debug form, one monomial per line: `coeff * var^exp * ...`."
    parts = []
    for t in as_posynomial(p).terms:
        bits = [f"{t.coeff:.12g}"]
        for name in sorted(t.exponents):
            bits.append(f"{name}^{t.exponents[name]:.12g}")
        parts.append(" * ".join(bits))
    return "\n".join(parts)


def format_problem(problem):
    "Human-readable dump of a GpProblem for diffing."
    lines = ["minimize:", format_posynomial(problem.objective)]
    for i, c in enumerate(problem.constraints):
        lines.append(f"subject to [{i}] <= 1:")
        lines.append(format_posynomial(c))
    for n, lo, hi in problem.variables:
        lines.append(f"var {n} in [{lo:.12g}, {hi:.12g}]")
    return "\n".join(lines)


class LogSumExpFn:
    """f(y) = log(sum(exp(A y + b))); value/gradient/softmax weights."""

    __slots__ = ("A", "b")

    def __init__(self, A, b):
        self.A = np.asarray(A, dtype=float)
        self.b = np.asarray(b, dtype=float)

    def value(self, y):
        e = self.A @ y + self.b
        m = e.max()
        return m + math.log(np.exp(e - m).sum())

    def weights(self, y):
        e = self.A @ y + self.b
        e -= e.max()
        w = np.exp(e)
        return w / w.sum()

    def grad(self, y):
        return self.A.T @ self.weights(y)


@dataclass(frozen=True)
class ConvexGp:
    """Log-space image of a GpProblem.

    Objective and constraints are LogSumExpFn over y = log(x); each
    constraint means f(y) <= 0.  Box bounds appear as single-term
    (affine) constraints.
    """

    var_names: tuple
    objective: LogSumExpFn
    constraints: tuple
    n_box: int  # trailing constraints that encode the variable boxes


def _posy_matrix(p, index):
    A = np.zeros((len(p.terms), len(index)))
    b = np.zeros(len(p.terms))
    for k, term in enumerate(p.terms):
        b[k] = math.log(term.coeff)
        for name, a in term.exponents.items():
            A[k, index[name]] = a
    return A, b


def to_convex(problem):
    """Log transform of a GP into a smooth convex program.

    Substituting x = exp(y) sends each posynomial f(x) <= 1 to
    log(sum(exp(a.y + log c))) <= 0, convex in y; a monomial constraint
    collapses to a single affine inequality.
    """
    names = [n for n, _, _ in problem.variables]
    index = {n: i for i, n in enumerate(names)}
    z = len(names)
    objective = LogSumExpFn(*_posy_matrix(problem.objective, index))
    cons = [LogSumExpFn(*_posy_matrix(c, index)) for c in problem.constraints]
    n_box = 0
    for i, (name, lo, hi) in enumerate(problem.variables):
        if hi != math.inf:
            row = np.zeros((1, z))
            row[0, i] = 1.0
            cons.append(LogSumExpFn(row, np.array([-math.log(hi)])))
            n_box += 1
        if lo > 0:
            row = np.zeros((1, z))
            row[0, i] = -1.0
            cons.append(LogSumExpFn(row, np.array([math.log(lo)])))
            n_box += 1
    return ConvexGp(tuple(names), objective, tuple(cons), n_box)


class _Stacked:
    """All constraint terms of one barrier subproblem in flat arrays."""

    def __init__(self, fns, dim):
        rows = [fn.A for fn in fns]
        offs = [fn.b for fn in fns]
        sizes = [fn.A.shape[0] for fn in fns]
        self.A = np.vstack(rows) if rows else np.zeros((0, dim))
        self.b = np.concatenate(offs) if offs else np.zeros(0)
        self.starts = np.cumsum([0] + sizes)[:-1]
        self.seg_of = np.repeat(np.arange(len(fns)), sizes)
        self.seg_count = len(fns)
        self.dim = dim

    def values(self, y):
        if self.seg_count == 0:
            return np.zeros(0)
        e = self.A @ y + self.b
        mx = np.maximum.reduceat(e, self.starts)
        s = np.add.reduceat(np.exp(e - mx[self.seg_of]), self.starts)
        return mx + np.log(s)

    def values_weights(self, y):
        e = self.A @ y + self.b
        mx = np.maximum.reduceat(e, self.starts)
        ex = np.exp(e - mx[self.seg_of])
        s = np.add.reduceat(ex, self.starts)
        w = ex / s[self.seg_of]
        return mx + np.log(s), w

    def grads(self, w):
        "Per-constraint gradient rows from softmax weights."
        return np.add.reduceat(w[:, None] * self.A, self.starts, axis=0)


def _lse_value_grad_hess(fn, y):
    e = fn.A @ y + fn.b
    m = e.max()
    ex = np.exp(e - m)
    s = ex.sum()
    w = ex / s
    g = fn.A.T @ w
    H = fn.A.T @ (w[:, None] * fn.A) - np.outer(g, g)
    return m + math.log(s), g, H


def _barrier_minimize(obj_fn, stacked, y0, t, max_steps, newton_tol=1e-10):
    """Newton minimization of t*f0(y) - sum(log(-g_j(y))).

    Assumes y0 strictly feasible (all g_j(y0) < 0).  Returns the final
    point, steps used, and whether the Newton decrement converged.
    Inside the quadratic-convergence region (small decrement) full steps
    are taken with only a feasibility backtrack, because objective
    differences there sink below float resolution of the barrier value.
    """
    y = y0.copy()
    steps = 0
    prev_decrement = math.inf
    while steps < max_steps:
        f0, g0, H0 = _lse_value_grad_hess(obj_fn, y)
        gv, w = stacked.values_weights(y)
        if np.any(gv >= 0):  # line search guarantees this never happens
            raise FloatingPointError("barrier left the feasible region")
        alpha = 1.0 / (-gv)
        M = stacked.grads(w)
        grad = t * g0 + M.T @ alpha
        per_term = alpha[stacked.seg_of]
        H = (t * H0
             + stacked.A.T @ ((w * per_term)[:, None] * stacked.A)
             - M.T @ (alpha[:, None] * M)
             + M.T @ ((alpha ** 2)[:, None] * M))
        step = None
        scale = max(float(np.trace(H)), 1.0)
        for ridge in (0.0, 1e-14, 1e-10, 1e-6):
            try:
                step = np.linalg.solve(
                    H + ridge * scale * np.eye(stacked.dim), -grad)
                break
            except np.linalg.LinAlgError:
                continue
        if step is None:
            return y, steps, False
        decrement = -grad @ step
        if decrement / 2.0 <= newton_tol:
            return y, steps, True
        phi0 = t * f0 - np.log(-gv).sum()
        # Below this scale the barrier value cannot resolve progress in
        # float64, so take plain feasible Newton steps; primal error at
        # centering error eps maps to objective error eps/t, which is
        # negligible by then.
        full_step = decrement / 2.0 < max(1e-8, 1e-11 * (abs(phi0) + 1.0))
        if full_step and decrement > 0.25 * prev_decrement:
            return y, steps, True  # contraction stopped: noise floor
        prev_decrement = decrement
        steps += 1
        stride = 1.0
        for _ in range(80):
            cand = y + stride * step
            gc = stacked.values(cand)
            if np.all(gc < 0):
                if full_step:
                    break
                phi = t * obj_fn.value(cand) - np.log(-gc).sum()
                if phi <= phi0 - 0.25 * stride * decrement \
                        + 1e-13 * (abs(phi0) + 1.0):
                    break
            stride *= 0.5
        else:
            # no measurable progress left at this scale
            return y, steps, decrement / 2.0 < 1e-6
        y = cand
    return y, steps, False


def _initial_point(problem):
    y0 = np.zeros(len(problem.variables))
    for i, (_, lo, hi) in enumerate(problem.variables):
        if hi == math.inf:
            y0[i] = math.log(lo) + 1.0
        else:
            y0[i] = 0.5 * (math.log(lo) + math.log(hi))
    return y0


def _phase1(convex, problem, max_steps):
    """Find a strictly feasible point, or measure the best violation.

    Solves min s subject to g_j(y) - s <= 0 over (y, s), starting from
    the box midpoint.  Box constraints hold there by construction, so
    only the general constraints get the slack variable.
    """
    z = len(convex.var_names)
    general = convex.constraints[:len(convex.constraints) - convex.n_box]
    boxes = convex.constraints[len(convex.constraints) - convex.n_box:]
    y0 = _initial_point(problem)
    if not general:
        return y0, -math.inf, 0  # box midpoint is strictly feasible
    ext = []
    for fn in general:
        A = np.hstack([fn.A, -np.ones((fn.A.shape[0], 1))])
        ext.append(LogSumExpFn(A, fn.b))
    for fn in boxes:
        A = np.hstack([fn.A, np.zeros((fn.A.shape[0], 1))])
        ext.append(LogSumExpFn(A, fn.b))
    stacked = _Stacked(ext, z + 1)
    obj_row = np.zeros((1, z + 1))
    obj_row[0, z] = 1.0
    obj = LogSumExpFn(obj_row, np.zeros(1))

    g0 = max(fn.value(y0) for fn in general)
    x = np.append(y0, g0 + 1.0)
    steps_used = 0
    t = 1.0
    n_cons = stacked.seg_count
    while True:
        x, steps, _ = _barrier_minimize(obj, stacked, x, t,
                                        max_steps - steps_used)
        steps_used += steps
        if x[z] < -1e-6:  # comfortably strict interior: stop early
            break
        if n_cons / t < 1e-10 or steps_used >= max_steps:
            break
        t *= 20.0
    return x[:z], x[z], steps_used


def _substitute(p, fixed):
    terms = []
    for t in p.terms:
        coeff = t.coeff
        exps = {}
        for name, a in t.exponents.items():
            if name in fixed:
                coeff *= fixed[name] ** a
            else:
                exps[name] = a
        terms.append(Monomial(coeff, exps))
    return Posynomial(terms)


def _kkt_residual(convex, stacked, y, t):
    """Stationarity, complementarity, and feasibility at the final point.

    The barrier duals 1/(t * -g_j) are exactly dual feasible; the
    stationarity norm is additionally tightened by a least-squares refit
    of the duals on the near-active constraints, which removes the
    centering error without touching dual feasibility materially.
    """
    gv, w = stacked.values_weights(y)
    g0 = convex.objective.grad(y)
    M = stacked.grads(w)
    lam = 1.0 / (t * (-gv))
    stat = float(np.abs(g0 + M.T @ lam).max())
    comp = stacked.seg_count / t
    act = gv >= -1e-6
    if act.any():
        fit, *_ = np.linalg.lstsq(M[act].T, -g0, rcond=None)
        fit = np.maximum(fit, 0.0)
        lam2 = lam.copy()
        lam2[act] = fit
        stat2 = float(np.abs(g0 + M.T @ lam2).max())
        comp2 = float(np.abs(lam2 * gv).max())
        if max(stat2, comp2) < max(stat, comp):
            stat, comp = stat2, comp2
    return max(stat, comp, float(gv.max()), 0.0)


def solve(problem, max_newton=200, tol=1e-8):
    """Solve a GP by the log-barrier interior-point method.

    ``max_newton`` caps Newton steps per phase (status "max_iter" when
    exhausted); ``tol`` is both the per-constraint feasibility tolerance
    and the KKT residual bound required for status "optimal".  Infeasible
    problems are detected by the phase-1 search: if the smallest
    achievable constraint value is not strictly negative, there is no
    interior to work in and the problem is reported "infeasible".
    Variables whose bounds pin them (lo == hi) are substituted away
    before solving.
    """
    fixed = {n: lo for n, lo, hi in problem.variables if lo == hi}
    if fixed:
        free = tuple(v for v in problem.variables if v[1] != v[2])
        if not free:
            feasible = all(c.value(fixed) <= 1 + tol
                           for c in problem.constraints)
            return GpSolution(dict(fixed), problem.objective.value(fixed),
                              "optimal" if feasible else "infeasible",
                              0.0, 0)
        inner = GpProblem(free, _substitute(problem.objective, fixed),
                          tuple(_substitute(c, fixed)
                                for c in problem.constraints))
        sol = solve(inner, max_newton, tol)
        return GpSolution({**sol.values, **fixed},
                          problem.objective.value({**sol.values, **fixed}),
                          sol.status, sol.kkt_residual, sol.newton_steps)

    convex = to_convex(problem)
    names = convex.var_names

    def _solution(y, status, kkt, steps):
        values = {n: math.exp(y[i]) for i, n in enumerate(names)}
        return GpSolution(values, problem.objective.value(values),
                          status, kkt, steps)

    y, violation, p1_steps = _phase1(convex, problem, max_newton)
    if violation >= -1e-10:
        return _solution(y, "infeasible", max(violation, 0.0), p1_steps)

    stacked = _Stacked(list(convex.constraints), len(names))
    n_cons = stacked.seg_count
    t = 1.0
    steps_used = 0
    converged = True
    while True:
        y, steps, ok = _barrier_minimize(convex.objective, stacked, y, t,
                                         max_newton - steps_used)
        steps_used += steps
        converged = converged and ok
        if n_cons / t < 1e-9:
            break
        if steps_used >= max_newton:
            converged = False
            break
        t *= 20.0

    kkt = _kkt_residual(convex, stacked, y, t)
    status = "optimal" if (converged and kkt <= tol) else "max_iter"
    return _solution(y, status, kkt, steps_used + p1_steps)
