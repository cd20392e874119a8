"""Outer majorize-minimize loops for generalized quadratic matrix programs.

All drivers share one engine. The objective is a weighted sum of smoothed
row minima ``sum_i lam_i * smin_beta(f_i1, ..., f_iJ)`` where a row of
length one is used as is, ``smin_beta`` is the log-sum-exp soft minimum and
``lam`` is either fixed or refreshed from the current iterate (the clipped
sum-of-minima objective). At every outer step each generalized QMF is
replaced by its concave tangent surrogate, the concave subproblem is solved
from the current iterate, and the tracked value ``s_n`` is checked for
ascent.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .bounds import Closure, surrogate_gqmf
from .functions import (
    GeneralizedQMF,
    ProblemInstance,
    QuadraticConstraintSet,
    eval_gqmf,
    value_and_grad_gqmf,
)
from .numerics import log_sum_exp_min, real_grad
from .subsolver import FeasibilityError, fit_multipliers, kkt_residual, solve_subproblem

__all__ = [
    "InfeasibleStartError",
    "IterateRecord",
    "SolveTrace",
    "EnumerationResult",
    "BetaSchedule",
    "lambda_star",
    "smoothed_min",
    "solve_gqmp",
    "solve_minrate",
    "solve_sum_secrecy",
    "enumerate_oracle",
    "best_of",
    "multistart",
    "TRACE_COLUMNS",
]

TRACE_COLUMNS = ("n", "s_n", "kkt_residual", "wall_time_ms")
ASCENT_SLACK = 1e-12
SLATER_SLACK = 1e-10


class InfeasibleStartError(ValueError):
    """The starting point violates a constraint."""


@dataclass
class IterateRecord:
    n: int
    X: np.ndarray
    s: float
    kkt_residual: float
    wall_time_ms: float
    beta: Optional[float] = None
    sub_status: str = ""


@dataclass
class SolveTrace:
    """Record of one outer MM run.

    Attributes
    ----------
    iterates : list of IterateRecord
        Entry ``0`` is the starting point (``kkt_residual`` is NaN there).
    converged : bool
        True when the stopping rule on ``|s_n - s_{n-1}|`` fired.
    stop_reason : str
        ``tolerance`` or ``iteration_cap``; ``failure`` if the subsolver
        raised.
    stationarity : float
        KKT residual of the original (unsurrogated) problem at the final
        iterate, using the last subproblem multipliers or a nonnegative
        least-squares refit, whichever is smaller.
    notes : list of str
        Events such as rejected steps or multiplier refresh.
    """

    iterates: list = field(default_factory=list)
    converged: bool = False
    stop_reason: str = "iteration_cap"
    stationarity: float = float("nan")
    multipliers: Optional[np.ndarray] = None
    beta: Optional[float] = None
    lambdas: Optional[np.ndarray] = None
    seed: Optional[int] = None
    notes: list = field(default_factory=list)

    @property
    def x(self) -> np.ndarray:
        return self.iterates[-1].X

    @property
    def value(self) -> float:
        return self.iterates[-1].s

    @property
    def values(self) -> np.ndarray:
        return np.array([it.s for it in self.iterates])

    @property
    def iterations(self) -> int:
        return len(self.iterates) - 1

    @property
    def kkt_residual(self) -> float:
        """Subproblem KKT residual of the last accepted step."""
        for it in reversed(self.iterates):
            if np.isfinite(it.kkt_residual):
                return it.kkt_residual
        return float("nan")

    def is_monotone(self, tol: float = 1e-8) -> bool:
        v = self.values
        return bool(np.all(np.diff(v) >= -tol))

    def rows(self, timing: bool = True) -> list:
        """Trace rows ``(n, s_n, kkt_residual, wall_time_ms)``."""
        return [
            (it.n, it.s, it.kkt_residual, it.wall_time_ms if timing else 0.0)
            for it in self.iterates
        ]


@dataclass
class BetaSchedule:
    """Smoothing weight schedule: start, doubling rule and cap on ``|beta|``."""

    start: float = -5.0
    cap: float = 200.0
    factor: float = 2.0
    trigger: float = 10.0  # grow |beta| when the change drops below trigger * eps

    def __post_init__(self) -> None:
        if self.start >= 0:
            raise ValueError("beta must be negative")
        if self.cap < abs(self.start):
            self.cap = abs(self.start)

    @classmethod
    def fixed(cls, beta: float) -> "BetaSchedule":
        return cls(start=beta, cap=abs(beta))

    def at_cap(self, beta: float) -> bool:
        return abs(beta) >= self.cap

    def grow(self, beta: float) -> float:
        return -min(self.cap, abs(beta) * self.factor)


def smoothed_min(values: Sequence[float], beta: float) -> float:
    """``(1/beta) ln sum_j exp(beta v_j)``; exact for a single value."""
    return log_sum_exp_min(np.asarray(values, dtype=float), beta)[0]


def lambda_star(row_minima: Sequence[float]) -> np.ndarray:
    """Activity indicators: ``1`` where the row minimum is ``>= 0``, else ``0``."""
    return (np.asarray(row_minima, dtype=float) >= 0.0).astype(float)


class _SmoothedRows(Closure):
    """``sum_i lam_i smin_beta(row_i)`` over closures (or GQMFs)."""

    def __init__(self, rows, lam, beta):
        self.rows = rows
        self.lam = lam
        self.beta = beta

    def value_and_grad(self, X):
        total = 0.0
        grad = np.zeros_like(X, dtype=complex)
        for lam, row in zip(self.lam, self.rows):
            if lam == 0.0:
                continue
            vals, grads = [], []
            for f in row:
                if isinstance(f, GeneralizedQMF):
                    v, g = value_and_grad_gqmf(f, X)
                else:
                    v, g = f.value_and_grad(X)
                vals.append(v)
                grads.append(g)
            sv, w = log_sum_exp_min(np.array(vals), self.beta)
            total += lam * sv
            for wj, gj in zip(w, grads):
                grad += lam * wj * gj
        return float(total), grad

    def real_hessian(self, X, h=1e-5):
        d = 2 * X.size
        H = np.zeros((d, d))
        for lam, row in zip(self.lam, self.rows):
            if lam == 0.0:
                continue
            vals, grads, hess = [], [], []
            for f in row:
                v, g = f.value_and_grad(X)
                vals.append(v)
                grads.append(real_grad(g))
                hess.append(f.real_hessian(X, h))
            _, w = log_sum_exp_min(np.array(vals), self.beta)
            Hrow = sum(wj * Hj for wj, Hj in zip(w, hess))
            if len(row) > 1:
                gbar = sum(wj * gj for wj, gj in zip(w, grads))
                Hrow = Hrow + self.beta * (
                    sum(wj * np.outer(gj, gj) for wj, gj in zip(w, grads)) - np.outer(gbar, gbar)
                )
            H += lam * Hrow
        return H


class _GQMFClosure(Closure):
    def __init__(self, f: GeneralizedQMF):
        self.f = f

    def value_and_grad(self, X):
        return value_and_grad_gqmf(self.f, X)


def _row_minima(rows, X) -> np.ndarray:
    return np.array([min(eval_gqmf(f, X) for f in row) for row in rows])


def _check_start(qset: QuadraticConstraintSet, ineqs, X0, tol=1e-10) -> None:
    if not qset.contains(X0, tol=1e-10):
        raise InfeasibleStartError(
            f"starting point violates the quadratic constraints (slacks {qset.slacks(X0)})"
        )
    for j, f in enumerate(ineqs):
        v = eval_gqmf(f, X0)
        if v < -tol:
            raise InfeasibleStartError(f"starting point violates constraint {j} ({f.label}: {v:.3e})")


def _run(
    rows,
    ineqs,
    qset,
    x0,
    eps,
    max_outer,
    schedule: Optional[BetaSchedule],
    lam_fixed: Optional[np.ndarray],
    sub_tol: Optional[float],
    sub_options: Optional[dict],
) -> SolveTrace:
    """Shared MM engine; ``lam_fixed=None`` selects the clipped objective."""
    X = np.asarray(x0, dtype=complex).copy()
    _check_start(qset, ineqs, X)
    sub_tol = eps / 10.0 if sub_tol is None else sub_tol
    opts = dict(sub_options or {})
    clipped = lam_fixed is None
    smoothing = any(len(r) > 1 for r in rows)
    beta = schedule.start if (schedule is not None and smoothing) else -1.0
    trace = SolveTrace()

    def tracked(Y, lam, b):
        if clipped:
            return float(np.sum(np.maximum(_row_minima(rows, Y), 0.0)))
        return _SmoothedRows(rows, lam, b).value(Y)

    lam = lambda_star(_row_minima(rows, X)) if clipped else np.asarray(lam_fixed, float)
    s = tracked(X, lam, beta)
    t_start = time.perf_counter()
    trace.iterates.append(IterateRecord(0, X.copy(), s, float("nan"), 0.0, beta if smoothing else None))
    last_mult = None
    n = 0
    while n < max_outer:
        if clipped and not np.any(lam):
            trace.converged = True
            trace.stop_reason = "tolerance"
            trace.notes.append("no active rows; objective is identically clipped to zero")
            break
        sur_rows = [[surrogate_gqmf(f, X) for f in row] for row in rows]
        sur_ineqs = [surrogate_gqmf(f, X) for f in ineqs]
        obj = _SmoothedRows(sur_rows, lam, beta)
        try:
            sol = solve_subproblem(obj, sur_ineqs, qset, X, tol=sub_tol, **opts)
        except FeasibilityError as exc:
            trace.stop_reason = "failure"
            trace.notes.append(f"subsolver failure: {exc}")
            break
        Xn = sol.x_opt
        s_new = tracked(Xn, lam, beta)
        if s_new < s - ASCENT_SLACK * (1.0 + abs(s)):
            if smoothing and schedule is not None and not schedule.at_cap(beta):
                beta = schedule.grow(beta)
                s = tracked(X, lam, beta)
                trace.notes.append(f"step rejected at n={n + 1}; |beta| raised to {abs(beta):g}")
                continue
            trace.notes.append(f"step rejected at n={n + 1}; no ascent ({s_new - s:.3e})")
            trace.converged = True
            trace.stop_reason = "tolerance"
            break
        n += 1
        delta = s_new - s
        X, s = Xn, s_new
        last_mult = sol.multipliers
        wall = 1000.0 * (time.perf_counter() - t_start)
        trace.iterates.append(
            IterateRecord(n, X.copy(), s, sol.kkt_residual, wall, beta if smoothing else None, sol.status)
        )
        tight = [j for j, f in enumerate(ineqs) if eval_gqmf(f, X) < SLATER_SLACK]
        if tight:
            trace.notes.append(f"constraint slack below {SLATER_SLACK:g} at n={n}: {tight}")
        if clipped:
            lam_new = lambda_star(_row_minima(rows, X))
            if not np.array_equal(lam_new, lam):
                lam = lam_new
                trace.notes.append(f"activity indicators refreshed at n={n}: {lam.astype(int).tolist()}")
                continue
        at_cap = not smoothing or schedule is None or schedule.at_cap(beta)
        if abs(delta) <= eps and at_cap:
            trace.converged = True
            trace.stop_reason = "tolerance"
            break
        if not at_cap and abs(delta) < schedule.trigger * eps:
            beta = schedule.grow(beta)
            s = tracked(X, lam, beta)
    else:
        trace.stop_reason = "iteration_cap"

    trace.beta = beta if smoothing else None
    trace.lambdas = lam
    # Stationarity of the original problem at the final iterate.
    Xf = trace.x
    orig = _SmoothedRows(rows, lam, beta)
    cons = [_GQMFClosure(f) for f in ineqs]
    mult = last_mult if last_mult is not None else np.zeros(len(cons) + len(qset))
    res = kkt_residual(orig, cons, qset, Xf, mult)
    alt = fit_multipliers(orig, cons, qset, Xf, active_tol=1e-6)
    res_alt = kkt_residual(orig, cons, qset, Xf, alt)
    if res_alt < res:
        mult, res = alt, res_alt
    trace.stationarity = float(res)
    trace.multipliers = mult
    return trace


def solve_gqmp(
    p: ProblemInstance,
    x0: np.ndarray,
    eps: float = 1e-4,
    max_outer: int = 100,
    *,
    sub_tol: Optional[float] = None,
    sub_options: Optional[dict] = None,
) -> SolveTrace:
    """Maximize a generalized QMF by successive concave approximation.

    Parameters
    ----------
    p : ProblemInstance
        Objective, ``f_j >= 0`` constraints and quadratic feasible set.
    x0 : numpy.ndarray
        Feasible starting point.
    eps : float
        Stop when ``|s_n - s_{n-1}| <= eps``.
    max_outer : int
        Cap on outer iterations.
    sub_tol : float, optional
        KKT tolerance of each subproblem, ``eps / 10`` by default.
    sub_options : dict, optional
        Extra keyword arguments for :func:`~gqmp.subsolver.solve_subproblem`.

    Returns
    -------
    SolveTrace

    Raises
    ------
    InfeasibleStartError
        If ``x0`` violates a constraint.
    """
    return _run(
        [[p.objective]], list(p.inequality_constraints), p.feasible_set, x0, eps, max_outer,
        None, np.ones(1), sub_tol, sub_options,
    )


def solve_minrate(
    fs: Sequence[GeneralizedQMF],
    extra_ineqs: Sequence[GeneralizedQMF],
    qset: QuadraticConstraintSet,
    x0: np.ndarray,
    beta: float = -5.0,
    eps: float = 1e-4,
    max_outer: int = 100,
    *,
    beta_cap: Optional[float] = None,
    sub_tol: Optional[float] = None,
    sub_options: Optional[dict] = None,
) -> SolveTrace:
    """Maximize the log-sum-exp smoothed minimum of several generalized QMFs.

    ``beta`` is the starting smoothing weight. When ``beta_cap`` exceeds
    ``|beta|`` the weight doubles each time the objective change falls below
    ``10 * eps``; pass ``beta_cap=abs(beta)`` (or leave it ``None``) to keep
    ``beta`` fixed. The trace records the smoothed value at the current
    weight, which is nondecreasing because the soft minimum grows with
    ``|beta|``.

    Raises
    ------
    ValueError
        If ``beta >= 0``.
    """
    if not beta < 0:
        raise ValueError("beta must be negative")
    sched = BetaSchedule(start=beta, cap=abs(beta) if beta_cap is None else beta_cap)
    return _run(
        [list(fs)], list(extra_ineqs), qset, x0, eps, max_outer, sched, np.ones(1), sub_tol, sub_options
    )


def solve_sum_secrecy(
    f_matrix: Sequence[Sequence[GeneralizedQMF]],
    qset: QuadraticConstraintSet,
    x0: np.ndarray,
    eps: float = 1e-4,
    beta_schedule: Optional[BetaSchedule] = None,
    max_outer: int = 100,
    *,
    sub_tol: Optional[float] = None,
    sub_options: Optional[dict] = None,
) -> SolveTrace:
    """Maximize ``F(X) = sum_i max(0, min_j f_ij(X))``.

    The activity indicators are frozen at each anchor (``1`` when the row
    minimum is nonnegative), the active rows are smoothed with log-sum-exp
    and the surrogate problem is solved. The loop only stops once the
    indicators recomputed at the new iterate agree with the frozen ones. A
    step that lowers ``F`` is rejected; ``|beta|`` is then raised, or the run
    stops if it is already at the cap.
    """
    sched = beta_schedule if beta_schedule is not None else BetaSchedule()
    rows = [list(r) for r in f_matrix]
    return _run(rows, [], qset, x0, eps, max_outer, sched, None, sub_tol, sub_options)


@dataclass
class EnumerationResult:
    """Outcome of the subset enumeration."""

    best_value: float
    best_subset: tuple
    subset_values: dict
    subproblems: int
    best_x: np.ndarray
    traces: dict
    solves: int = 0


def enumerate_oracle(
    f_matrix: Sequence[Sequence[GeneralizedQMF]],
    qset: QuadraticConstraintSet,
    x0,
    eps: float = 1e-4,
    beta_schedule: Optional[BetaSchedule] = None,
    max_outer: int = 100,
    *,
    max_users: int = 4,
    sub_tol: Optional[float] = None,
    sub_options: Optional[dict] = None,
) -> EnumerationResult:
    """Solve the sum-of-minima problem over every non-empty user subset.

    For each subset ``S`` the smoothed problem
    ``max sum_{i in S} smin_beta(f_i1, ..., f_iJ)`` is solved from ``x0``
    (a single start or a list of starts, best kept) and scored by the
    unsmoothed ``R_S = sum_{i in S} min_j f_ij``. The best score is returned.

    Raises
    ------
    ValueError
        If there are more than ``max_users`` rows (``2^I - 1`` solves).
    """
    rows = [list(r) for r in f_matrix]
    I = len(rows)
    if I > max_users:
        raise ValueError(f"enumeration over {I} users needs {2 ** I - 1} solves; limit is {max_users} users")
    sched = beta_schedule if beta_schedule is not None else BetaSchedule()
    starts = [x0] if isinstance(x0, np.ndarray) else list(x0)
    values, traces = {}, {}
    best = (-np.inf, (), None)
    solves = 0
    for mask in range(1, 2 ** I):
        subset = tuple(i for i in range(I) if mask >> i & 1)
        lam = np.array([1.0 if i in subset else 0.0 for i in range(I)])
        sub_rows = rows
        best_sub = None
        for X0 in starts:
            solves += 1
            tr = _run(sub_rows, [], qset, X0, eps, max_outer, sched, lam, sub_tol, sub_options)
            r = float(np.sum(_row_minima([rows[i] for i in subset], tr.x)))
            if best_sub is None or r > best_sub[0]:
                best_sub = (r, tr)
        values[subset] = best_sub[0]
        traces[subset] = best_sub[1]
        if best_sub[0] > best[0]:
            best = (best_sub[0], subset, best_sub[1].x)
    return EnumerationResult(best[0], best[1], values, len(values), best[2], traces, solves)


def best_of(traces: Sequence[SolveTrace]) -> SolveTrace:
    """Best trace by final value, ties broken by the smaller seed."""
    def key(t):
        seed = t.seed if t.seed is not None else 0
        return (-t.value, seed)

    return sorted(traces, key=key)[0]


def multistart(solve, starts: Sequence[tuple]) -> tuple:
    """Run ``solve(X0)`` for each ``(seed, X0)`` pair and keep the best trace.

    Returns
    -------
    (SolveTrace, list of SolveTrace)
        The best trace by :func:`best_of` and all traces in input order,
        each tagged with its seed.
    """
    traces = []
    for seed, X0 in starts:
        tr = solve(X0)
        tr.seed = seed
        traces.append(tr)
    if not traces:
        raise ValueError("multistart needs at least one start")
    return best_of(traces), traces
