"""Log-barrier solver for the concave subproblems of the MM loop.

Each subproblem maximizes a concave closure subject to concave closures
``c_i(X) >= 0`` and quadratic trace constraints. Centering uses damped Newton
steps on the barrier function with an Armijo backtracking line search. The
Hessian of each smooth closure is formed by central differences of its
analytic gradient (the quadratic constraints use their exact Hessian), and is
floored to negative definite before the step is computed. Points where an
oracle raises :class:`~gqmp.functions.DomainError` are treated as having
objective ``-inf``, which forces the line search to backtrack.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .functions import DomainError, QuadraticConstraintSet
from .numerics import fd_real_hessian, from_real, log_sum_exp_min, real_grad, to_real

__all__ = [
    "FeasibilityError",
    "SubproblemSolution",
    "solve_subproblem",
    "kkt_residual",
    "fit_multipliers",
]


_DECREMENT_TOL = 1e-5
_ROUNDING_DECREMENT = 1e-14


class FeasibilityError(RuntimeError):
    """No strictly feasible starting point could be found."""


@dataclass
class SubproblemSolution:
    """Result of :func:`solve_subproblem`.

    Attributes
    ----------
    x_opt : numpy.ndarray
        Final iterate.
    objective_value : float
        Objective at ``x_opt``.
    multipliers : numpy.ndarray
        Nonnegative multipliers, closure constraints first and quadratic
        constraints second.
    kkt_residual : float
        See :func:`kkt_residual`.
    iterations : int
        Total Newton (or gradient) steps over all barrier stages.
    status : str
        ``optimal``, ``iteration_cap`` or ``warm_start_kept`` (the barrier
        point was worse than the start, so the start is returned).
    """

    x_opt: np.ndarray
    objective_value: float
    multipliers: np.ndarray
    kkt_residual: float
    iterations: int
    status: str = "optimal"
    stages: int = 0
    info: dict = field(default_factory=dict)


def _safe_eval(cl, X):
    try:
        v, G = cl.value_and_grad(X)
    except DomainError:
        return -np.inf, None
    if not np.isfinite(v):
        return -np.inf, None
    return float(v), G


def kkt_residual(
    objective,
    ineqs: Sequence,
    qset: QuadraticConstraintSet,
    X: np.ndarray,
    multipliers: np.ndarray,
) -> float:
    """KKT residual of ``max f(X)`` s.t. ``c_i(X) >= 0`` and ``q_k(X) <= b_k``.

    Returns the largest of the stationarity norm
    ``||grad f + sum_i lam_i grad c_i - sum_k nu_k grad q_k||_F`` (complex
    gradients), the primal violation, the most negative multiplier and the
    largest complementarity product ``|lam_i * slack_i|``.
    """
    X = np.asarray(X, dtype=complex)
    mult = np.asarray(multipliers, dtype=float)
    m1 = len(ineqs)
    if mult.size != m1 + len(qset):
        raise ValueError("one multiplier per constraint is required")
    _, grad = objective.value_and_grad(X)
    stat = np.array(grad, dtype=complex)
    slacks = []
    for lam, c in zip(mult[:m1], ineqs):
        v, g = c.value_and_grad(X)
        stat += lam * g
        slacks.append(v)
    for nu, q in zip(mult[m1:], qset):
        stat -= nu * q.grad(X)
        slacks.append(q.slack(X))
    slacks = np.array(slacks)
    res = float(np.linalg.norm(stat))
    if slacks.size:
        res = max(res, float(np.max(np.maximum(0.0, -slacks))))
        res = max(res, float(np.max(np.maximum(0.0, -mult))))
        res = max(res, float(np.max(np.abs(mult * slacks))))
    return res


def fit_multipliers(
    objective, ineqs: Sequence, qset: QuadraticConstraintSet, X: np.ndarray, active_tol: float = 1e-6
) -> np.ndarray:
    """Nonnegative least-squares multipliers for the near-active constraints at ``X``."""
    from scipy.optimize import nnls

    X = np.asarray(X, dtype=complex)
    g0 = real_grad(objective.value_and_grad(X)[1])
    cols, idx = [], []
    m1 = len(ineqs)
    for i, c in enumerate(ineqs):
        v, g = c.value_and_grad(X)
        if v <= active_tol * max(1.0, abs(v)) + active_tol:
            cols.append(real_grad(g))
            idx.append(i)
    for k, q in enumerate(qset):
        if q.slack(X) <= active_tol * max(1.0, q.budget):
            cols.append(-real_grad(q.grad(X)))
            idx.append(m1 + k)
    mult = np.zeros(m1 + len(qset))
    if cols:
        A = np.column_stack(cols)
        sol, _ = nnls(A, -g0)
        mult[idx] = sol
    return mult


class _Barrier:
    """Barrier function ``f + mu * sum log(slack)`` in real coordinates."""

    def __init__(self, objective, ineqs, qset, shape, fd_step):
        self.objective = objective
        self.ineqs = list(ineqs)
        self.qset = qset
        self.shape = shape
        self.fd_step = fd_step
        d = 2 * int(np.prod(shape))
        # Real Hessian of tr(X^H Theta X) under the to_real packing.
        self.q_hess = []
        r = shape[1]
        for q in qset:
            T = np.kron(q.theta, np.eye(r))
            H = np.block([[T.real, -T.imag], [T.imag, T.real]])
            self.q_hess.append(2.0 * q.scale * H)
        self.m = len(self.ineqs) + len(qset)
        self.d = d

    def pieces(self, x):
        """Objective and slacks with real gradients, or ``None`` outside the domain."""
        X = from_real(x, self.shape)
        fv, fg = _safe_eval(self.objective, X)
        if fg is None:
            return None
        s, gs = [], []
        for c in self.ineqs:
            v, g = _safe_eval(c, X)
            if g is None or v <= 0.0:
                return None
            s.append(v)
            gs.append(real_grad(g))
        for q in self.qset:
            v = q.slack(X)
            if v <= 0.0:
                return None
            s.append(v)
            gs.append(-real_grad(q.grad(X)))
        return fv, real_grad(fg), np.array(s), gs

    def phi(self, x, mu):
        p = self.pieces(x)
        if p is None:
            return -np.inf
        fv, _, s, _ = p
        return fv + mu * float(np.sum(np.log(s))) if self.m else fv

    def closure_hessian(self, cl, x):
        X = from_real(x, self.shape)
        if hasattr(cl, "real_hessian"):
            return cl.real_hessian(X, self.fd_step)

        def grad_or_none(Y):
            return _safe_eval(cl, Y)[1]

        return fd_real_hessian(grad_or_none, X, self.fd_step)

    def hessian(self, x, mu, s, gs):
        H = self.closure_hessian(self.objective, x)
        for i, c in enumerate(self.ineqs):
            Hc = self.closure_hessian(c, x)
            H += mu * (Hc / s[i] - np.outer(gs[i], gs[i]) / s[i] ** 2)
        off = len(self.ineqs)
        for k, Hq in enumerate(self.q_hess):
            i = off + k
            H += mu * (-Hq / s[i] - np.outer(gs[i], gs[i]) / s[i] ** 2)
        return H


def _newton_direction(H: np.ndarray, g: np.ndarray) -> np.ndarray:
    N = -0.5 * (H + H.T)
    w, V = np.linalg.eigh(N)
    floor = max(1e-12 * float(np.max(np.abs(w))), 1e-14)
    w = np.maximum(w, floor)
    return V @ ((V.T @ g) / w)


def _center(bar: _Barrier, x, mu, tol, max_steps, method, c_armijo, shrink, step0, final=True):
    """Maximize the barrier function at fixed ``mu``; returns ``(x, steps, converged)``.

    The final stage runs until the barrier gradient meets ``tol``; earlier
    stages stop once the Newton decrement is small.
    """
    steps = 0
    p = bar.pieces(x)
    for _ in range(max_steps):
        fv, fg, s, gs = p
        phi0 = fv + (mu * float(np.sum(np.log(s))) if bar.m else 0.0)
        g = fg + (mu * sum(gi / si for gi, si in zip(gs, s)) if bar.m else 0.0)
        # Stationarity of the barrier function is the KKT stationarity residual
        # (complex-gradient norm is half the real one).
        if 0.5 * np.linalg.norm(g) <= 0.5 * tol:
            return x, steps, True
        if method == "newton":
            direction = _newton_direction(bar.hessian(x, mu, s, gs), g)
        else:
            direction = g
        slope = float(g @ direction)
        if method == "newton" and 0.0 < slope:
            if not final and slope <= _DECREMENT_TOL:
                return x, steps, True
            # Beyond this point rounding in phi hides any further ascent.
            if slope <= _ROUNDING_DECREMENT * max(1.0, abs(phi0)):
                return x, steps, True
        if slope <= 0.0:
            direction, slope = g, float(g @ g)
        t = step0
        accepted = False
        while t > 1e-16:
            xn = x + t * direction
            pn = bar.pieces(xn)
            if pn is not None:
                phin = pn[0] + (mu * float(np.sum(np.log(pn[2]))) if bar.m else 0.0)
                if phin >= phi0 + c_armijo * t * slope:
                    accepted = True
                    break
            t *= shrink
        steps += 1
        if not accepted:
            return x, steps, False
        if np.array_equal(xn, x):
            return x, steps, False
        x, p = xn, pn
    return x, steps, False


def _phase_one(bar: _Barrier, x, tol, max_steps, max_stages):
    """Find a point with every closure constraint strictly positive."""
    if not bar.ineqs:
        return x
    shape = bar.shape

    class _SoftMin:
        def value_and_grad(self_inner, X):
            vals, grads = [], []
            for c in bar.ineqs:
                v, g = c.value_and_grad(X)
                vals.append(v)
                grads.append(g)
            sv, w = log_sum_exp_min(np.array(vals), -50.0)
            return sv, sum(wi * gi for wi, gi in zip(w, grads))

    aux = _Barrier(_SoftMin(), [], bar.qset, shape, bar.fd_step)
    mu = 1.0
    for _ in range(max_stages):
        x, _, _ = _center(aux, x, mu, tol, max_steps, "newton", 1e-4, 0.5, 1.0)
        if bar.pieces(x) is not None:
            return x
        mu /= 10.0
    raise FeasibilityError("could not find a strictly feasible point for the subproblem")


def solve_subproblem(
    objective,
    ineqs: Sequence,
    qset: QuadraticConstraintSet,
    x_init: np.ndarray,
    tol: float = 1e-6,
    *,
    mu0: float = 1.0,
    max_center: int = 1000,
    max_stages: int = 50,
    method: str = "newton",
    armijo: float = 1e-4,
    shrink: float = 0.5,
    step0: float = 1.0,
    fd_step: float = 1e-5,
) -> SubproblemSolution:
    """Maximize a concave closure over concave and quadratic constraints.

    Parameters
    ----------
    objective : Closure
        Concave objective with ``value_and_grad``.
    ineqs : sequence of Closure
        Concave constraint functions, each required to be ``>= 0``.
    qset : QuadraticConstraintSet
        Quadratic trace constraints.
    x_init : numpy.ndarray
        Starting point. It must satisfy the quadratic constraints; closure
        constraints may be slightly violated (a restoration phase runs first).
    tol : float
        Target KKT residual.
    mu0 : float
        Initial barrier weight; it is divided by 10 after each stage until
        ``m * mu < tol / 10``.
    max_center, max_stages : int
        Step cap per barrier stage and stage cap.
    method : {"newton", "gradient"}
        Centering direction.
    armijo, shrink, step0 : float
        Line-search constants.
    fd_step : float
        Relative step of the finite-difference Hessians.

    Returns
    -------
    SubproblemSolution

    Raises
    ------
    FeasibilityError
        If the start violates the quadratic constraints by more than rounding
        or no strictly feasible point can be restored.
    """
    if method not in ("newton", "gradient"):
        raise ValueError(f"unknown centering method {method!r}")
    X0 = np.asarray(x_init, dtype=complex)
    shape = X0.shape
    bar = _Barrier(objective, ineqs, qset, shape, fd_step)
    x = to_real(X0)

    slack = qset.slacks(X0) if len(qset) else np.zeros(0)
    if slack.size and np.any(slack <= 0.0):
        budgets = qset.budgets()
        if np.any(budgets <= 0.0):
            raise FeasibilityError("a quadratic constraint with zero budget has no interior")
        if np.any(slack < -1e-8 * np.maximum(1.0, budgets)):
            raise FeasibilityError("starting point violates the quadratic constraints")
        x = x * (1.0 - 1e-9)
    if bar.pieces(x) is None:
        x = _phase_one(bar, x, tol, max_center, max_stages)

    f_init = _safe_eval(objective, X0)[0]
    mu = mu0 if bar.m else 0.0
    total = 0
    stages = 0
    status = "optimal"
    converged = False
    for stages in range(1, max_stages + 1):
        final = bar.m == 0 or bar.m * mu < tol / 10.0 or stages == max_stages
        x, steps, converged = _center(
            bar, x, mu, tol, max_center, method, armijo, shrink, step0, final=final
        )
        total += steps
        if final:
            break
        mu /= 10.0
    else:
        status = "iteration_cap"
    if not converged and status == "optimal":
        status = "iteration_cap"

    X = from_real(x, shape)
    fv, _, s, _ = bar.pieces(x)
    mult = mu / s if bar.m else np.zeros(0)
    res = kkt_residual(objective, ineqs, qset, X, mult)
    if res > tol:
        alt = fit_multipliers(objective, ineqs, qset, X, active_tol=max(tol, 1e-8))
        alt_res = kkt_residual(objective, ineqs, qset, X, alt)
        if alt_res < res:
            mult, res = alt, alt_res
    if status == "iteration_cap" and res <= tol:
        status = "optimal"
    info = {"mu": mu}
    if np.isfinite(f_init) and fv < f_init - 1e-10 and bar.pieces(to_real(X0)) is not None:
        mult0 = fit_multipliers(objective, ineqs, qset, X0, active_tol=max(tol, 1e-8))
        res0 = kkt_residual(objective, ineqs, qset, X0, mult0)
        info["barrier_value"] = fv
        return SubproblemSolution(
            X0.copy(), float(f_init), mult0, res0, total, "warm_start_kept", stages, info
        )
    return SubproblemSolution(X, float(fv), mult, float(res), total, status, stages, info)
