"""Composite and generalized quadratic matrix functions.

A composite function is ``h(X) = g(X^H A X)`` where ``g`` is convex and
monotone on the Hermitian matrices. A generalized function is a weighted sum
of composites, and a :class:`ProblemInstance` collects an objective, a list of
``f_j(X) >= 0`` constraints and a convex set of quadratic trace constraints.

Gradient convention
-------------------
For real-valued ``F(X)`` the complex gradient is
``dF/dX* = (dF/dRe X + 1j * dF/dIm X) / 2`` so that
``dF = 2 Re tr(G^H dX)``. For ``F(X) = g(X^H A X)`` this gives ``A X G`` with
``G`` the Hermitian gradient of ``g`` (``dg = tr(G dW)``).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .hermitian import ShapeError, as_hermitian, herm, psd_split, quad_map

__all__ = [
    "DomainError",
    "Monotonicity",
    "ScalarMatrixFunction",
    "CompositeQMF",
    "GeneralizedQMF",
    "QuadraticConstraint",
    "QuadraticConstraintSet",
    "ProblemInstance",
    "ValidationReport",
    "eval_gqmf",
    "grad_gqmf",
    "value_and_grad_gqmf",
    "validate_function",
    "trace_affine",
    "log2det_function",
    "masked",
    "sum_functions",
]

LN2 = np.log(2.0)


class DomainError(ArithmeticError):
    """An oracle was evaluated outside the domain of its function."""


class Monotonicity(str, enum.Enum):
    """Matrix monotonicity tag of a scalar matrix function."""

    MND = "MND"
    MNI = "MNI"


@dataclass(frozen=True)
class ScalarMatrixFunction:
    """Convex function of a Hermitian matrix with a monotonicity tag.

    Parameters
    ----------
    value : callable
        ``W -> float``. Must raise :class:`DomainError` outside the domain.
    gradient : callable
        ``W -> G`` with ``G`` Hermitian and ``dg = tr(G dW)``.
    monotonicity : Monotonicity
        ``MND`` (gradient PSD) or ``MNI`` (gradient NSD).
    label : str
        Human readable name.
    dim : int, optional
        Size ``r`` of the argument when fixed.
    value_and_gradient : callable, optional
        Fused oracle returning ``(value, G)``; used when present.
    hessian : callable, optional
        ``W -> Hg``, the real ``2r^2 x 2r^2`` matrix of the second derivative
        in the coordinates ``[Re vec(D), Im vec(D)]`` (row-major), so that
        ``d^2 g[D, D] = x^T Hg x`` for Hermitian ``D``. Solvers fall back to
        finite differences when it is absent.
    """

    value: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    monotonicity: Monotonicity
    label: str = "g"
    dim: Optional[int] = None
    value_and_gradient: Optional[Callable[[np.ndarray], tuple]] = field(
        default=None, compare=False, repr=False
    )
    hessian: Optional[Callable[[np.ndarray], np.ndarray]] = field(
        default=None, compare=False, repr=False
    )

    def __post_init__(self) -> None:
        object.__setattr__(self, "monotonicity", Monotonicity(self.monotonicity))

    def evaluate(self, W: np.ndarray) -> tuple[float, np.ndarray]:
        """Return ``(g(W), grad g(W))``."""
        if self.value_and_gradient is not None:
            v, G = self.value_and_gradient(W)
            return float(v), G
        return float(self.value(W)), self.gradient(W)


@dataclass(frozen=True, eq=False)
class CompositeQMF:
    """``h(X) = g(X^H A X)`` with the definite-part split of ``A`` cached."""

    g: ScalarMatrixFunction
    A: np.ndarray

    def __post_init__(self) -> None:
        A = as_hermitian(self.A)
        object.__setattr__(self, "A", A)
        split = psd_split(A)
        object.__setattr__(self, "A_pos", split.positive_part)
        object.__setattr__(self, "A_neg", split.negative_part)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    def inner(self, X: np.ndarray) -> np.ndarray:
        return quad_map(X, self.A)

    def value(self, X: np.ndarray) -> float:
        return float(self.g.value(self.inner(X)))

    def grad(self, X: np.ndarray) -> np.ndarray:
        return self.A @ X @ self.g.gradient(self.inner(X))

    def value_and_grad(self, X: np.ndarray) -> tuple[float, np.ndarray]:
        v, G = self.g.evaluate(self.inner(X))
        return v, self.A @ X @ G


@dataclass(frozen=True, eq=False)
class GeneralizedQMF:
    """Weighted sum ``sum_k alpha_k g_k(X^H A_k X)``.

    Parameters
    ----------
    terms : sequence of (float, CompositeQMF)
        Weights and composites; must be non-empty with a common ``n``.
    label : str
        Optional name used in reports.
    """

    terms: tuple
    label: str = "f"

    def __post_init__(self) -> None:
        terms = tuple((float(a), c) for a, c in self.terms)
        if not terms:
            raise ValueError("a generalized QMF needs at least one term")
        ns = {c.n for _, c in terms}
        if len(ns) != 1:
            raise ShapeError(f"terms disagree on the row dimension of X: {sorted(ns)}")
        rs = {c.g.dim for _, c in terms if c.g.dim is not None}
        if len(rs) > 1:
            raise ShapeError(f"terms disagree on the column dimension of X: {sorted(rs)}")
        object.__setattr__(self, "terms", terms)

    @property
    def n(self) -> int:
        return self.terms[0][1].n

    @property
    def r(self) -> Optional[int]:
        for _, c in self.terms:
            if c.g.dim is not None:
                return c.g.dim
        return None

    def __add__(self, other: "GeneralizedQMF") -> "GeneralizedQMF":
        return GeneralizedQMF(self.terms + other.terms, label=f"{self.label}+{other.label}")

    def scaled(self, s: float) -> "GeneralizedQMF":
        return GeneralizedQMF(tuple((s * a, c) for a, c in self.terms), label=self.label)

    def __call__(self, X: np.ndarray) -> float:
        return eval_gqmf(self, X)


def _check_x(f: GeneralizedQMF, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=complex)
    if X.ndim != 2 or X.shape[0] != f.n or (f.r is not None and X.shape[1] != f.r):
        raise ShapeError(f"X has shape {X.shape}, expected ({f.n}, {f.r})")
    return X


def eval_gqmf(f: GeneralizedQMF, X: np.ndarray) -> float:
    """Evaluate ``sum_k alpha_k g_k(X^H A_k X)``."""
    X = _check_x(f, X)
    return float(sum(a * c.value(X) for a, c in f.terms))


def grad_gqmf(f: GeneralizedQMF, X: np.ndarray) -> np.ndarray:
    """Complex gradient ``sum_k alpha_k A_k X G_k``."""
    return value_and_grad_gqmf(f, X)[1]


def value_and_grad_gqmf(f: GeneralizedQMF, X: np.ndarray) -> tuple[float, np.ndarray]:
    """Value and complex gradient in one pass."""
    X = _check_x(f, X)
    total = 0.0
    grad = np.zeros_like(X)
    for a, c in f.terms:
        v, G = c.value_and_grad(X)
        total += a * v
        grad += a * G
    return float(total), grad


# ---------------------------------------------------------------------------
# Feasible sets and problem instances
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class QuadraticConstraint:
    """``scale * tr(X^H theta X) <= budget`` with ``theta`` PSD."""

    theta: np.ndarray
    budget: float
    scale: float = 1.0

    def __post_init__(self) -> None:
        theta = as_hermitian(self.theta)
        w = np.linalg.eigvalsh(theta)
        if w[0] < -1e-10 * max(1.0, abs(w[-1])):
            raise ValueError("constraint matrix must be positive semidefinite")
        if self.budget < 0:
            raise ValueError("constraint budget must be nonnegative")
        if self.scale <= 0:
            raise ValueError("constraint scale must be positive")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "budget", float(self.budget))
        object.__setattr__(self, "scale", float(self.scale))

    def load(self, X: np.ndarray) -> float:
        """Left-hand side ``scale * tr(X^H theta X)``."""
        return self.scale * float(np.real(np.vdot(X, self.theta @ X)))

    def slack(self, X: np.ndarray) -> float:
        return self.budget - self.load(X)

    def grad(self, X: np.ndarray) -> np.ndarray:
        """Complex gradient of the left-hand side."""
        return self.scale * (self.theta @ X)


@dataclass(frozen=True, eq=False)
class QuadraticConstraintSet:
    """Intersection of quadratic trace constraints."""

    constraints: tuple

    def __post_init__(self) -> None:
        cons = tuple(
            c if isinstance(c, QuadraticConstraint) else QuadraticConstraint(*c)
            for c in self.constraints
        )
        ns = {c.theta.shape[0] for c in cons}
        if len(ns) > 1:
            raise ShapeError("constraint matrices disagree on dimension")
        object.__setattr__(self, "constraints", cons)

    def __len__(self) -> int:
        return len(self.constraints)

    def __iter__(self):
        return iter(self.constraints)

    def slacks(self, X: np.ndarray) -> np.ndarray:
        return np.array([c.slack(X) for c in self.constraints])

    def contains(self, X: np.ndarray, tol: float = 1e-10) -> bool:
        return bool(np.all(self.slacks(X) >= -tol * np.maximum(1.0, self.budgets())))

    def budgets(self) -> np.ndarray:
        return np.array([c.budget for c in self.constraints])

    def max_feasible_scale(self, X: np.ndarray) -> float:
        """Largest ``t`` with ``t X`` feasible (``inf`` if unbounded)."""
        t = np.inf
        for c in self.constraints:
            load = c.load(X)
            if load > 0:
                t = min(t, np.sqrt(c.budget / load))
        return float(t)


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    """Maximize ``objective(X)`` s.t. ``f_j(X) >= 0`` and ``X`` in the set."""

    objective: GeneralizedQMF
    inequality_constraints: tuple
    feasible_set: QuadraticConstraintSet
    x_dims: tuple

    def __post_init__(self) -> None:
        object.__setattr__(self, "inequality_constraints", tuple(self.inequality_constraints))
        n, r = self.x_dims
        for f in (self.objective,) + self.inequality_constraints:
            if f.n != n or (f.r is not None and f.r != r):
                raise ShapeError(f"function {f.label} does not act on {n}x{r} matrices")
        for c in self.feasible_set:
            if c.theta.shape[0] != n:
                raise ShapeError("feasible set dimension disagrees with x_dims")


# ---------------------------------------------------------------------------
# Sampled verification of convexity and monotonicity
# ---------------------------------------------------------------------------


@dataclass
class ValidationReport:
    convexity_violations: int
    monotonicity_violations: int
    trials: int


def _random_psd(rng: np.random.Generator, r: int, scale: float) -> np.ndarray:
    B = (rng.standard_normal((r, r)) + 1j * rng.standard_normal((r, r))) / np.sqrt(2 * r)
    k = int(rng.integers(1, r + 1))
    B[:, k:] = 0.0
    return herm(scale * B @ B.conj().T)


def validate_function(
    g: ScalarMatrixFunction,
    trials: int = 200,
    seed: int = 0,
    dim: Optional[int] = None,
    scale: float = 1.0,
    tol: float = 1e-8,
) -> ValidationReport:
    """Count sampled convexity and monotonicity violations of ``g``.

    Each trial draws PSD matrices ``W2`` and ``W1 = W2 + D`` (``D`` PSD) and
    checks the ordering ``g(W1) >= g(W2)`` (MND) or ``<=`` (MNI), plus the sign
    of the gradient at ``W2``. A second pair and a random ``theta`` check the
    convexity inequality.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    r = dim if dim is not None else g.dim
    if r is None:
        raise ValueError("dimension of the function argument is unknown")
    rng = np.random.default_rng(seed)
    sign = 1.0 if g.monotonicity is Monotonicity.MND else -1.0
    conv = mono = 0
    for _ in range(trials):
        W2 = _random_psd(rng, r, scale)
        W1 = W2 + _random_psd(rng, r, scale)
        v1, v2 = g.value(W1), g.value(W2)
        bad = sign * (v1 - v2) < -tol * max(1.0, abs(v1), abs(v2))
        G = g.gradient(W2)
        w = np.linalg.eigvalsh(herm(G))
        bad = bad or (w[0] if sign > 0 else -w[-1]) < -tol
        mono += int(bad)

        Wa = _random_psd(rng, r, scale)
        Wb = _random_psd(rng, r, scale)
        th = float(rng.uniform(0.05, 0.95))
        lhs = g.value(th * Wa + (1 - th) * Wb)
        rhs = th * g.value(Wa) + (1 - th) * g.value(Wb)
        conv += int(lhs > rhs + tol * max(1.0, abs(rhs)))
    return ValidationReport(conv, mono, trials)


# ---------------------------------------------------------------------------
# Built-in scalar matrix functions
# ---------------------------------------------------------------------------


def trace_affine(dim: int, C: Optional[np.ndarray] = None, offset: float = 0.0) -> ScalarMatrixFunction:
    """``g(W) = tr(C W) + offset`` with ``C`` semidefinite (identity by default).

    The tag is MND when ``C`` is PSD and MNI when ``C`` is NSD.
    """
    C = np.eye(dim, dtype=complex) if C is None else as_hermitian(C)
    w = np.linalg.eigvalsh(C)
    if w[0] >= -1e-12:
        tag = Monotonicity.MND
    elif w[-1] <= 1e-12:
        tag = Monotonicity.MNI
    else:
        raise ValueError("trace weight must be semidefinite for a monotone function")
    CT = C.T.copy()

    def value(W):
        return float(np.real(np.sum(CT * W))) + offset

    def gradient(W):
        return C

    def hessian(W):
        return np.zeros((2 * dim * dim, 2 * dim * dim))

    return ScalarMatrixFunction(value, gradient, tag, label="trace", dim=dim, hessian=hessian)


def log2det_function(
    dim: int, negate: bool = True, tag: Optional[Monotonicity] = None
) -> ScalarMatrixFunction:
    """``-log2 det(I + W)`` (default) or ``+log2 det(I + W)``.

    Only the negated form is convex (and MNI). The positive form is provided
    so that sampled validation can be exercised on a mis-declared function;
    its tag defaults to MND.
    """
    s = -1.0 if negate else 1.0
    if tag is None:
        tag = Monotonicity.MNI if negate else Monotonicity.MND
    eye = np.eye(dim)

    def both(W):
        M = eye + herm(W)
        try:
            L = np.linalg.cholesky(M)
        except np.linalg.LinAlgError as exc:
            raise DomainError("I + W is not positive definite") from exc
        v = 2.0 * float(np.sum(np.log(np.real(np.diag(L))))) / LN2
        Linv = np.linalg.solve(L, eye)
        inv = Linv.conj().T @ Linv
        return s * v, s * herm(inv) / LN2

    def hessian(W):
        M = np.linalg.inv(eye + herm(W))
        # d^2 g[D1, D2] = -s * Re tr(M D1 M D2) / ln 2 on the real basis of D.
        T = np.einsum("da,bc->abcd", M, M).reshape(dim * dim, dim * dim)
        H = np.block([[T.real, -T.imag], [-T.imag, -T.real]])
        return -s * 0.5 * (H + H.T) / LN2

    return ScalarMatrixFunction(
        value=lambda W: both(W)[0],
        gradient=lambda W: both(W)[1],
        monotonicity=tag,
        label=("-" if negate else "+") + "log2det(I+W)",
        dim=dim,
        value_and_gradient=both,
        hessian=hessian,
    )


def masked(g: ScalarMatrixFunction, mask: Sequence[float]) -> ScalarMatrixFunction:
    """``W -> g(D W D)`` with ``D = diag(mask)``; convexity and tag carry over."""
    d = np.asarray(mask, dtype=float)

    D = np.outer(d, d)
    scale = np.concatenate([D.ravel(), D.ravel()])

    def both(W):
        v, G = g.evaluate(D * W)
        return v, D * G

    hessian = None
    if g.hessian is not None:

        def hessian(W):
            return scale[:, None] * g.hessian(D * W) * scale[None, :]

    return ScalarMatrixFunction(
        value=lambda W: both(W)[0],
        gradient=lambda W: both(W)[1],
        monotonicity=g.monotonicity,
        label=f"{g.label}[masked]",
        dim=g.dim,
        value_and_gradient=both,
        hessian=hessian,
    )


def sum_functions(fs: Sequence[ScalarMatrixFunction], weights: Sequence[float], label: str = "sum") -> ScalarMatrixFunction:
    """Nonnegative combination of functions sharing one tag."""
    tags = {f.monotonicity for f in fs}
    if len(tags) != 1 or any(w < 0 for w in weights):
        raise ValueError("sum_functions needs a common tag and nonnegative weights")

    def both(W):
        v = 0.0
        G = 0.0
        for f, w in zip(fs, weights):
            fv, fG = f.evaluate(W)
            v += w * fv
            G = G + w * fG
        return v, G

    hessian = None
    if all(f.hessian is not None for f in fs):

        def hessian(W):
            return sum(w * f.hessian(W) for f, w in zip(fs, weights))

    return ScalarMatrixFunction(
        value=lambda W: both(W)[0],
        gradient=lambda W: both(W)[1],
        monotonicity=tags.pop(),
        label=label,
        dim=fs[0].dim,
        value_and_gradient=both,
        hessian=hessian,
    )
