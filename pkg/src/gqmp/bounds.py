"""Tangent concave minorants and convex majorants of composite functions.

For ``f(X) = g(X^H A X)`` with ``A = A+ + A-`` (definite parts) and anchor
``X0``, the lower bound is a concave quadratic obtained by linearizing the
part of the quadratic map that would otherwise break concavity, then
linearizing ``g`` at ``W0 = X0^H A X0``. The upper bound keeps ``g`` and
linearizes the opposite part of the map. Both touch ``f`` at ``X0`` with the
same gradient.

Which part is linearized depends on the tag of ``g``:

===========  ====================  ====================
tag          lower bound linear in  upper bound linear in
===========  ====================  ====================
MND          ``A+``                ``A-``
MNI          ``A-``                ``A+``
===========  ====================  ====================
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .functions import (
    CompositeQMF,
    DomainError,
    GeneralizedQMF,
    Monotonicity,
    eval_gqmf,
    grad_gqmf,
)
from .hermitian import herm, quad_map
from .numerics import fd_complex_grad, fd_real_hessian, quadratic_real_hessian

__all__ = [
    "Closure",
    "LowerBound",
    "UpperBound",
    "SurrogateGQMF",
    "lower_bound",
    "upper_bound",
    "surrogate_gqmf",
    "tangency_check",
]


class Closure:
    """Value and gradient oracle in ``X`` (complex gradient convention)."""

    def value(self, X: np.ndarray) -> float:
        return self.value_and_grad(X)[0]

    def grad(self, X: np.ndarray) -> np.ndarray:
        return self.value_and_grad(X)[1]

    def value_and_grad(self, X: np.ndarray) -> tuple[float, np.ndarray]:  # pragma: no cover
        raise NotImplementedError

    def real_hessian(self, X: np.ndarray, h: float = 1e-5) -> np.ndarray:
        """Hessian in real coordinates; central differences unless overridden."""

        def grad_or_none(Y):
            try:
                return self.value_and_grad(Y)[1]
            except DomainError:
                return None

        return fd_real_hessian(grad_or_none, X, h)


def _parts(c: CompositeQMF, lower: bool) -> tuple[np.ndarray, np.ndarray]:
    """(quadratic, linearized) parts of ``A`` for a bound of the given side."""
    mnd = c.g.monotonicity is Monotonicity.MND
    if mnd == lower:
        return c.A_neg, c.A_pos
    return c.A_pos, c.A_neg


class LowerBound(Closure):
    """Concave quadratic minorant ``l(X; X0)`` of a composite."""

    def __init__(self, c: CompositeQMF, X0: np.ndarray):
        X0 = np.asarray(X0, dtype=complex)
        self.composite = c
        self.anchor = X0
        W0 = quad_map(X0, c.A)
        g0, G = c.g.evaluate(W0)
        self.G = herm(G)
        self.Bq, Bl = _parts(c, lower=True)
        self.C = Bl @ X0 @ self.G
        self.const = g0 - float(np.real(np.trace(W0 @ self.G))) - float(np.real(np.vdot(X0, self.C)))

    def value_and_grad(self, X: np.ndarray) -> tuple[float, np.ndarray]:
        BXG = self.Bq @ X @ self.G
        v = float(np.real(np.vdot(X, BXG))) + 2.0 * float(np.real(np.vdot(X, self.C))) + self.const
        return v, BXG + self.C

    def real_hessian(self, X: np.ndarray, h: float = 1e-5) -> np.ndarray:
        if not hasattr(self, "_hess"):
            self._hess = quadratic_real_hessian(self.Bq, self.G)
        return self._hess


class UpperBound(Closure):
    """Convex majorant ``u(X; X0) = g(U(X))`` of a composite."""

    def __init__(self, c: CompositeQMF, X0: np.ndarray):
        X0 = np.asarray(X0, dtype=complex)
        self.composite = c
        self.anchor = X0
        self.Bq, Bl = _parts(c, lower=False)
        self.D = Bl @ X0
        self.offset = herm(X0.conj().T @ self.D)

    def inner(self, X: np.ndarray) -> np.ndarray:
        XhD = X.conj().T @ self.D
        return herm(X.conj().T @ self.Bq @ X + XhD + XhD.conj().T - self.offset)

    def value_and_grad(self, X: np.ndarray) -> tuple[float, np.ndarray]:
        v, G = self.composite.g.evaluate(self.inner(X))
        return v, (self.Bq @ X + self.D) @ G

    def real_hessian(self, X: np.ndarray, h: float = 1e-5) -> np.ndarray:
        g = self.composite.g
        if g.hessian is None:
            return super().real_hessian(X, h)
        W = self.inner(X)
        _, G = g.evaluate(W)
        K = self.Bq @ X + self.D
        # Jacobian of X -> U(X) in real coordinates. A unit step in the real
        # (imaginary) part of X[a, b] moves U by c E_ba K + conj(c) K^H E_ab
        # with c = 1 (c = -i).
        n, r = X.shape
        eye = np.eye(r)
        T1 = np.einsum("bp,aq->abpq", eye, K).reshape(n * r, r * r)
        T2 = np.einsum("bq,ap->abpq", eye, K.conj()).reshape(n * r, r * r)
        d_re = (T1 + T2).T
        d_im = (1j * (T2 - T1)).T
        J = np.block([[d_re.real, d_im.real], [d_re.imag, d_im.imag]])
        H = J.T @ g.hessian(W) @ J
        if np.any(self.Bq):
            H = H + quadratic_real_hessian(self.Bq, herm(G))
        return H


def lower_bound(c: CompositeQMF, X0: np.ndarray) -> LowerBound:
    """Concave lower bound of ``g(X^H A X)`` tangent at ``X0``.

    Parameters
    ----------
    c : CompositeQMF
        The composite function.
    X0 : numpy.ndarray
        Anchor; ``X0^H A X0`` must lie in the domain of ``g``.

    Returns
    -------
    LowerBound
        Closure with ``l(X0) = f(X0)``, matching gradient and ``l <= f``.
    """
    return LowerBound(c, X0)


def upper_bound(c: CompositeQMF, X0: np.ndarray) -> UpperBound:
    """Convex upper bound of ``g(X^H A X)`` tangent at ``X0``.

    Evaluating the closure far from the anchor may raise
    :class:`~gqmp.functions.DomainError` when the linearized inner matrix
    leaves the domain of ``g``.
    """
    return UpperBound(c, X0)


class SurrogateGQMF(Closure):
    """Concave tangent minorant of a generalized QMF.

    Attributes
    ----------
    anchor : numpy.ndarray
        Point of tangency.
    terms : list of (float, Closure)
        Positive weights carry lower bounds and negative weights carry upper
        bounds, so every weighted term is concave.
    source : GeneralizedQMF
        The function being bounded.
    """

    def __init__(self, f: GeneralizedQMF, X0: np.ndarray):
        X0 = np.asarray(X0, dtype=complex)
        self.anchor = X0
        self.source = f
        self.terms = []
        for a, c in f.terms:
            if a > 0:
                self.terms.append((a, LowerBound(c, X0)))
            elif a < 0:
                self.terms.append((a, UpperBound(c, X0)))

    def value_and_grad(self, X: np.ndarray) -> tuple[float, np.ndarray]:
        v = 0.0
        grad = np.zeros_like(X, dtype=complex)
        for a, t in self.terms:
            tv, tg = t.value_and_grad(X)
            v += a * tv
            grad += a * tg
        return float(v), grad

    def real_hessian(self, X: np.ndarray, h: float = 1e-5) -> np.ndarray:
        H = 0.0
        for a, t in self.terms:
            H = H + a * t.real_hessian(X, h)
        if np.isscalar(H):
            d = 2 * X.size
            return np.zeros((d, d))
        return H


def surrogate_gqmf(f: GeneralizedQMF, X0: np.ndarray) -> SurrogateGQMF:
    """Concave surrogate of ``f`` tangent at ``X0`` (zero weights dropped)."""
    return SurrogateGQMF(f, X0)


def tangency_check(
    f: GeneralizedQMF,
    X0: np.ndarray,
    samples: int = 100,
    seed: int = 0,
    radius: Optional[float] = None,
) -> dict:
    """Measure how well the surrogate of ``f`` at ``X0`` touches and minorizes ``f``.

    Parameters
    ----------
    f : GeneralizedQMF
        Function to bound.
    X0 : numpy.ndarray
        Anchor point.
    samples : int
        Number of random points for the sandwich test.
    seed : int
        Seed of the sampling generator.
    radius : float, optional
        Typical distance of sampled points from the anchor. Defaults to
        ``max(1, ||X0||_F)``.

    Returns
    -------
    dict
        ``value_gap_at_anchor``, ``grad_gap_at_anchor`` (relative to a central
        finite-difference gradient of ``f``) and ``max_sandwich_violation``
        (largest ``surrogate - f`` over the samples; points where an upper
        bound leaves the domain of its function count as ``-inf``).
    """
    if samples < 1:
        raise ValueError("samples must be at least 1")
    X0 = np.asarray(X0, dtype=complex)
    s = surrogate_gqmf(f, X0)
    f0 = eval_gqmf(f, X0)
    value_gap = abs(s.value(X0) - f0)
    g_fd = fd_complex_grad(lambda Y: eval_gqmf(f, Y), X0)
    g_s = s.grad(X0)
    grad_gap = float(np.linalg.norm(g_s - g_fd) / max(1.0, np.linalg.norm(g_fd)))
    rng = np.random.default_rng(seed)
    rad = radius if radius is not None else max(1.0, float(np.linalg.norm(X0)))
    worst = -np.inf
    for _ in range(samples):
        Z = rng.standard_normal(X0.shape) + 1j * rng.standard_normal(X0.shape)
        Z *= rad * rng.uniform(0.0, 2.0) / max(np.linalg.norm(Z), 1e-300)
        X = X0 + Z
        try:
            sv = s.value(X)
            fv = eval_gqmf(f, X)
        except DomainError:
            continue
        worst = max(worst, sv - fv)
    return {
        "value_gap_at_anchor": float(value_gap),
        "grad_gap_at_anchor": grad_gap,
        "max_sandwich_violation": float(worst),
        "analytic_grad_gap_at_anchor": float(np.linalg.norm(g_s - grad_gqmf(f, X0))),
    }
