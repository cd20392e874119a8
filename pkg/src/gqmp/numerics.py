"""Small numerical helpers shared by the solver modules."""

from __future__ import annotations

from typing import Callable

import numpy as np

__all__ = [
    "to_real",
    "from_real",
    "real_grad",
    "fd_complex_grad",
    "fd_real_hessian",
    "quadratic_real_hessian",
    "log_sum_exp_min",
]


def to_real(X: np.ndarray) -> np.ndarray:
    """Stack ``Re X`` and ``Im X`` into one real vector."""
    return np.concatenate([X.real.ravel(), X.imag.ravel()])


def from_real(x: np.ndarray, shape: tuple) -> np.ndarray:
    """Inverse of :func:`to_real`."""
    k = x.size // 2
    return (x[:k] + 1j * x[k:]).reshape(shape)


def real_grad(G: np.ndarray) -> np.ndarray:
    """Real gradient (w.r.t. :func:`to_real` coordinates) of a complex gradient.

    With ``G = (d/dRe + 1j d/dIm) / 2`` the real partials are ``2 Re G`` and
    ``2 Im G``.
    """
    return 2.0 * to_real(G)


def fd_complex_grad(fun: Callable[[np.ndarray], float], X: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite-difference complex gradient ``(d/dRe + 1j d/dIm) / 2``."""
    X = np.asarray(X, dtype=complex)
    G = np.zeros_like(X)
    for idx in np.ndindex(X.shape):
        E = np.zeros_like(X)
        E[idx] = h
        d_re = (fun(X + E) - fun(X - E)) / (2 * h)
        d_im = (fun(X + 1j * E) - fun(X - 1j * E)) / (2 * h)
        G[idx] = 0.5 * (d_re + 1j * d_im)
    return G


def log_sum_exp_min(values: np.ndarray, beta: float) -> tuple[float, np.ndarray]:
    """Smoothed minimum ``(1/beta) ln sum_j exp(beta v_j)`` for ``beta < 0``.

    Returns the value and the softmax weights (its partial derivatives).
    """
    v = np.asarray(values, dtype=float)
    if v.size == 1:
        return float(v[0]), np.ones(1)
    z = beta * v
    zmax = np.max(z)
    e = np.exp(z - zmax)
    s = np.sum(e)
    return float((zmax + np.log(s)) / beta), e / s


def fd_real_hessian(grad_fn: Callable[[np.ndarray], np.ndarray], X: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Hessian in :func:`to_real` coordinates by central differences of a complex gradient.

    ``grad_fn`` returns the complex gradient or ``None`` when the point is
    outside the domain; one-sided differences are used next to the boundary.
    """
    X = np.asarray(X, dtype=complex)
    x = to_real(X)
    d = x.size
    step = h * (1.0 + float(np.max(np.abs(x)))) if d else h
    H = np.empty((d, d))
    g0 = None
    for k in range(d):
        e = np.zeros(d)
        e[k] = step
        gp = grad_fn(from_real(x + e, X.shape))
        gm = grad_fn(from_real(x - e, X.shape))
        if gp is not None and gm is not None:
            H[:, k] = (real_grad(gp) - real_grad(gm)) / (2 * step)
            continue
        if g0 is None:
            g0 = grad_fn(X)
        if gp is not None:
            H[:, k] = (real_grad(gp) - real_grad(g0)) / step
        elif gm is not None:
            H[:, k] = (real_grad(g0) - real_grad(gm)) / step
        else:
            H[:, k] = 0.0
    return 0.5 * (H + H.T)


def quadratic_real_hessian(B: np.ndarray, G: np.ndarray) -> np.ndarray:
    """Real Hessian of ``Re tr(X^H B X G)`` for Hermitian ``B`` and ``G``.

    With row-major vectorization ``tr(X^H B X G) = vec(X)^H (B kron G^T) vec(X)``.
    """
    T = np.kron(B, G.T)
    return 2.0 * np.block([[T.real, -T.imag], [T.imag, T.real]])
