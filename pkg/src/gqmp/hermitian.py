"""Dense complex Hermitian matrix utilities.

The eigen-decomposition here is a cyclic Jacobi method with a fixed sweep
order, so repeated calls on the same input produce bitwise-identical output.
Everything that builds bounds (definite-part splits, quadratic maps) goes
through these helpers.
"""

from __future__ import annotations

import json
from typing import Any, NamedTuple

import numpy as np

__all__ = [
    "HermitianError",
    "ShapeError",
    "PSDSplit",
    "as_hermitian",
    "hermitian_eig",
    "psd_split",
    "psd_sqrt",
    "quad_map",
    "herm",
    "matrix_to_literal",
    "matrix_from_literal",
    "dumps_matrix",
    "loads_matrix",
]

HERMITIAN_RTOL = 1e-12
_MAX_SWEEPS = 100


class HermitianError(ValueError):
    """Raised when a matrix fails the Hermitian symmetry check."""


class ShapeError(ValueError):
    """Raised when matrix dimensions do not agree."""


class PSDSplit(NamedTuple):
    """Positive and negative definite parts of a Hermitian matrix."""

    positive_part: np.ndarray
    negative_part: np.ndarray


def herm(A: np.ndarray) -> np.ndarray:
    """Return the Hermitian part ``(A + A^H) / 2``."""
    return 0.5 * (A + A.conj().T)


def as_hermitian(A: Any, rtol: float = HERMITIAN_RTOL) -> np.ndarray:
    """Validate ``A`` as a square Hermitian matrix and return it as complex.

    Parameters
    ----------
    A : array_like
        Candidate matrix.
    rtol : float
        Tolerance relative to ``max(1, max|A|)``.

    Returns
    -------
    numpy.ndarray
        Complex copy of ``A`` with the Hermitian part enforced exactly.

    Raises
    ------
    ShapeError
        If ``A`` is not square.
    HermitianError
        If some pair ``A[i, j]``, ``conj(A[j, i])`` disagrees. The message
        names the first offending pair.
    """
    A = np.array(A, dtype=complex)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] == 0:
        raise ShapeError(f"expected a non-empty square matrix, got shape {A.shape}")
    scale = max(1.0, float(np.max(np.abs(A))))
    gap = np.abs(A - A.conj().T)
    bad = np.argwhere(gap > rtol * scale)
    if bad.size:
        i, j = (int(v) for v in bad[0])
        if i > j:
            i, j = j, i
        if i == j:
            raise HermitianError(
                f"diagonal entry ({i}, {i}) has imaginary part {A[i, i].imag!r}"
            )
        raise HermitianError(
            f"entries ({i}, {j}) = {A[i, j]!r} and ({j}, {i}) = {A[j, i]!r} "
            "are not conjugates"
        )
    return herm(A)


def _jacobi_rotate(A: np.ndarray, V: np.ndarray, p: int, q: int) -> None:
    """Zero ``A[p, q]`` in place with a complex Givens rotation."""
    z = A[p, q]
    b = abs(z)
    if b == 0.0:
        return
    phase = z / b
    a_pp = A[p, p].real
    a_qq = A[q, q].real
    theta = (a_qq - a_pp) / (2.0 * b)
    if abs(theta) > 1e150:
        t = 0.5 / theta
    else:
        t = 1.0 / (abs(theta) + np.sqrt(theta * theta + 1.0))
        if theta < 0.0:
            t = -t
    c = 1.0 / np.sqrt(1.0 + t * t)
    s = t * c
    # G = diag(1, conj(phase)) @ [[c, s], [-s, c]] acting on coordinates p, q
    g_pp = c
    g_pq = s
    g_qp = -s * np.conj(phase)
    g_qq = c * np.conj(phase)
    col_p = A[:, p].copy()
    col_q = A[:, q].copy()
    A[:, p] = col_p * g_pp + col_q * g_qp
    A[:, q] = col_p * g_pq + col_q * g_qq
    row_p = A[p, :].copy()
    row_q = A[q, :].copy()
    A[p, :] = np.conj(g_pp) * row_p + np.conj(g_qp) * row_q
    A[q, :] = np.conj(g_pq) * row_p + np.conj(g_qq) * row_q
    A[p, q] = 0.0
    A[q, p] = 0.0
    A[p, p] = A[p, p].real
    A[q, q] = A[q, q].real
    v_p = V[:, p].copy()
    v_q = V[:, q].copy()
    V[:, p] = v_p * g_pp + v_q * g_qp
    V[:, q] = v_p * g_pq + v_q * g_qq


def hermitian_eig(A: Any) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of a Hermitian matrix by cyclic Jacobi sweeps.

    Parameters
    ----------
    A : array_like
        Hermitian ``n x n`` matrix.

    Returns
    -------
    eigenvalues : numpy.ndarray
        Real eigenvalues sorted in descending order.
    eigenvectors : numpy.ndarray
        Unitary matrix whose columns are the matching eigenvectors, so that
        ``A = U @ diag(eigenvalues) @ U^H``.
    """
    A = as_hermitian(A).copy()
    n = A.shape[0]
    V = np.eye(n, dtype=complex)
    norm = np.linalg.norm(A)
    if n > 1 and norm > 0.0:
        target = (1e-16 * norm) ** 2
        for _ in range(_MAX_SWEEPS):
            off = np.sum(np.abs(A[~np.eye(n, dtype=bool)]) ** 2)
            if off <= target:
                break
            for p in range(n - 1):
                for q in range(p + 1, n):
                    _jacobi_rotate(A, V, p, q)
    w = np.real(np.diag(A)).copy()
    order = np.argsort(-w, kind="stable")
    return w[order], V[:, order]


def psd_split(A: Any) -> PSDSplit:
    """Split a Hermitian matrix into its positive and negative definite parts.

    Eigenvalues with magnitude at most ``1e-10 * max|lambda|`` are assigned to
    neither part.

    Parameters
    ----------
    A : array_like
        Hermitian matrix.

    Returns
    -------
    PSDSplit
        ``(positive_part, negative_part)`` with ``positive_part >= 0`` and
        ``negative_part <= 0``.
    """
    w, U = hermitian_eig(A)
    tau = 1e-10 * float(np.max(np.abs(w))) if w.size else 0.0
    pos = w > tau
    neg = w < -tau
    Up = U[:, pos]
    Un = U[:, neg]
    positive = herm((Up * w[pos]) @ Up.conj().T)
    negative = herm((Un * w[neg]) @ Un.conj().T)
    return PSDSplit(positive, negative)


def psd_sqrt(A: Any, tol: float = 1e-10) -> np.ndarray:
    """Hermitian square root of a positive semidefinite matrix.

    Negative eigenvalues down to ``-tol * max|lambda|`` are clipped to zero;
    anything more negative raises :class:`HermitianError`.
    """
    w, U = hermitian_eig(A)
    scale = float(np.max(np.abs(w))) if w.size else 0.0
    if w.size and w[-1] < -tol * max(scale, 1.0):
        raise HermitianError(f"matrix is not positive semidefinite (min eigenvalue {w[-1]:.3e})")
    r = np.sqrt(np.clip(w, 0.0, None))
    return herm((U * r) @ U.conj().T)


def quad_map(X: Any, A: Any) -> np.ndarray:
    """Quadratic matrix map ``W = X^H A X``.

    Parameters
    ----------
    X : array_like
        Complex ``n x r`` matrix.
    A : array_like
        Hermitian ``n x n`` matrix.

    Returns
    -------
    numpy.ndarray
        Hermitian ``r x r`` matrix.
    """
    X = np.asarray(X, dtype=complex)
    A = np.asarray(A, dtype=complex)
    if X.ndim != 2 or A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[1] != X.shape[0]:
        raise ShapeError(f"cannot form X^H A X with X {X.shape} and A {A.shape}")
    return herm(X.conj().T @ A @ X)


# ---------------------------------------------------------------------------
# Matrix literal format: {"dim": n, "entries": [[re, im], ...]} for square
# matrices, {"shape": [rows, cols], "entries": [...]} otherwise. Entries are
# listed in row-major order.
# ---------------------------------------------------------------------------


def matrix_to_literal(M: Any) -> dict:
    """Encode a complex matrix as a JSON-friendly literal."""
    M = np.atleast_2d(np.asarray(M, dtype=complex))
    entries = [[float(z.real), float(z.imag)] for z in M.ravel()]
    if M.shape[0] == M.shape[1]:
        return {"dim": int(M.shape[0]), "entries": entries}
    return {"shape": [int(M.shape[0]), int(M.shape[1])], "entries": entries}


def matrix_from_literal(lit: dict) -> np.ndarray:
    """Decode a matrix literal produced by :func:`matrix_to_literal`.

    Raises
    ------
    ShapeError
        If the entry count does not match the declared size or the literal
        is malformed.
    """
    if not isinstance(lit, dict) or "entries" not in lit:
        raise ShapeError("matrix literal must be an object with an 'entries' field")
    if "shape" in lit:
        rows, cols = (int(v) for v in lit["shape"])
    elif "dim" in lit:
        rows = cols = int(lit["dim"])
    else:
        raise ShapeError("matrix literal needs a 'dim' or 'shape' field")
    entries = lit["entries"]
    if len(entries) != rows * cols:
        raise ShapeError(f"expected {rows * cols} entries, found {len(entries)}")
    try:
        vals = [complex(float(re), float(im)) for re, im in entries]
    except (TypeError, ValueError) as exc:
        raise ShapeError("each entry must be a [re, im] pair") from exc
    return np.array(vals, dtype=complex).reshape(rows, cols)


def dumps_matrix(M: Any) -> str:
    """Serialize a matrix literal to JSON text (floats written with ``repr``)."""
    return json.dumps(matrix_to_literal(M))


def loads_matrix(text: str) -> np.ndarray:
    """Inverse of :func:`dumps_matrix`."""
    return matrix_from_literal(json.loads(text))
