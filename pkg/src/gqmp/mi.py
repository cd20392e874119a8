"""Mutual information oracles for finite-alphabet and Gaussian inputs.

Two families live here. The Monte Carlo estimators (:func:`fa_mi_mc`,
:func:`avg_fa_mi_mc`) evaluate the constellation-constrained mutual
information on a frozen, seeded sample set, so for a fixed seed they are
deterministic functions of the precoder. The closed-form pairwise
approximations (:func:`g_approx`, :func:`gbar_approx` and the fixed-channel
variant) are convex and matrix nonincreasing in ``W`` and are what the
optimizer works with.

All pairwise approximations share one shape::

    g(W) = (1/M) sum_m log2 sum_n phi(e_mn^H W e_mn)

with ``e_mn = x_m - x_n`` the differences of the ``M`` joint symbols. Only
the scalar kernel ``phi`` changes between them.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .functions import DomainError, Monotonicity, ScalarMatrixFunction, log2det_function
from .hermitian import HermitianError, as_hermitian, herm, psd_sqrt

__all__ = [
    "CONSTELLATIONS",
    "Constellation",
    "DifferenceTable",
    "ChannelStats",
    "MCConfig",
    "make_constellation",
    "difference_table",
    "block_mask",
    "gaussian_mi",
    "fa_mi_mc",
    "avg_fa_mi_mc",
    "mmse_matrix",
    "mmse_grad_mi",
    "g_approx",
    "g_i_approx",
    "gbar_approx",
    "g_fixed",
    "grad_g_approx",
    "approx_function",
    "approx_bar_function",
    "fixed_channel_function",
    "user_function",
    "exp_corr",
    "sample_kronecker",
]

LN2 = np.log(2.0)
CONSTELLATIONS = ("BPSK", "QPSK", "PSK8", "QAM16")


# ---------------------------------------------------------------------------
# Constellations and difference tables
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Constellation:
    """Unit-energy scalar constellation with equiprobable points."""

    name: str
    points: np.ndarray

    @property
    def order(self) -> int:
        return int(self.points.size)


def make_constellation(name: str) -> Constellation:
    """Build one of ``BPSK``, ``QPSK``, ``PSK8`` or ``QAM16``.

    Examples
    --------
    >>> make_constellation("BPSK").points
    array([ 1.+0.j, -1.+0.j])
    """
    key = str(name).upper()
    if key == "BPSK":
        pts = np.array([1.0, -1.0], dtype=complex)
    elif key == "QPSK":
        pts = np.array([1 + 1j, -1 + 1j, -1 - 1j, 1 - 1j]) / np.sqrt(2.0)
    elif key == "PSK8":
        pts = np.exp(2j * np.pi * np.arange(8) / 8)
    elif key == "QAM16":
        levels = np.array([-3.0, -1.0, 1.0, 3.0])
        pts = np.array([a + 1j * b for a in levels for b in levels]) / np.sqrt(10.0)
    else:
        raise ValueError(f"unknown constellation {name!r}; expected one of {CONSTELLATIONS}")
    return Constellation(key, pts.astype(complex))


@dataclass(frozen=True, eq=False)
class DifferenceTable:
    """All pairwise differences of the joint symbols of ``dims`` streams.

    Many pairs share the same difference vector, so the table stores the
    distinct vectors once (``unique``) and an ``M x M`` index into them.

    Attributes
    ----------
    constellation : Constellation
    dims : int
        Number of streams (length of a joint symbol).
    symbols : numpy.ndarray
        ``M x dims`` joint symbols in lexicographic order.
    unique : numpy.ndarray
        ``U x dims`` distinct difference vectors.
    index : numpy.ndarray
        ``M x M`` integers with ``e_mn = unique[index[m, n]]``.
    """

    constellation: Constellation
    dims: int
    symbols: np.ndarray
    unique: np.ndarray
    index: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def M(self) -> int:
        return int(self.symbols.shape[0])

    @property
    def vectors(self) -> np.ndarray:
        """Dense ``M x M x dims`` array of ``e_mn = x_m - x_n``."""
        return self.symbols[:, None, :] - self.symbols[None, :, :]

    def outer_coordinates(self) -> np.ndarray:
        """Rows ``v_u`` with ``e_u^H D e_u = v_u . [Re vec D, Im vec D]`` for Hermitian ``D``."""
        if "V" not in self._cache:
            E = self.unique
            C = E.conj()[:, :, None] * E[:, None, :]
            C = C.reshape(E.shape[0], -1)
            self._cache["V"] = np.concatenate([C.real, -C.imag], axis=1)
        return self._cache["V"]


_TABLES: dict = {}


def difference_table(c: Constellation, dims: int) -> DifferenceTable:
    """Difference table of ``dims`` streams of ``c`` (memoized)."""
    key = (c.name, int(dims))
    if key in _TABLES:
        return _TABLES[key]
    if dims < 1:
        raise ValueError("dims must be at least 1")
    symbols = np.array(list(itertools.product(c.points, repeat=dims)), dtype=complex)
    diffs = (symbols[:, None, :] - symbols[None, :, :]).reshape(-1, dims)
    keys = np.round(np.concatenate([diffs.real, diffs.imag], axis=1), 10)
    _, first, inverse = np.unique(keys, axis=0, return_index=True, return_inverse=True)
    M = symbols.shape[0]
    table = DifferenceTable(c, int(dims), symbols, diffs[first], inverse.reshape(M, M))
    _TABLES[key] = table
    return table


def block_mask(block: int, users: int, i: int) -> np.ndarray:
    """0/1 vector that zeroes the ``i``-th of ``users`` blocks of size ``block``."""
    if not 0 <= i < users:
        raise ValueError(f"user index {i} out of range for {users} users")
    d = np.ones(block * users)
    d[i * block : (i + 1) * block] = 0.0
    return d


# ---------------------------------------------------------------------------
# Pairwise log-sum approximations
# ---------------------------------------------------------------------------

# A kernel maps the quadratic forms q = e^H W e to (log phi, d/dq, d2/dq2).
Kernel = Callable[[np.ndarray], tuple]


def _kernel_power(N: float) -> Kernel:
    def k(q):
        t = 1.0 + 0.5 * q
        if np.any(t <= 0.0):
            raise DomainError("1 + e^H W e / 2 must be positive")
        return -N * np.log(t), -N / (2.0 * t), N / (4.0 * t * t)

    return k


def _kernel_bar(r: Sequence[float]) -> Kernel:
    rr = np.asarray(r, dtype=float)

    def k(q):
        t = 1.0 + 0.5 * q[..., None] * rr
        if np.any(t <= 0.0):
            raise DomainError("1 + r_q e^H W e / 2 must be positive")
        a = 0.5 * rr / t
        return -np.sum(np.log(t), axis=-1), -np.sum(a, axis=-1), np.sum(a * a, axis=-1)

    return k


def _kernel_exp(q):
    return -0.5 * q, np.full_like(q, -0.5), np.zeros_like(q)


def _forms(table: DifferenceTable, W: np.ndarray) -> np.ndarray:
    E = table.unique
    return np.real(np.einsum("ui,ij,uj->u", E.conj(), W, E))


def _pairwise(table: DifferenceTable, kernel: Kernel, W: np.ndarray, order: int):
    """Value, gradient and (for ``order == 2``) real Hessian of a pairwise sum."""
    W = np.asarray(W, dtype=complex)
    M = table.M
    q = _forms(table, W)
    psi, d1, d2 = kernel(q)
    idx = table.index
    Z = psi[idx]
    zmax = Z.max(axis=1, keepdims=True)
    ez = np.exp(Z - zmax)
    s = ez.sum(axis=1, keepdims=True)
    value = float(np.mean(zmax[:, 0] + np.log(s[:, 0])) / LN2)
    if order == 0:
        return value
    w = ez / s
    wd1 = w * d1[idx]
    cu = np.bincount(idx.ravel(), weights=wd1.ravel(), minlength=q.size) / (M * LN2)
    E = table.unique
    G = herm((E.T * cu) @ E.conj())
    if order == 1:
        return value, G
    V = table.outer_coordinates()
    au = np.bincount(idx.ravel(), weights=(w * (d2[idx] + d1[idx] ** 2)).ravel(), minlength=q.size)
    B = np.zeros((M, q.size))
    np.add.at(B, (np.repeat(np.arange(M), M), idx.ravel()), wd1.ravel())
    Um = B @ V
    H = (V.T * au) @ V - Um.T @ Um
    return value, G, 0.5 * (H + H.T) / (M * LN2)


def _check_dim(table: DifferenceTable, W: np.ndarray) -> np.ndarray:
    W = np.asarray(W, dtype=complex)
    if W.shape != (table.dims, table.dims):
        raise ValueError(f"W has shape {W.shape}, table expects {table.dims}x{table.dims}")
    return W


def g_approx(W: np.ndarray, N: float, table: DifferenceTable) -> float:
    """``(1/M) sum_m log2 sum_n (1 + e_mn^H W e_mn / 2)^(-N)``."""
    if N < 1:
        raise ValueError("N must be at least 1")
    return _pairwise(table, _kernel_power(N), _check_dim(table, W), 0)


def grad_g_approx(W: np.ndarray, N: float, table: DifferenceTable) -> np.ndarray:
    """Hermitian gradient of :func:`g_approx` (negative semidefinite)."""
    if N < 1:
        raise ValueError("N must be at least 1")
    return _pairwise(table, _kernel_power(N), _check_dim(table, W), 1)[1]


def gbar_approx(W: np.ndarray, r: Sequence[float], table: DifferenceTable) -> float:
    """``(1/M) sum_m log2 sum_n prod_q (1 + r_q e_mn^H W e_mn / 2)^(-1)``.

    ``r`` holds the receive-correlation eigenvalues; all ones of length ``N``
    gives :func:`g_approx` with that ``N``.
    """
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("r must be nonnegative")
    return _pairwise(table, _kernel_bar(r), _check_dim(table, W), 0)


def g_fixed(W: np.ndarray, table: DifferenceTable) -> float:
    """Fixed-channel pairwise approximation ``(1/M) sum_m log2 sum_n exp(-e^H W e / 2)``."""
    return _pairwise(table, _kernel_exp, _check_dim(table, W), 0)


def g_i_approx(W: np.ndarray, N: float, table: DifferenceTable, user_mask: Sequence[float]) -> float:
    """:func:`g_approx` with every difference replaced by ``I_i e_mn``.

    ``user_mask`` is the diagonal of ``I_i`` (see :func:`block_mask`). This is
    the direct formula; :func:`user_function` evaluates the same quantity on
    a smaller table.
    """
    d = np.asarray(user_mask, dtype=float)
    W = _check_dim(table, W)
    return g_approx(np.outer(d, d) * W, N, table)


def _wrap(table: DifferenceTable, kernel: Kernel, label: str) -> ScalarMatrixFunction:
    def both(W):
        return _pairwise(table, kernel, _check_dim(table, W), 1)

    def hessian(W):
        return _pairwise(table, kernel, _check_dim(table, W), 2)[2]

    return ScalarMatrixFunction(
        value=lambda W: _pairwise(table, kernel, _check_dim(table, W), 0),
        gradient=lambda W: both(W)[1],
        monotonicity=Monotonicity.MNI,
        label=label,
        dim=table.dims,
        value_and_gradient=both,
        hessian=hessian,
    )


def approx_function(table: DifferenceTable, N: float) -> ScalarMatrixFunction:
    """:func:`g_approx` as a registered convex MNI function."""
    if N < 1:
        raise ValueError("N must be at least 1")
    return _wrap(table, _kernel_power(N), f"g(W;{N:g})")


def approx_bar_function(table: DifferenceTable, r: Sequence[float]) -> ScalarMatrixFunction:
    """:func:`gbar_approx` as a registered convex MNI function."""
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("r must be nonnegative")
    return _wrap(table, _kernel_bar(r), "gbar(W;r)")


def fixed_channel_function(table: DifferenceTable) -> ScalarMatrixFunction:
    """:func:`g_fixed` as a registered convex MNI function."""
    return _wrap(table, _kernel_exp, "gfixed(W)")


def user_function(
    c: Constellation, block: int, users: int, i: int, N: float
) -> ScalarMatrixFunction:
    """``g_i(W; N)`` for the stacked layout of ``users`` blocks of size ``block``.

    Masking user ``i`` makes the inner sum over its symbols a constant factor
    ``Q^block``, so ``g_i(W) = block*log2(Q) + g(W_rest)`` where ``W_rest``
    keeps the rows and columns of the other users and ``g`` uses the table of
    ``block*(users-1)`` streams.
    """
    mask = block_mask(block, users, i)
    keep = np.flatnonzero(mask)
    r = block * users
    const = block * np.log2(c.order)
    if keep.size == 0:
        zero = np.zeros((r, r), dtype=complex)

        def both0(W):
            return float(users * block * np.log2(c.order)), zero.copy()

        return ScalarMatrixFunction(
            value=lambda W: both0(W)[0],
            gradient=lambda W: both0(W)[1],
            monotonicity=Monotonicity.MNI,
            label=f"g_{i}(W;{N:g})",
            dim=r,
            value_and_gradient=both0,
            hessian=lambda W: np.zeros((2 * r * r, 2 * r * r)),
        )
    inner = approx_function(difference_table(c, keep.size), N)
    sub = np.ix_(keep, keep)
    # positions of the kept entries in the full row-major vec(W)
    flat = (keep[:, None] * r + keep[None, :]).ravel()
    pos = np.concatenate([flat, flat + r * r])

    def both(W):
        W = np.asarray(W, dtype=complex)
        v, Gs = inner.evaluate(W[sub])
        G = np.zeros((r, r), dtype=complex)
        G[sub] = Gs
        return v + const, G

    def hessian(W):
        W = np.asarray(W, dtype=complex)
        H = np.zeros((2 * r * r, 2 * r * r))
        H[np.ix_(pos, pos)] = inner.hessian(W[sub])
        return H

    return ScalarMatrixFunction(
        value=lambda W: both(W)[0],
        gradient=lambda W: both(W)[1],
        monotonicity=Monotonicity.MNI,
        label=f"g_{i}(W;{N:g})",
        dim=r,
        value_and_gradient=both,
        hessian=hessian,
    )


# ---------------------------------------------------------------------------
# Gaussian inputs
# ---------------------------------------------------------------------------


def gaussian_mi(W: np.ndarray) -> float:
    """``log2 det(I + W)`` for ``W`` positive semidefinite up to ``1e-10``."""
    W = as_hermitian(W)
    lam = np.linalg.eigvalsh(W)
    if lam.size and lam[0] < -1e-10:
        raise HermitianError(f"W is not positive semidefinite (min eigenvalue {lam[0]:.3e})")
    return -log2det_function(W.shape[0]).value(W)


# ---------------------------------------------------------------------------
# Monte Carlo estimators
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MCConfig:
    """Monte Carlo sizes and seed.

    ``noise_samples`` noise vectors are drawn per channel realization.
    """

    noise_samples: int = 500
    channel_samples: int = 200
    seed: int = 0

    def __post_init__(self) -> None:
        if self.noise_samples < 1 or self.channel_samples < 1:
            raise ValueError("Monte Carlo sample counts must be at least 1")


def _noise(rng: np.random.Generator, S: int, n: int) -> np.ndarray:
    return (rng.standard_normal((S, n)) + 1j * rng.standard_normal((S, n))) / np.sqrt(2.0)


def _chunk(M: int, S: int) -> int:
    return max(1, int(4_000_000 // max(1, S * M)))


def _lse(Z: np.ndarray, axis: int) -> np.ndarray:
    zmax = Z.max(axis=axis, keepdims=True)
    return np.squeeze(zmax, axis) + np.log(np.sum(np.exp(Z - zmax), axis=axis))


def _mi_given_noise(HP: np.ndarray, table: DifferenceTable, noise: np.ndarray, mask) -> float:
    """Average of ``log2 a_m`` (or the plain MI when ``mask`` is None) over symbols and noise."""
    E = table.unique
    A = HP @ E.T  # received difference vectors, one column per unique e
    norm2 = np.sum(np.abs(A) ** 2, axis=0)
    cross = 2.0 * np.real(noise.conj() @ A)  # S x U
    D = norm2[None, :] + cross  # d(s, u) = |a_u + n_s|^2 - |n_s|^2
    if mask is not None:
        Am = HP @ (E * np.asarray(mask)[None, :]).T
        Dm = np.sum(np.abs(Am) ** 2, axis=0)[None, :] + 2.0 * np.real(noise.conj() @ Am)
    idx = table.index
    M = table.M
    total = 0.0
    step = _chunk(M, noise.shape[0])
    for lo in range(0, M, step):
        sl = idx[lo : lo + step]  # m-chunk x M
        full = _lse(-D[:, sl], axis=2)
        if mask is None:
            ref = np.log(M)
        else:
            ref = _lse(-Dm[:, sl], axis=2)
        total += float(np.sum(ref - full))
    value = total / (M * noise.shape[0] * LN2)
    # each term is at most log M in exact arithmetic; remove rounding excess
    return min(value, float(np.log2(M))) if mask is None else value


def fa_mi_mc(
    H: np.ndarray,
    P: np.ndarray,
    c: Constellation,
    mc: MCConfig,
    mask: Optional[Sequence[float]] = None,
) -> float:
    """Monte Carlo finite-alphabet mutual information of ``y = H P x + n``.

    Parameters
    ----------
    H : numpy.ndarray
        ``n_r x n_t`` channel (unit noise variance).
    P : numpy.ndarray
        ``n_t x r`` precoder; ``x`` has ``r`` i.i.d. symbols from ``c``.
    c : Constellation
    mc : MCConfig
        ``mc.noise_samples`` noise vectors are drawn from ``mc.seed`` and
        reused for every symbol, so the estimate is a deterministic function
        of ``P``.
    mask : sequence of float, optional
        Diagonal of ``I_i``. When given, returns the rate of the streams
        zeroed by the mask while the others act as interference.

    Returns
    -------
    float
        Estimate in bits. Exactly zero for ``P = 0``.
    """
    H = np.atleast_2d(np.asarray(H, dtype=complex))
    P = np.atleast_2d(np.asarray(P, dtype=complex))
    table = difference_table(c, P.shape[1])
    rng = np.random.default_rng(mc.seed)
    noise = _noise(rng, mc.noise_samples, H.shape[0])
    return _mi_given_noise(H @ P, table, noise, mask)


@dataclass(frozen=True, eq=False)
class ChannelStats:
    """Second-order statistics of a Kronecker channel ``Phi^(1/2) Hw Theta^(1/2)``.

    ``receive_corr = None`` means uncorrelated receive antennas.
    """

    transmit_corr: np.ndarray
    rx_antennas: int
    receive_corr: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        T = as_hermitian(self.transmit_corr)
        object.__setattr__(self, "transmit_corr", T)
        object.__setattr__(self, "_t_sqrt", psd_sqrt(T))
        if self.rx_antennas < 1:
            raise ValueError("rx_antennas must be at least 1")
        if self.receive_corr is not None:
            R = as_hermitian(self.receive_corr)
            if R.shape != (self.rx_antennas, self.rx_antennas):
                raise ValueError("receive_corr must be rx_antennas x rx_antennas")
            object.__setattr__(self, "receive_corr", R)
            object.__setattr__(self, "_r_sqrt", psd_sqrt(R))
        else:
            object.__setattr__(self, "_r_sqrt", None)

    @property
    def tx_antennas(self) -> int:
        return self.transmit_corr.shape[0]

    def receive_eigenvalues(self) -> np.ndarray:
        """Eigenvalues of the receive correlation (all ones when uncorrelated)."""
        if self.receive_corr is None:
            return np.ones(self.rx_antennas)
        return np.clip(np.linalg.eigvalsh(self.receive_corr)[::-1], 0.0, None)


def _draw_channel(stats: ChannelStats, rng: np.random.Generator) -> np.ndarray:
    Hw = _noise(rng, stats.rx_antennas, stats.tx_antennas)
    H = Hw @ stats._t_sqrt
    if stats._r_sqrt is not None:
        H = stats._r_sqrt @ H
    return H


def sample_kronecker(stats: ChannelStats, seed) -> np.ndarray:
    """One channel draw ``Phi^(1/2) Hw Theta^(1/2)`` with ``Hw`` i.i.d. CN(0, 1)."""
    return _draw_channel(stats, np.random.default_rng(seed))


def avg_fa_mi_mc(
    stats: ChannelStats,
    P: np.ndarray,
    c: Constellation,
    mc: MCConfig,
    mask: Optional[Sequence[float]] = None,
) -> float:
    """Average finite-alphabet mutual information over Kronecker channel draws.

    Draw ``k`` uses the generator seeded by ``(mc.seed, k)`` for both the
    channel and its noise, so the result does not depend on how draws are
    scheduled, and links with equal statistics see identical samples.
    """
    P = np.atleast_2d(np.asarray(P, dtype=complex))
    table = difference_table(c, P.shape[1])
    total = 0.0
    for k in range(mc.channel_samples):
        rng = np.random.default_rng([mc.seed, k])
        H = _draw_channel(stats, rng)
        noise = _noise(rng, mc.noise_samples, stats.rx_antennas)
        total += _mi_given_noise(H @ P, table, noise, mask)
    return total / mc.channel_samples


def _posterior_errors(HP, table, noise):
    """Yield ``(chunk rows, weights)`` of the symbol posteriors, chunked over ``m``."""
    E = table.unique
    A = HP @ E.T
    D = np.sum(np.abs(A) ** 2, axis=0)[None, :] + 2.0 * np.real(noise.conj() @ A)
    idx = table.index
    step = _chunk(table.M, noise.shape[0])
    for lo in range(0, table.M, step):
        sl = idx[lo : lo + step]
        Z = -D[:, sl]
        Z = Z - Z.max(axis=2, keepdims=True)
        w = np.exp(Z)
        w /= w.sum(axis=2, keepdims=True)
        yield sl, w


def mmse_matrix(H: np.ndarray, P: np.ndarray, c: Constellation, mc: MCConfig) -> np.ndarray:
    """Monte Carlo MMSE matrix ``E[(x - E[x|y])(x - E[x|y])^H]`` on the frozen samples.

    The estimation error for transmitted ``x_m`` is ``sum_k p(x_k|y) e_mk``.
    """
    H = np.atleast_2d(np.asarray(H, dtype=complex))
    P = np.atleast_2d(np.asarray(P, dtype=complex))
    table = difference_table(c, P.shape[1])
    noise = _noise(np.random.default_rng(mc.seed), mc.noise_samples, H.shape[0])
    E = table.unique
    Phi = np.zeros((table.dims, table.dims), dtype=complex)
    for sl, w in _posterior_errors(H @ P, table, noise):
        err = np.einsum("smk,mki->smi", w, E[sl])
        Phi += np.einsum("smi,smj->ij", err, err.conj())
    return herm(Phi / (table.M * noise.shape[0]))


def mmse_grad_mi(H: np.ndarray, P: np.ndarray, c: Constellation, mc: MCConfig) -> np.ndarray:
    """Gradient ``d I / d P*`` of :func:`fa_mi_mc` on its frozen noise samples.

    This is the exact derivative of the estimator (pathwise), which makes it
    consistent with finite differences of :func:`fa_mi_mc` at the same seed.
    In expectation it equals ``H^H H P Phi / ln 2`` with ``Phi`` the MMSE
    matrix (see :func:`mmse_matrix`).
    """
    H = np.atleast_2d(np.asarray(H, dtype=complex))
    P = np.atleast_2d(np.asarray(P, dtype=complex))
    table = difference_table(c, P.shape[1])
    noise = _noise(np.random.default_rng(mc.seed), mc.noise_samples, H.shape[0])
    HP = H @ P
    E = table.unique
    U = E.shape[0]
    cu = np.zeros(U)
    Bn = np.zeros((noise.shape[0], table.dims), dtype=complex)
    for sl, w in _posterior_errors(HP, table, noise):
        cu += np.bincount(np.broadcast_to(sl, w.shape).ravel(), weights=w.ravel(), minlength=U)
        Bn += np.einsum("smk,mki->si", w, E[sl])
    # sum over (s, m, k) of w * (HP e + n_s) e^H
    inner = HP @ ((E.T * cu) @ E.conj()) + noise.T @ Bn.conj()
    return H.conj().T @ inner / (table.M * noise.shape[0] * LN2)


# ---------------------------------------------------------------------------
# Correlation models
# ---------------------------------------------------------------------------


def exp_corr(rho: float, n: int) -> np.ndarray:
    """Exponential correlation matrix ``[R]_ij = rho^|i-j|``."""
    if not 0.0 <= rho < 1.0:
        raise ValueError("rho must lie in [0, 1)")
    k = np.arange(n)
    return np.power(float(rho), np.abs(k[:, None] - k[None, :])).astype(complex)
