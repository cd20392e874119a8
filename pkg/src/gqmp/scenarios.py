"""Communication scenarios as GQMP instances, plus the comparison baselines.

Builders return objects the drivers in :mod:`gqmp.algorithms` consume:

* :func:`build_p2p` and :func:`build_wiretap` give a :class:`ProblemInstance`
  for :func:`~gqmp.algorithms.solve_gqmp`.
* :func:`build_multicast` (and its doubly correlated variant) give an
  ``I x J`` grid for the min-rate driver; flatten it for
  :func:`~gqmp.algorithms.solve_minrate`.
* :func:`build_broadcast` gives the grid for
  :func:`~gqmp.algorithms.solve_sum_secrecy`.

Finite-alphabet mutual information enters through the pairwise
approximations of :mod:`gqmp.mi`; Gaussian inputs through
``-log2 det(I + W)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .algorithms import BetaSchedule, SolveTrace, solve_sum_secrecy
from .functions import (
    CompositeQMF,
    GeneralizedQMF,
    ProblemInstance,
    QuadraticConstraint,
    QuadraticConstraintSet,
    eval_gqmf,
    log2det_function,
    masked,
    trace_affine,
)
from .hermitian import as_hermitian, hermitian_eig, psd_sqrt
from .mi import (
    ChannelStats,
    Constellation,
    MCConfig,
    _draw_channel,
    approx_bar_function,
    approx_function,
    avg_fa_mi_mc,
    block_mask,
    difference_table,
    fixed_channel_function,
    user_function,
)

__all__ = [
    "WiretapConfig",
    "CRNetworkConfig",
    "ScenarioPieces",
    "GaussianBaseline",
    "build_p2p",
    "build_wiretap",
    "build_multicast",
    "build_broadcast",
    "build_multicast_doubly_correlated",
    "build_gaussian_broadcast",
    "waterfilling",
    "waterfilling_powers",
    "gaussian_precoding_mc",
    "gaussian_broadcast_baseline",
    "initial_precoder",
    "random_precoder",
    "grid_minimum",
    "broadcast_objective",
    "multicast_rate_mc",
    "broadcast_rate_mc",
    "user_rates_mc",
    "block_powers",
]

log = logging.getLogger(__name__)
LN2 = np.log(2.0)


@dataclass(frozen=True, eq=False)
class WiretapConfig:
    """MIMO wiretap link: receiver ``H_r``, eavesdropper ``H_e``, common noise variance."""

    H_r: np.ndarray
    H_e: np.ndarray
    noise_var: float
    power: float
    constellation: Optional[Constellation] = None

    def __post_init__(self) -> None:
        if not self.noise_var > 0:
            raise ValueError("noise_var must be positive")
        if not self.power > 0:
            raise ValueError("power must be positive")


@dataclass(frozen=True, eq=False)
class CRNetworkConfig:
    """Secure cognitive-radio downlink.

    Parameters
    ----------
    sr_stats, ed_stats : list of ChannelStats
        Secondary receivers (``I`` entries) and eavesdroppers (``J``).
    pr_stats : list of ChannelStats
        Primary receivers (``K`` entries, may be empty).
    power_budget : float
        Total transmit power ``gamma_0``.
    interference_budgets : list of float
        ``gamma_k`` for each primary receiver.
    constellation : Constellation
    scenario : str
        ``multicast`` or ``broadcast``.
    """

    sr_stats: Sequence[ChannelStats]
    ed_stats: Sequence[ChannelStats]
    pr_stats: Sequence[ChannelStats]
    power_budget: float
    interference_budgets: Sequence[float]
    constellation: Constellation
    scenario: str = "multicast"

    def __post_init__(self) -> None:
        if len(self.sr_stats) < 1 or len(self.ed_stats) < 1:
            raise ValueError("need at least one secondary receiver and one eavesdropper")
        if len(self.interference_budgets) != len(self.pr_stats):
            raise ValueError("one interference budget per primary receiver is required")
        if not self.power_budget > 0 or any(not g > 0 for g in self.interference_budgets):
            raise ValueError("budgets must be positive")
        if self.scenario not in ("multicast", "broadcast"):
            raise ValueError(f"unknown scenario {self.scenario!r}")
        dims = {s.tx_antennas for s in (*self.sr_stats, *self.ed_stats, *self.pr_stats)}
        if len(dims) != 1:
            raise ValueError("all links must share the number of transmit antennas")

    @property
    def tx_antennas(self) -> int:
        return self.sr_stats[0].tx_antennas

    @property
    def users(self) -> int:
        return len(self.sr_stats)


@dataclass
class ScenarioPieces:
    """``f_ij`` grid plus feasible set of a multi-user scenario."""

    grid: list
    qset: QuadraticConstraintSet
    x_shape: tuple

    def flat(self) -> list:
        return [f for row in self.grid for f in row]


def _constant(dim: int, n: int, value: float) -> CompositeQMF:
    return CompositeQMF(trace_affine(dim, np.zeros((dim, dim)), offset=value), np.zeros((n, n)))


def _gram(H: np.ndarray) -> np.ndarray:
    H = np.atleast_2d(np.asarray(H, dtype=complex))
    return as_hermitian(H.conj().T @ H, rtol=1e-9)


def build_p2p(H: np.ndarray, gamma: float, c: Optional[Constellation] = None) -> ProblemInstance:
    """Point-to-point precoding ``max I(P^H H^H H P)`` s.t. ``tr(P^H P) <= gamma``.

    With ``c = None`` the inputs are Gaussian and the objective is
    ``log2 det(I + W)``. Otherwise it is ``log2 M - gfixed(W)``, the fixed
    channel pairwise approximation of the finite-alphabet rate.
    """
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    A = _gram(H)
    n = A.shape[0]
    if c is None:
        terms = [(-1.0, CompositeQMF(log2det_function(n), A))]
    else:
        table = difference_table(c, n)
        terms = [
            (1.0, _constant(n, n, float(np.log2(table.M)))),
            (-1.0, CompositeQMF(fixed_channel_function(table), A)),
        ]
    qset = QuadraticConstraintSet([QuadraticConstraint(np.eye(n), gamma)])
    return ProblemInstance(GeneralizedQMF(terms, label="p2p"), [], qset, (n, n))


def build_wiretap(w: WiretapConfig) -> ProblemInstance:
    """Secrecy rate ``I_r - I_e`` with both channels divided by the noise deviation."""
    Ar = _gram(w.H_r) / w.noise_var
    Ae = _gram(w.H_e) / w.noise_var
    n = Ar.shape[0]
    if Ae.shape != Ar.shape:
        raise ValueError("H_r and H_e must have the same number of columns")
    if w.constellation is None:
        g = log2det_function(n)
    else:
        g = fixed_channel_function(difference_table(w.constellation, n))
    terms = [(1.0, CompositeQMF(g, Ae)), (-1.0, CompositeQMF(g, Ar))]
    qset = QuadraticConstraintSet([QuadraticConstraint(np.eye(n), w.power)])
    return ProblemInstance(GeneralizedQMF(terms, label="wiretap"), [], qset, (n, n))


def _feasible_set(cfg: CRNetworkConfig, scales: Optional[Sequence[float]] = None) -> QuadraticConstraintSet:
    n = cfg.tx_antennas
    cons = [QuadraticConstraint(np.eye(n), cfg.power_budget)]
    for k, (st, gk) in enumerate(zip(cfg.pr_stats, cfg.interference_budgets)):
        s = 1.0 if scales is None else scales[k]
        cons.append(QuadraticConstraint(st.transmit_corr, gk, s))
    return QuadraticConstraintSet(cons)


def build_multicast(cfg: CRNetworkConfig) -> ScenarioPieces:
    """Grid ``f_ij(P) = g(P^H Theta_gj P; N_E) - g(P^H Theta_hi P; N_R)`` and the feasible set."""
    n = cfg.tx_antennas
    table = difference_table(cfg.constellation, n)
    grid = []
    for i, h in enumerate(cfg.sr_stats):
        row = []
        gh = CompositeQMF(approx_function(table, h.rx_antennas), h.transmit_corr)
        for j, e in enumerate(cfg.ed_stats):
            ge = CompositeQMF(approx_function(table, e.rx_antennas), e.transmit_corr)
            row.append(GeneralizedQMF([(1.0, ge), (-1.0, gh)], label=f"f{i}{j}"))
        grid.append(row)
    return ScenarioPieces(grid, _feasible_set(cfg), (n, n))


def build_multicast_doubly_correlated(cfg: CRNetworkConfig) -> ScenarioPieces:
    """Multicast grid with receive correlation.

    Each pairwise term uses the receive-correlation eigenvalues of its link.
    The interference constraint of primary receiver ``k`` becomes
    ``(tr(Phi_fk) / N_P) tr(P^H Theta_fk P) <= gamma_k``, which is the plain
    constraint when ``Phi_fk = I``.
    """
    n = cfg.tx_antennas
    table = difference_table(cfg.constellation, n)
    grid = []
    for i, h in enumerate(cfg.sr_stats):
        gh = CompositeQMF(approx_bar_function(table, h.receive_eigenvalues()), h.transmit_corr)
        row = []
        for j, e in enumerate(cfg.ed_stats):
            ge = CompositeQMF(approx_bar_function(table, e.receive_eigenvalues()), e.transmit_corr)
            row.append(GeneralizedQMF([(1.0, ge), (-1.0, gh)], label=f"f{i}{j}"))
        grid.append(row)
    scales = [float(np.sum(st.receive_eigenvalues())) / st.rx_antennas for st in cfg.pr_stats]
    return ScenarioPieces(grid, _feasible_set(cfg, scales), (n, n))


def _stacked_set(cfg: CRNetworkConfig) -> QuadraticConstraintSet:
    return _feasible_set(cfg)


def build_broadcast(cfg: CRNetworkConfig) -> ScenarioPieces:
    """Per-user secrecy grid for the stacked precoder ``P = [P_1 ... P_I]``.

    ``f_ij = [g_i(W_hi) - g(W_hi)] - [g_i(W_gj) - g(W_gj)]`` with
    ``W = P^H Theta P`` of size ``N_T I``.
    """
    n = cfg.tx_antennas
    users = cfg.users
    r = n * users
    c = cfg.constellation
    table = difference_table(c, r)
    grid = []
    for i, h in enumerate(cfg.sr_stats):
        g_h = approx_function(table, h.rx_antennas)
        gi_h = user_function(c, n, users, i, h.rx_antennas)
        row = []
        for j, e in enumerate(cfg.ed_stats):
            g_e = approx_function(table, e.rx_antennas)
            gi_e = user_function(c, n, users, i, e.rx_antennas)
            terms = [
                (1.0, CompositeQMF(gi_h, h.transmit_corr)),
                (-1.0, CompositeQMF(g_h, h.transmit_corr)),
                (-1.0, CompositeQMF(gi_e, e.transmit_corr)),
                (1.0, CompositeQMF(g_e, e.transmit_corr)),
            ]
            row.append(GeneralizedQMF(terms, label=f"f{i}{j}"))
        grid.append(row)
    return ScenarioPieces(grid, _stacked_set(cfg), (n, r))


# ---------------------------------------------------------------------------
# Starting points
# ---------------------------------------------------------------------------


def initial_precoder(
    qset: QuadraticConstraintSet,
    shape: tuple,
    seed: Optional[int] = None,
    slack: float = 0.1,
) -> np.ndarray:
    """Scaled identity blocks ``c [I ... I]`` leaving ``slack`` on every constraint.

    With a ``seed`` a complex Gaussian perturbation of the same Frobenius
    norm is added before scaling.
    """
    n, r = shape
    base = np.tile(np.eye(n, dtype=complex), (1, r // n)) if r % n == 0 else np.eye(n, r, dtype=complex)
    if seed is not None:
        rng = np.random.default_rng(seed)
        Z = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        base = base + Z * (np.linalg.norm(base) / np.linalg.norm(Z))
    return _fit(qset, base, slack)


def random_precoder(qset: QuadraticConstraintSet, shape: tuple, seed: int, slack: float = 0.1) -> np.ndarray:
    """Complex Gaussian matrix scaled so every constraint keeps ``slack``."""
    rng = np.random.default_rng(seed)
    Z = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    return _fit(qset, Z, slack)


def _fit(qset: QuadraticConstraintSet, X: np.ndarray, slack: float) -> np.ndarray:
    if not 0.0 <= slack < 1.0:
        raise ValueError("slack must lie in [0, 1)")
    t = qset.max_feasible_scale(X)
    if not np.isfinite(t):
        return X
    return X * t * np.sqrt(1.0 - slack)


# ---------------------------------------------------------------------------
# Objective evaluation
# ---------------------------------------------------------------------------


def grid_minimum(grid, X: np.ndarray) -> float:
    """``min_ij f_ij(X)`` over a multicast grid."""
    return float(min(eval_gqmf(f, X) for row in grid for f in row))


def broadcast_objective(grid, X: np.ndarray) -> float:
    """``sum_i max(0, min_j f_ij(X))``."""
    return float(sum(max(0.0, min(eval_gqmf(f, X) for f in row)) for row in grid))


def multicast_rate_mc(cfg: CRNetworkConfig, P: np.ndarray, mc: MCConfig) -> float:
    """Clipped multicast secrecy rate ``[min_ij I_hi - I_gj]^+`` by Monte Carlo.

    Every link uses the same per-draw seeds, so links with equal statistics
    give identical estimates.
    """
    c = cfg.constellation
    ih = [avg_fa_mi_mc(s, P, c, mc) for s in cfg.sr_stats]
    ig = [avg_fa_mi_mc(s, P, c, mc) for s in cfg.ed_stats]
    return max(0.0, min(a - b for a in ih for b in ig))


def user_rates_mc(cfg: CRNetworkConfig, P: np.ndarray, mc: MCConfig) -> list:
    """Per-user clipped broadcast secrecy rates by Monte Carlo."""
    n, users, c = cfg.tx_antennas, cfg.users, cfg.constellation
    rates = []
    for i, h in enumerate(cfg.sr_stats):
        mask = block_mask(n, users, i)
        ih = avg_fa_mi_mc(h, P, c, mc, mask=mask)
        ig = [avg_fa_mi_mc(e, P, c, mc, mask=mask) for e in cfg.ed_stats]
        rates.append(max(0.0, min(ih - b for b in ig)))
    return rates


def broadcast_rate_mc(cfg: CRNetworkConfig, P: np.ndarray, mc: MCConfig) -> float:
    """Secrecy sum rate ``sum_i [min_j I(x_i; y_i) - I(x_i; z_j)]^+`` by Monte Carlo."""
    return float(sum(user_rates_mc(cfg, P, mc)))


def block_powers(P: np.ndarray, block: int) -> np.ndarray:
    """Share of ``||P||_F^2`` carried by each column block of size ``block``."""
    P = np.asarray(P)
    parts = np.array([np.linalg.norm(P[:, k : k + block]) ** 2 for k in range(0, P.shape[1], block)])
    total = parts.sum()
    return parts / total if total > 0 else parts


# ---------------------------------------------------------------------------
# Baselines
# ---------------------------------------------------------------------------


def waterfilling_powers(gains: np.ndarray, gamma: float) -> np.ndarray:
    """Water levels ``max(0, mu - 1/g_k)`` summing to ``gamma`` for gains sorted descending."""
    gains = np.asarray(gains, dtype=float)
    p = np.zeros_like(gains)
    active = np.flatnonzero(gains > 1e-12 * max(1.0, gains.max(initial=0.0)))
    for k in range(active.size, 0, -1):
        inv = 1.0 / gains[active[:k]]
        mu = (gamma + inv.sum()) / k
        if mu - inv[-1] >= 0.0:
            p[active[:k]] = mu - inv
            break
    return p


def waterfilling(H: np.ndarray, gamma: float) -> np.ndarray:
    """Capacity-achieving Gaussian precoder ``U diag(sqrt(p))`` over ``tr(P^H P) <= gamma``."""
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    lam, U = hermitian_eig(_gram(H))
    p = waterfilling_powers(lam, gamma)
    return U * np.sqrt(p)[None, :]


@dataclass
class GaussianBaseline:
    """Result of a Gaussian-input baseline design."""

    P: np.ndarray
    value: float
    values: list = field(default_factory=list)
    iterations: int = 0
    status: str = "converged"
    Q: Optional[np.ndarray] = None


def _draws(stats: ChannelStats, count: int, seed: int) -> list:
    return [_draw_channel(stats, np.random.default_rng([seed, k])) for k in range(count)]


def _avg_logdet(Hs: Sequence[np.ndarray], Q: np.ndarray) -> tuple:
    """Sample mean of ``log2 det(I + H Q H^H)`` and its gradient in ``Q``."""
    v = 0.0
    G = np.zeros_like(Q, dtype=complex)
    for H in Hs:
        M = np.eye(H.shape[0]) + H @ Q @ H.conj().T
        sign, ld = np.linalg.slogdet(M)
        v += ld / LN2
        G += H.conj().T @ np.linalg.solve(M, H) / LN2
    return v / len(Hs), G / len(Hs)


def gaussian_precoding_mc(
    cfg: CRNetworkConfig,
    draws: int = 100,
    seed: int = 0,
    tol: float = 1e-6,
    max_iter: int = 50,
) -> GaussianBaseline:
    """Convex-concave procedure for the Gaussian-input multicast design in ``Q = P P^H``.

    Maximizes ``min_ij E log2 det(I + H_i Q H_i^H) - E log2 det(I + G_j Q G_j^H)``
    over ``Q >= 0`` with ``tr(Theta_fk Q) <= gamma_k``; the expectations are
    sample means over ``draws`` frozen channel realizations per link. Each
    step linearizes the eavesdropper terms at the current ``Q`` and solves
    the resulting concave program with cvxpy, so the true objective never
    decreases. Starts at ``Q = 0``.
    """
    import cvxpy as cp

    n = cfg.tx_antennas
    Hs = [_draws(s, draws, seed) for s in cfg.sr_stats]
    Gs = [_draws(s, draws, seed) for s in cfg.ed_stats]
    thetas = [np.eye(n)] + [s.transmit_corr for s in cfg.pr_stats]
    budgets = [cfg.power_budget] + list(cfg.interference_budgets)

    def objective(Q):
        a = [_avg_logdet(H, Q)[0] for H in Hs]
        b = [_avg_logdet(G, Q)[0] for G in Gs]
        return min(x - y for x in a for y in b)

    Qv = cp.Variable((n, n), hermitian=True)
    t = cp.Variable()
    rates = [sum(cp.log_det(np.eye(H.shape[0]) + H @ Qv @ H.conj().T) for H in Hlist) / (len(Hlist) * LN2) for Hlist in Hs]
    # eavesdropper terms enter through their tangent planes, refreshed per step
    lin_grad = [cp.Parameter((n, n), hermitian=True) for _ in Gs]
    lin_const = [cp.Parameter() for _ in Gs]
    cons = [Qv >> 0]
    cons += [cp.real(cp.trace(T @ Qv)) <= g for T, g in zip(thetas, budgets)]
    for Gb, b0 in zip(lin_grad, lin_const):
        lin = b0 + cp.real(cp.trace(Gb @ Qv))
        cons += [t <= a - lin for a in rates]
    prob = cp.Problem(cp.Maximize(t), cons)
    Q = np.zeros((n, n), dtype=complex)
    values = [objective(Q)]
    status = "iteration_cap"
    it = 0
    for it in range(1, max_iter + 1):
        for G, Gb, b0 in zip(Gs, lin_grad, lin_const):
            v, grad = _avg_logdet(G, Q)
            grad = 0.5 * (grad + grad.conj().T)
            Gb.value = grad
            b0.value = v - float(np.real(np.trace(grad @ Q)))
        try:
            prob.solve(solver=cp.CLARABEL)
        except cp.error.SolverError as exc:  # pragma: no cover - solver specific
            log.warning("CCP step failed: %s", exc)
            status = "failure"
            break
        if Qv.value is None:
            status = "failure"
            break
        Qn = 0.5 * (Qv.value + Qv.value.conj().T)
        w, U = np.linalg.eigh(Qn)
        Qn = (U * np.clip(w, 0.0, None)) @ U.conj().T
        # keep the iterate feasible after the PSD projection
        loads = [float(np.real(np.trace(T @ Qn))) for T in thetas]
        shrink = min([1.0] + [g / l for g, l in zip(budgets, loads) if l > g])
        Qn = Qn * shrink
        vn = objective(Qn)
        if vn < values[-1]:
            status = "stalled"
            break
        Q = Qn
        values.append(vn)
        if vn - values[-2] <= tol:
            status = "converged"
            break
    return GaussianBaseline(psd_sqrt(Q), values[-1], values, it, status, Q)


def build_gaussian_broadcast(cfg: CRNetworkConfig, draws: int = 20, seed: int = 0) -> ScenarioPieces:
    """Gaussian-input broadcast grid over frozen channel draws.

    For user ``i`` the rate at a receiver with draw ``H`` is
    ``log2 det(I + W) - log2 det(I + I_i W I_i)`` with ``W = P^H H^H H P``;
    both pieces are ``-log2 det`` composites (convex MNI).
    """
    n = cfg.tx_antennas
    users = cfg.users
    r = n * users
    g = log2det_function(r)
    gi = [masked(g, block_mask(n, users, i)) for i in range(users)]
    w = 1.0 / draws

    def link_terms(stats, i, sign):
        terms = []
        for H in _draws(stats, draws, seed):
            A = _gram(H)
            # rate = -g(W) + g_i(W)
            terms.append((-sign * w, CompositeQMF(g, A)))
            terms.append((sign * w, CompositeQMF(gi[i], A)))
        return terms

    grid = []
    for i, h in enumerate(cfg.sr_stats):
        hterms = link_terms(h, i, 1.0)
        row = []
        for j, e in enumerate(cfg.ed_stats):
            row.append(GeneralizedQMF(hterms + link_terms(e, i, -1.0), label=f"gauss_f{i}{j}"))
        grid.append(row)
    return ScenarioPieces(grid, _stacked_set(cfg), (n, r))


def gaussian_broadcast_baseline(
    cfg: CRNetworkConfig,
    x0: Optional[np.ndarray] = None,
    draws: int = 20,
    seed: int = 0,
    eps: float = 1e-4,
    max_outer: int = 100,
) -> tuple:
    """Gaussian-input broadcast design by the clipped sum-of-minima driver.

    Returns ``(trace, pieces)``.
    """
    pieces = build_gaussian_broadcast(cfg, draws, seed)
    if x0 is None:
        x0 = initial_precoder(pieces.qset, pieces.x_shape)
    trace: SolveTrace = solve_sum_secrecy(pieces.grid, pieces.qset, x0, eps, BetaSchedule(), max_outer)
    return trace, pieces
