import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gqmp.functions import CompositeQMF, DomainError, GeneralizedQMF, ProblemInstance, QuadraticConstraintSet, validate_function
from gqmp.algorithms import solve_gqmp
from gqmp.hermitian import HermitianError
from gqmp.mi import (
    ChannelStats,
    MCConfig,
    _draw_channel,
    _mi_given_noise,
    _noise,
    approx_bar_function,
    approx_function,
    avg_fa_mi_mc,
    block_mask,
    difference_table,
    exp_corr,
    fa_mi_mc,
    g_approx,
    g_fixed,
    g_i_approx,
    gaussian_mi,
    gbar_approx,
    grad_g_approx,
    make_constellation,
    mmse_grad_mi,
    mmse_matrix,
    sample_kronecker,
    user_function,
)
from gqmp.numerics import fd_complex_grad

from conftest import random_complex, random_psd

QPSK = make_constellation("QPSK")
BPSK = make_constellation("BPSK")
H_EX = np.array([[2.0, 1.0], [1.0, 1.0]])


def brute_g(W, N, c, dims, r=None, mask=None):
    """Direct double sum over joint symbols; independent of the difference table."""
    syms = np.array(list(itertools.product(c.points, repeat=dims)))
    d = np.ones(dims) if mask is None else np.asarray(mask, float)
    rr = np.ones(int(N)) if r is None else np.asarray(r, float)
    M = len(syms)
    total = 0.0
    for xm in syms:
        acc = 0.0
        for xn in syms:
            e = d * (xm - xn)
            q = float(np.real(e.conj() @ W @ e))
            acc += np.prod(1.0 / (1.0 + 0.5 * rr * q))
        total += np.log2(acc)
    return total / M


def brute_mc_mi(HP, c, noise):
    syms = np.array(list(itertools.product(c.points, repeat=HP.shape[1])))
    M = len(syms)
    acc = 0.0
    for xm in syms:
        for n in noise:
            d = np.array([np.linalg.norm(HP @ (xm - xk) + n) ** 2 - np.linalg.norm(n) ** 2 for xk in syms])
            acc += np.log2(M) - np.log2(np.sum(np.exp(-d)))
    return acc / (M * len(noise))


class TestConstellations:
    def test_bpsk(self):
        assert np.array_equal(BPSK.points, [1, -1])

    def test_qpsk(self):
        assert np.allclose(np.abs(QPSK.points), 1.0)
        assert np.allclose(np.abs(QPSK.points.real), 1 / np.sqrt(2))

    def test_qam16(self):
        c = make_constellation("QAM16")
        assert c.order == 16
        assert np.max(np.abs(c.points.real)) == pytest.approx(3 / np.sqrt(10))
        assert np.min(np.abs(c.points.real)) == pytest.approx(1 / np.sqrt(10))

    @pytest.mark.parametrize("name", ["BPSK", "QPSK", "PSK8", "QAM16"])
    def test_unit_energy_distinct(self, name):
        c = make_constellation(name)
        assert abs(np.mean(np.abs(c.points) ** 2) - 1.0) < 1e-12
        assert len(set(np.round(c.points, 12))) == c.order

    def test_unknown(self):
        with pytest.raises(ValueError):
            make_constellation("QAM64")


class TestDifferenceTable:
    def test_structure(self):
        t = difference_table(QPSK, 2)
        assert t.M == 16
        full = t.vectors
        assert np.allclose(t.unique[t.index], full)
        assert np.all(np.abs(full[np.arange(16), np.arange(16)]) == 0)
        assert np.allclose(full, -full.transpose(1, 0, 2))
        syms = t.symbols
        assert np.allclose(full[3, 7], syms[3] - syms[7])

    def test_block_mask(self):
        assert block_mask(2, 2, 1).tolist() == [1, 1, 0, 0]
        with pytest.raises(ValueError):
            block_mask(2, 2, 2)


class TestGaussianMI:
    def test_examples(self):
        assert gaussian_mi(np.zeros((2, 2))) == 0.0
        assert gaussian_mi(np.eye(2)) == pytest.approx(2.0, abs=1e-14)
        assert gaussian_mi(np.diag([1.0, 3.0])) == pytest.approx(3.0, abs=1e-14)

    def test_indefinite(self):
        with pytest.raises(HermitianError):
            gaussian_mi(np.diag([1.0, -0.5]))


class TestApproximations:
    def test_zero(self):
        t = difference_table(QPSK, 2)
        assert g_approx(np.zeros((2, 2)), 2, t) == pytest.approx(4.0, abs=1e-14)
        assert gbar_approx(np.zeros((2, 2)), [0.3, 1.2], t) == pytest.approx(4.0, abs=1e-14)
        assert g_i_approx(np.zeros((2, 2)), 2, t, [1, 0]) == pytest.approx(4.0, abs=1e-14)

    @settings(max_examples=15)
    @given(st.integers(0, 2**31 - 1), st.integers(1, 3))
    def test_matches_brute_force(self, seed, N):
        rng = np.random.default_rng(seed)
        W = random_psd(rng, 2)
        t = difference_table(QPSK, 2)
        assert g_approx(W, N, t) == pytest.approx(brute_g(W, N, QPSK, 2), abs=1e-12)
        r = rng.uniform(0, 2, size=3)
        assert gbar_approx(W, r, t) == pytest.approx(brute_g(W, 3, QPSK, 2, r=r), abs=1e-12)

    def test_strictly_decreasing_scan(self):
        t = difference_table(QPSK, 2)
        vals = [g_approx(w * np.eye(2), 2, t) for w in np.linspace(0, 20, 60)]
        assert np.all(np.diff(vals) < 0)

    def test_gbar_reductions(self, rng):
        t = difference_table(QPSK, 2)
        W = random_psd(rng, 2)
        assert gbar_approx(W, [1.0, 1.0], t) == pytest.approx(g_approx(W, 2, t), abs=1e-13)
        assert gbar_approx(W, [0.0, 1.0, 1.0], t) == pytest.approx(g_approx(W, 2, t), abs=1e-13)

    def test_domain_error(self):
        t = difference_table(BPSK, 1)
        with pytest.raises(DomainError):
            g_approx(-np.eye(1), 1, t)

    def test_n_below_one(self):
        with pytest.raises(ValueError):
            g_approx(np.eye(2), 0.5, difference_table(QPSK, 2))

    def test_gradient_at_zero(self):
        t = difference_table(QPSK, 2)
        N, M = 2, t.M
        full = t.vectors.reshape(-1, 2)
        expected = -(N / (2 * M * M * np.log(2))) * np.einsum("ui,uj->ij", full, full.conj())
        G = grad_g_approx(np.zeros((2, 2)), N, t)
        assert np.allclose(G, expected, atol=1e-13)
        assert np.linalg.eigvalsh(G)[-1] <= 1e-10

    @settings(max_examples=15)
    @given(st.integers(0, 2**31 - 1))
    def test_gradient_fd_and_sign(self, seed):
        rng = np.random.default_rng(seed)
        t = difference_table(QPSK, 2)
        A = random_psd(rng, 2)
        X = random_complex(rng, (2, 2), 0.5)
        G = grad_g_approx(X.conj().T @ A @ X, 2, t)
        assert np.linalg.eigvalsh(G)[-1] <= 1e-10
        chained = A @ X @ G
        fd = fd_complex_grad(lambda Y: g_approx(Y.conj().T @ A @ Y, 2, t), X)
        assert np.linalg.norm(chained - fd) <= 1e-5 * max(1.0, np.linalg.norm(fd))

    def test_g_i_single_user_constant(self, rng):
        t = difference_table(QPSK, 2)
        W = random_psd(rng, 2)
        assert g_i_approx(W, 2, t, [0, 0]) == pytest.approx(4.0, abs=1e-14)

    def test_g_i_matches_brute_force_and_reduced(self, rng):
        t = difference_table(BPSK, 4)
        W = random_psd(rng, 4)
        mask = block_mask(2, 2, 0)
        direct = g_i_approx(W, 2, t, mask)
        assert direct == pytest.approx(brute_g(W, 2, BPSK, 4, mask=mask), abs=1e-12)
        assert user_function(BPSK, 2, 2, 0, 2).value(W) == pytest.approx(direct, abs=1e-12)

    def test_broadcast_rate_zero_at_origin(self):
        t = difference_table(BPSK, 4)
        Z = np.zeros((4, 4))
        assert g_i_approx(Z, 2, t, block_mask(2, 2, 1)) - g_approx(Z, 2, t) == 0.0

    def test_fixed_channel_brute(self, rng):
        t = difference_table(QPSK, 2)
        W = random_psd(rng, 2)
        syms = t.symbols
        ref = np.mean([np.log2(sum(np.exp(-0.5 * np.real((a - b).conj() @ W @ (a - b))) for b in syms)) for a in syms])
        assert g_fixed(W, t) == pytest.approx(ref, abs=1e-12)

    @pytest.mark.parametrize("which", ["g", "gbar"])
    def test_convex_mni_200_trials(self, which):
        t = difference_table(QPSK, 2)
        g = approx_function(t, 2) if which == "g" else approx_bar_function(t, [1.7, 0.3])
        rep = validate_function(g, trials=200, seed=7, scale=3.0)
        assert rep.convexity_violations == 0 and rep.monotonicity_violations == 0

    def test_saturation(self):
        t = difference_table(QPSK, 2)
        assert 4.0 - g_approx(1e-9 * np.eye(2), 2, t) < 1e-8
        assert g_approx(1e6 * np.eye(2), 2, t) < 1e-6


class TestMonteCarlo:
    def test_zero_precoder(self):
        assert fa_mi_mc(H_EX, np.zeros((2, 2)), QPSK, MCConfig(50, 1, 0)) == 0.0
        assert avg_fa_mi_mc(ChannelStats(np.eye(2), 2), np.zeros((2, 2)), QPSK, MCConfig(20, 5, 0)) == 0.0

    def test_saturation(self):
        v = fa_mi_mc(100 * np.eye(2), np.eye(2), QPSK, MCConfig(500, 1, 0))
        assert abs(v - 4.0) < 0.02 and v <= 4.0

    def test_matches_brute_force(self, rng):
        HP = random_complex(rng, (2, 2), 0.7)
        mc = MCConfig(7, 1, 3)
        noise = _noise(np.random.default_rng(3), 7, 2)
        assert fa_mi_mc(HP, np.eye(2), QPSK, mc) == pytest.approx(brute_mc_mi(HP, QPSK, noise), abs=1e-12)

    def test_below_gaussian(self):
        from gqmp.scenarios import waterfilling
        P = waterfilling(H_EX, 4.0)
        W = P.conj().T @ H_EX.T @ H_EX @ P
        assert fa_mi_mc(H_EX, P, QPSK, MCConfig(500, 1, 1)) < gaussian_mi(W)

    def test_deterministic(self, rng):
        P = random_complex(rng, (2, 2))
        mc = MCConfig(100, 1, 42)
        assert fa_mi_mc(H_EX, P, QPSK, mc) == fa_mi_mc(H_EX, P, QPSK, mc)

    def test_masked_rate_nonnegative(self, rng):
        P = random_complex(rng, (2, 4))
        v = fa_mi_mc(random_complex(rng, (2, 2)), P, BPSK, MCConfig(50, 1, 0), mask=block_mask(2, 2, 0))
        assert v >= -1e-12

    def test_single_draw_average(self, rng):
        stats = ChannelStats(np.eye(2), 2)
        P = random_complex(rng, (2, 2), 0.5)
        mc = MCConfig(60, 1, 9)
        g = np.random.default_rng([9, 0])
        H = _draw_channel(stats, g)
        noise = _noise(g, 60, 2)
        assert avg_fa_mi_mc(stats, P, QPSK, mc) == _mi_given_noise(H @ P, difference_table(QPSK, 2), noise, None)

    def test_equal_stats_equal_estimates(self, rng):
        P = random_complex(rng, (2, 2), 0.5)
        mc = MCConfig(30, 10, 4)
        a = avg_fa_mi_mc(ChannelStats(exp_corr(0.85, 2), 2), P, QPSK, mc)
        b = avg_fa_mi_mc(ChannelStats(exp_corr(0.85, 2), 2), P, QPSK, mc)
        assert a == b

    def test_correlation_helps_with_statistical_csi(self):
        # optimized precoders at -5 dB, paired seeds
        t = difference_table(QPSK, 2)
        mc = MCConfig(200, 100, 3)
        p = 10 ** -0.5
        rates = {}
        for rho in (0.95, 0.0):
            Th = exp_corr(rho, 2)
            f = GeneralizedQMF([(-1.0, CompositeQMF(approx_function(t, 2), Th))])
            q = QuadraticConstraintSet([(np.eye(2), p)])
            X0 = np.sqrt(0.45 * p) * np.array([[1, 1j], [1, -1j]]) / np.sqrt(2)
            tr = solve_gqmp(ProblemInstance(f, [], q, (2, 2)), X0, eps=1e-7)
            rates[rho] = avg_fa_mi_mc(ChannelStats(Th, 2), tr.x, QPSK, mc)
        assert rates[0.95] > rates[0.0]

    def test_ordinal_fidelity(self):
        t = difference_table(QPSK, 2)
        mc = MCConfig(200, 100, 11)
        agree = 0
        for inst in range(20):
            rng = np.random.default_rng(1000 + inst)
            Th = random_psd(rng, 2)
            Th *= 2 / np.trace(Th).real
            stats = ChannelStats(Th, 2)
            approx, mcv = [], []
            for _ in range(5):
                P = random_complex(rng, (2, 2))
                P *= np.sqrt(rng.uniform(0.1, 10) / np.linalg.norm(P) ** 2)
                approx.append(-g_approx(P.conj().T @ Th @ P, 2, t))
                mcv.append(avg_fa_mi_mc(stats, P, QPSK, mc))
            agree += np.array_equal(np.argsort(approx), np.argsort(mcv))
        assert agree >= 18


class TestMMSE:
    def test_zero_precoder(self):
        Phi = mmse_matrix(H_EX, np.zeros((2, 2)), QPSK, MCConfig(50, 1, 0))
        assert np.allclose(Phi, np.eye(2), atol=1e-12)

    def test_high_snr(self):
        Phi = mmse_matrix(H_EX, 30 * np.eye(2), QPSK, MCConfig(200, 1, 0))
        assert np.linalg.norm(Phi) < 0.05

    def test_psd(self, rng):
        Phi = mmse_matrix(H_EX, random_complex(rng, (2, 2), 0.6), QPSK, MCConfig(100, 1, 0))
        assert np.linalg.eigvalsh(Phi)[0] >= -1e-8

    def test_gradient_matches_fd(self, rng):
        mc = MCConfig(200, 1, 5)
        P = random_complex(rng, (2, 2), 0.5)
        G = mmse_grad_mi(H_EX, P, QPSK, mc)
        fd = fd_complex_grad(lambda Y: fa_mi_mc(H_EX, Y, QPSK, mc), P)
        assert np.linalg.norm(G - fd) <= 5e-3 * np.linalg.norm(fd)

    def test_gradient_close_to_mmse_formula(self, rng):
        mc = MCConfig(2000, 1, 5)
        P = random_complex(rng, (2, 2), 0.5)
        G = mmse_grad_mi(H_EX, P, QPSK, mc)
        ref = H_EX.T @ H_EX @ P @ mmse_matrix(H_EX, P, QPSK, mc) / np.log(2)
        assert np.linalg.norm(G - ref) <= 0.05 * np.linalg.norm(ref)


class TestChannels:
    def test_exp_corr(self):
        assert np.array_equal(exp_corr(0.0, 3), np.eye(3))
        assert np.allclose(exp_corr(0.5, 2), [[1, 0.5], [0.5, 1]])
        assert np.allclose(np.linalg.eigvalsh(exp_corr(0.95, 2)), [0.05, 1.95])
        with pytest.raises(ValueError):
            exp_corr(1.0, 2)

    def test_identity_covariance(self):
        stats = ChannelStats(np.eye(2), 2)
        S = np.zeros((2, 2), dtype=complex)
        n = 10_000
        rng = np.random.default_rng(0)
        for _ in range(n // 2):
            H = _draw_channel(stats, rng)
            S += H.conj().T @ H
        assert np.linalg.norm(S / n - np.eye(2)) < 0.05

    def test_zero_theta(self):
        H = sample_kronecker(ChannelStats(np.zeros((2, 2)), 3), 0)
        assert np.all(H == 0) and H.shape == (3, 2)

    def test_moment_identity(self):
        Th = exp_corr(0.7, 2) * 1.3
        stats = ChannelStats(Th, 3)
        rng = np.random.default_rng(1)
        vals = []
        for _ in range(20000):
            H = _draw_channel(stats, rng)
            vals.append(np.real(np.trace(H.conj().T @ H)))
        assert abs(np.mean(vals) / (3 * np.trace(Th).real) - 1) < 0.02

    def test_receive_correlation(self):
        stats = ChannelStats(np.eye(2), 2, receive_corr=exp_corr(0.5, 2))
        assert np.allclose(stats.receive_eigenvalues(), [1.5, 0.5])
        assert sample_kronecker(stats, 3).shape == (2, 2)

    def test_deterministic_draws(self):
        stats = ChannelStats(exp_corr(0.3, 2), 2)
        assert np.array_equal(sample_kronecker(stats, 5), sample_kronecker(stats, 5))

    def test_invalid(self):
        with pytest.raises(ValueError):
            ChannelStats(np.eye(2), 0)
        with pytest.raises(ValueError):
            MCConfig(0, 1, 0)
