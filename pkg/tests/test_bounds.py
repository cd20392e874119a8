import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gqmp.bounds import lower_bound, surrogate_gqmf, tangency_check, upper_bound
from gqmp.functions import CompositeQMF, GeneralizedQMF, eval_gqmf, grad_gqmf, log2det_function, trace_affine
from gqmp.hermitian import psd_split
from gqmp.mi import approx_function, difference_table, make_constellation
from gqmp.scenarios import build_multicast, CRNetworkConfig, initial_precoder, build_wiretap, WiretapConfig
from gqmp.mi import ChannelStats, exp_corr

from conftest import random_complex, random_hermitian, random_psd


def _tr(M):
    return float(np.real(np.trace(M)))


def _mni(rng, n=3, r=2):
    return CompositeQMF(log2det_function(r), random_hermitian(rng, n, scale=0.4))


class TestLowerBound:
    def test_linear_g_psd_a_is_exact_linearization(self):
        # 2x2 integer data: l(X) = tr(X^H A X0 + X0^H A X - X0^H A X0) - c
        A = np.array([[2.0, 1.0], [1.0, 2.0]])
        X0 = np.array([[1.0, 2.0], [0.0, -1.0]])
        c = 3.0
        comp = CompositeQMF(trace_affine(2, offset=-c), A)
        lb = lower_bound(comp, X0)
        X = np.array([[1.0, -1.0], [2.0, 1.0]])
        expected = _tr(X.T @ A @ X0 + X0.T @ A @ X - X0.T @ A @ X0) - c
        assert lb.value(X) == pytest.approx(expected, abs=1e-12)
        assert lb.value(X0) == pytest.approx(comp.value(X0), abs=1e-12)

    def test_equality_at_anchor(self, rng):
        comp = _mni(rng)
        X0 = random_complex(rng, (3, 2), 0.3)
        assert lower_bound(comp, X0).value(X0) == pytest.approx(comp.value(X0), abs=1e-12)

    def test_sandwich_random_mni(self, rng):
        comp = _mni(rng)
        X0 = random_complex(rng, (3, 2), 0.3)
        lb = lower_bound(comp, X0)
        checked = 0
        for _ in range(100):
            X = X0 + random_complex(rng, (3, 2), 0.2)
            try:
                fv = comp.value(X)
            except ArithmeticError:
                continue
            assert lb.value(X) <= fv + 1e-9
            checked += 1
        assert checked > 50

    def test_gradient_matches(self, rng):
        comp = _mni(rng)
        X0 = random_complex(rng, (3, 2), 0.3)
        assert np.allclose(lower_bound(comp, X0).grad(X0), comp.grad(X0), atol=1e-10)

    def test_nsd_a_mnd_collapses_to_quadratic(self, rng):
        # A <= 0 and MND linear g: the quadratic part A^- = A is kept, so l = f.
        A = -random_psd(rng, 3)
        comp = CompositeQMF(trace_affine(2), A)
        lb = lower_bound(comp, random_complex(rng, (3, 2)))
        X = random_complex(rng, (3, 2))
        assert lb.value(X) == pytest.approx(comp.value(X), rel=1e-12)


class TestUpperBound:
    def test_equality_at_anchor(self, rng):
        comp = _mni(rng)
        X0 = random_complex(rng, (3, 2), 0.3)
        assert upper_bound(comp, X0).value(X0) == pytest.approx(comp.value(X0), abs=1e-12)

    def test_psd_a_mnd_is_identity(self, rng):
        A = random_psd(rng, 3)
        g = log2det_function(2, negate=False)  # only used as an MND value oracle
        comp = CompositeQMF(g, A)
        ub = upper_bound(comp, random_complex(rng, (3, 2)))
        X = random_complex(rng, (3, 2))
        assert ub.value(X) == pytest.approx(comp.value(X), rel=1e-12)

    def test_sandwich_random_mni(self, rng):
        comp = _mni(rng)
        X0 = random_complex(rng, (3, 2), 0.3)
        ub = upper_bound(comp, X0)
        checked = 0
        for _ in range(100):
            X = X0 + random_complex(rng, (3, 2), 0.2)
            try:
                uv, fv = ub.value(X), comp.value(X)
            except ArithmeticError:
                continue
            assert uv >= fv - 1e-9
            checked += 1
        assert checked > 50

    def test_gradient_matches(self, rng):
        comp = _mni(rng)
        X0 = random_complex(rng, (3, 2), 0.3)
        assert np.allclose(upper_bound(comp, X0).grad(X0), comp.grad(X0), atol=1e-10)

    def test_analytic_hessian_matches_fd(self, rng):
        table = difference_table(make_constellation("QPSK"), 2)
        comp = CompositeQMF(approx_function(table, 2), random_psd(rng, 2))
        X0 = random_complex(rng, (2, 2), 0.4)
        ub = upper_bound(comp, X0)
        X = X0 + random_complex(rng, (2, 2), 0.05)
        H = ub.real_hessian(X)
        H_fd = super(type(ub), ub).real_hessian(X)
        assert np.allclose(H, H_fd, atol=1e-5 * max(1.0, np.abs(H).max()))


class TestSurrogate:
    def test_linear_terms_affine_minorant(self, rng):
        A = random_psd(rng, 3)
        f = GeneralizedQMF([(2.0, CompositeQMF(trace_affine(2, offset=1.0), A))])
        X0 = random_complex(rng, (3, 2))
        s = surrogate_gqmf(f, X0)
        assert s.value(X0) == pytest.approx(eval_gqmf(f, X0), abs=1e-12)
        X1, X2 = random_complex(rng, (3, 2)), random_complex(rng, (3, 2))
        # affine: midpoint value is the average
        assert s.value(0.5 * (X1 + X2)) == pytest.approx(0.5 * (s.value(X1) + s.value(X2)), abs=1e-9)

    def test_wiretap_structure_and_tangency(self, rng):
        table = difference_table(make_constellation("QPSK"), 2)
        g = approx_function(table, 2)
        ce = CompositeQMF(g, random_psd(rng, 2))
        cr = CompositeQMF(g, random_psd(rng, 2))
        f = GeneralizedQMF([(1.0, ce), (-1.0, cr)])
        for _ in range(5):
            X0 = random_complex(rng, (2, 2), 0.5)
            s = surrogate_gqmf(f, X0)
            X = X0 + random_complex(rng, (2, 2), 0.1)
            manual = lower_bound(ce, X0).value(X) - upper_bound(cr, X0).value(X)
            assert s.value(X) == pytest.approx(manual, abs=1e-12)
            assert abs(s.value(X0) - eval_gqmf(f, X0)) < 1e-9

    def test_zero_anchor_quadratic_trace(self, rng):
        A = random_hermitian(rng, 3)
        f = GeneralizedQMF([(1.0, CompositeQMF(trace_affine(2, offset=0.5), A))])
        s = surrogate_gqmf(f, np.zeros((3, 2)))
        X = random_complex(rng, (3, 2))
        # at X0 = 0 the linearized part vanishes, leaving f(0) + tr(X^H A^- X)
        expected = 0.5 + _tr(X.conj().T @ psd_split(A).negative_part @ X)
        assert s.value(X) == pytest.approx(expected, abs=1e-10)

    def test_zero_weights_dropped(self, rng):
        c = _mni(rng)
        f = GeneralizedQMF([(0.0, c), (1.0, c)])
        assert len(surrogate_gqmf(f, random_complex(rng, (3, 2), 0.2)).terms) == 1

    @given(st.integers(0, 2**31 - 1))
    def test_concavity_and_sandwich(self, seed):
        rng = np.random.default_rng(seed)
        table = difference_table(make_constellation("BPSK"), 2)
        g = approx_function(table, 2)
        f = GeneralizedQMF([
            (1.0, CompositeQMF(g, random_psd(rng, 2))),
            (-0.8, CompositeQMF(g, random_psd(rng, 2))),
            (0.5, CompositeQMF(log2det_function(2), random_psd(rng, 2))),
        ])
        X0 = random_complex(rng, (2, 2), 0.3)
        s = surrogate_gqmf(f, X0)
        X1 = X0 + random_complex(rng, (2, 2), 0.2)
        X2 = X0 + random_complex(rng, (2, 2), 0.2)
        th = float(rng.uniform(0.05, 0.95))
        try:
            mid = s.value(th * X1 + (1 - th) * X2)
            v1, v2 = s.value(X1), s.value(X2)
            f1 = eval_gqmf(f, X1)
        except ArithmeticError:
            return
        assert mid >= th * v1 + (1 - th) * v2 - 1e-8
        assert v1 <= f1 + 1e-9

    def test_surrogate_hessian_is_nsd(self, rng):
        table = difference_table(make_constellation("BPSK"), 2)
        g = approx_function(table, 2)
        f = GeneralizedQMF([(1.0, CompositeQMF(g, random_psd(rng, 2))), (-1.0, CompositeQMF(g, random_psd(rng, 2)))])
        X0 = random_complex(rng, (2, 2), 0.3)
        H = surrogate_gqmf(f, X0).real_hessian(X0 + random_complex(rng, (2, 2), 0.1))
        assert np.linalg.eigvalsh(0.5 * (H + H.T))[-1] <= 1e-9 * max(1.0, np.abs(H).max())


class TestTangencyCheck:
    def test_any_instance(self, rng):
        f = GeneralizedQMF([(1.0, _mni(rng)), (-1.0, _mni(rng))])
        res = tangency_check(f, random_complex(rng, (3, 2), 0.2), samples=50, seed=1)
        assert res["value_gap_at_anchor"] < 1e-9
        assert res["grad_gap_at_anchor"] < 1e-6

    def test_multicast_sandwich(self):
        c = make_constellation("QPSK")
        cfg = CRNetworkConfig(
            [ChannelStats(exp_corr(0.9, 2), 2), ChannelStats(exp_corr(0.6, 2), 2)],
            [ChannelStats(exp_corr(0.3, 2), 2)],
            [ChannelStats(exp_corr(0.5, 2), 2)],
            10.0, [1.0], c,
        )
        pc = build_multicast(cfg)
        X0 = initial_precoder(pc.qset, pc.x_shape, seed=3)
        for f in pc.flat():
            res = tangency_check(f, X0, samples=200, seed=5)
            assert res["value_gap_at_anchor"] < 1e-9
            assert res["grad_gap_at_anchor"] < 1e-6
            assert res["max_sandwich_violation"] < 1e-9

    def test_wiretap_sandwich(self, rng):
        cfg = WiretapConfig(random_complex(rng, (2, 2)), random_complex(rng, (2, 2)), 1.0, 5.0, make_constellation("QPSK"))
        p = build_wiretap(cfg)
        res = tangency_check(p.objective, random_complex(rng, (2, 2), 0.5), samples=200, seed=0)
        assert res["max_sandwich_violation"] < 1e-9

    def test_samples_positive(self, rng):
        f = GeneralizedQMF([(1.0, _mni(rng))])
        with pytest.raises(ValueError):
            tangency_check(f, np.zeros((3, 2)), samples=0)
