import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gqmp.algorithms import (
    BetaSchedule,
    InfeasibleStartError,
    best_of,
    enumerate_oracle,
    lambda_star,
    multistart,
    smoothed_min,
    solve_gqmp,
    solve_minrate,
    solve_sum_secrecy,
)
from gqmp.bounds import surrogate_gqmf
from gqmp.functions import (
    CompositeQMF,
    GeneralizedQMF,
    ProblemInstance,
    QuadraticConstraintSet,
    eval_gqmf,
    trace_affine,
)
from gqmp.scenarios import build_p2p, random_precoder
from gqmp.subsolver import kkt_residual

from conftest import random_complex
from toys import constant, gauss_rate, gauss_secrecy, toy_broadcast


def waterfilling_capacity(H, gamma):
    """Closed-form waterfilling capacity, water level by bisection."""
    lam = np.linalg.eigvalsh(H.conj().T @ H)
    lam = lam[lam > 1e-12]
    lo, hi = 0.0, gamma + np.sum(1.0 / lam)
    for _ in range(200):
        mu = 0.5 * (lo + hi)
        if np.sum(np.maximum(mu - 1.0 / lam, 0.0)) > gamma:
            hi = mu
        else:
            lo = mu
    p = np.maximum(lo - 1.0 / lam, 0.0)
    return float(np.sum(np.log2(1.0 + lam * p)))


def neg_norm_problem(n=2, r=2, budget=1.0):
    f = GeneralizedQMF([(1.0, CompositeQMF(trace_affine(r, -np.eye(r)), np.eye(n)))])
    return ProblemInstance(f, [], QuadraticConstraintSet([(np.eye(n), budget)]), (n, r))


class TestSolveGqmp:
    def test_negative_norm(self):
        tr = solve_gqmp(neg_norm_problem(), 0.4 * np.ones((2, 2)), eps=1e-8)
        assert tr.iterations <= 2
        assert np.linalg.norm(tr.x) < 1e-5
        assert tr.stop_reason == "tolerance"

    def test_p2p_gaussian_waterfilling(self):
        H = np.array([[2.0, 1.0], [1.0, 1.0]])
        p = build_p2p(H, 4.0)
        tr = solve_gqmp(p, 0.5 * np.eye(2), eps=1e-9)
        assert tr.value >= waterfilling_capacity(H, 4.0) - 1e-6
        assert tr.is_monotone()

    def test_infeasible_start(self):
        with pytest.raises(InfeasibleStartError):
            solve_gqmp(neg_norm_problem(), 5 * np.ones((2, 2)))

    def test_infeasible_inequality(self):
        p = neg_norm_problem()
        p2 = ProblemInstance(p.objective, [constant(-1.0)], p.feasible_set, (2, 2))
        with pytest.raises(InfeasibleStartError):
            solve_gqmp(p2, np.zeros((2, 2)))

    def test_trace_rows(self):
        tr = solve_gqmp(neg_norm_problem(), 0.4 * np.ones((2, 2)), eps=1e-8)
        rows = tr.rows(timing=False)
        assert rows[0][0] == 0 and np.isnan(rows[0][2])
        assert all(r[3] == 0.0 for r in rows)

    def test_terminal_change_below_eps(self, rng):
        H = random_complex(rng, (3, 3))
        tr = solve_gqmp(build_p2p(H, 2.0), 0.2 * np.ones((3, 3)), eps=1e-6)
        assert tr.stop_reason == "tolerance"
        assert abs(tr.values[-1] - tr.values[-2]) <= 1e-6

    def test_deterministic(self, rng):
        H = random_complex(rng, (2, 2))
        a = solve_gqmp(build_p2p(H, 3.0), 0.3 * np.ones((2, 2)), eps=1e-7)
        b = solve_gqmp(build_p2p(H, 3.0), 0.3 * np.ones((2, 2)), eps=1e-7)
        assert np.array_equal(a.values, b.values) and np.array_equal(a.x, b.x)


class TestMinrate:
    def test_single_function_matches_gqmp(self, rng):
        H = random_complex(rng, (2, 2))
        p = build_p2p(H, 2.0)
        X0 = 0.3 * np.ones((2, 2))
        a = solve_gqmp(p, X0, eps=1e-7)
        b = solve_minrate([p.objective], [], p.feasible_set, X0, beta=-5, eps=1e-7)
        assert np.array_equal(a.values, b.values)

    def test_smoothed_constants(self):
        assert smoothed_min([1.0, 2.0], -10) == pytest.approx(1 - np.log1p(np.exp(-10)) / 10, abs=1e-15)
        assert abs(smoothed_min([1.0, 2.0], -10) - 1.0) < np.log(2) / 10

    def test_constant_instance(self):
        qset = QuadraticConstraintSet([(np.eye(2), 1.0)])
        tr = solve_minrate([constant(1.0), constant(2.0)], [], qset, np.zeros((2, 2)), beta=-10)
        assert tr.value == pytest.approx(1.0 - np.log1p(np.exp(-10.0)) / 10.0, abs=1e-12)

    @given(st.floats(-5, 5), st.integers(1, 6), st.floats(0.5, 300))
    def test_equal_constants(self, c, L, b):
        assert smoothed_min([c] * L, -b) == pytest.approx(c - np.log(L) / b, abs=1e-12)

    @given(st.lists(st.floats(-10, 10), min_size=1, max_size=8), st.sampled_from([-5.0, -20.0, -100.0]))
    def test_smoothing_bound(self, vals, beta):
        s = smoothed_min(vals, beta)
        assert min(vals) - np.log(len(vals)) / abs(beta) - 1e-12 <= s <= min(vals) + 1e-12

    def test_positive_beta_rejected(self):
        qset = QuadraticConstraintSet([(np.eye(2), 1.0)])
        with pytest.raises(ValueError):
            solve_minrate([constant(1.0)], [], qset, np.zeros((2, 2)), beta=1.0)

    def test_two_links_bound_and_ascent(self, rng):
        fs = [gauss_rate(2, 2, random_complex(rng, (2, 2))) for _ in range(3)]
        qset = QuadraticConstraintSet([(np.eye(2), 2.0)])
        tr = solve_minrate(fs, [], qset, 0.3 * np.ones((2, 2)), beta=-5, eps=1e-7, beta_cap=100)
        assert tr.is_monotone()
        true_min = min(eval_gqmf(f, tr.x) for f in fs)
        assert abs(tr.value - true_min) < np.log(3) / abs(tr.beta)
        assert abs(tr.beta) == 100


class TestSumSecrecy:
    def test_lambda_star(self):
        assert lambda_star([0.5, -0.2]).tolist() == [1.0, 0.0]
        assert lambda_star([0.0]).tolist() == [1.0]

    def test_all_negative_returns_zero(self):
        qset = QuadraticConstraintSet([(np.eye(2), 1.0)])
        rows = [[constant(-1.0)], [constant(-0.5), constant(-2.0)]]
        X0 = 0.1 * np.ones((2, 2))
        tr = solve_sum_secrecy(rows, qset, X0)
        assert tr.value == 0.0 and np.array_equal(tr.x, X0)
        assert tr.lambdas.tolist() == [0.0, 0.0]

    @pytest.mark.parametrize("seed", [0, 1])
    def test_validity_against_enumeration(self, seed):
        rows, qset, x0 = toy_broadcast(seed, eaves=1)
        tr = solve_sum_secrecy(rows, qset, x0, eps=1e-6)
        starts = [x0] + [random_precoder(qset, x0.shape, s) for s in (1, 2)]
        en = enumerate_oracle(rows, qset, starts, eps=1e-6)
        assert tr.is_monotone()
        assert tr.value <= en.best_value + 1e-6
        # fixed point of the activity indicators
        mins = [min(eval_gqmf(f, tr.x) for f in row) for row in rows]
        assert np.array_equal(lambda_star(mins), tr.lambdas)


class TestEnumeration:
    def test_single_user(self, rng):
        fs = [gauss_rate(2, 2, random_complex(rng, (2, 2))) for _ in range(2)]
        qset = QuadraticConstraintSet([(np.eye(2), 1.0)])
        x0 = 0.3 * np.ones((2, 2))
        en = enumerate_oracle([fs], qset, x0, eps=1e-7)
        assert en.subproblems == 1 and en.best_subset == (0,)
        tr = solve_minrate(fs, [], qset, x0, beta=-5, eps=1e-7, beta_cap=200)
        assert en.traces[(0,)].values.tolist() == tr.values.tolist()

    def test_two_users_three_subsets(self):
        rows, qset, x0 = toy_broadcast(5, eaves=1)
        en = enumerate_oracle(rows, qset, x0, eps=1e-6)
        assert en.subproblems == 3
        assert set(en.subset_values) == {(0,), (1,), (0, 1)}

    def test_negative_user_excluded(self, rng):
        H, E = random_complex(rng, (2, 2)), 0.3 * random_complex(rng, (2, 2))
        good = gauss_secrecy(H, E, 2, 2)
        bad = gauss_secrecy(H, E, 2, 2, offset=100.0)
        qset = QuadraticConstraintSet([(np.eye(2), 2.0)])
        en = enumerate_oracle([[good], [bad]], qset, 0.3 * np.ones((2, 2)), eps=1e-6)
        assert en.best_subset == (0,)

    def test_too_many_users(self):
        qset = QuadraticConstraintSet([(np.eye(2), 1.0)])
        with pytest.raises(ValueError):
            enumerate_oracle([[constant(1.0)]] * 5, qset, np.zeros((2, 2)))


class TestProperties:
    def test_outer_stationarity_matches_surrogate(self, rng):
        H = random_complex(rng, (2, 2))
        p = build_p2p(H, 1.5)
        tr = solve_gqmp(p, 0.3 * np.ones((2, 2)), eps=1e-8)
        X = tr.x
        sur = surrogate_gqmf(p.objective, X)

        class Orig:
            def value_and_grad(self, Y):
                from gqmp.functions import value_and_grad_gqmf
                return value_and_grad_gqmf(p.objective, Y)

        r_orig = kkt_residual(Orig(), [], p.feasible_set, X, tr.multipliers)
        r_sur = kkt_residual(sur, [], p.feasible_set, X, tr.multipliers)
        assert abs(r_orig - r_sur) < 1e-6
        assert tr.stationarity <= 1e-4

    @pytest.mark.parametrize("seed", range(5))
    def test_random_instances_monotone(self, seed):
        rng = np.random.default_rng(seed)
        Hr, He = random_complex(rng, (3, 3)), 0.6 * random_complex(rng, (3, 3))
        f = gauss_secrecy(Hr, He, 3, 2)
        p = ProblemInstance(f, [], QuadraticConstraintSet([(np.eye(3), 3.0)]), (3, 2))
        tr = solve_gqmp(p, 0.2 * random_complex(rng, (3, 2)), eps=1e-7)
        assert tr.is_monotone(1e-8)
        assert tr.kkt_residual <= 1e-4

    def test_beta_schedule(self):
        s = BetaSchedule()
        assert s.grow(-5.0) == -10.0 and s.grow(-150.0) == -200.0
        assert s.at_cap(-200.0) and not s.at_cap(-5.0)
        with pytest.raises(ValueError):
            BetaSchedule(start=1.0)

    def test_multistart_best(self, rng):
        H = random_complex(rng, (2, 2))
        p = build_p2p(H, 2.0)
        starts = [(s, 0.2 * np.random.default_rng(s).standard_normal((2, 2)).astype(complex)) for s in range(3)]
        best, traces = multistart(lambda X0: solve_gqmp(p, X0, eps=1e-6), starts)
        assert best is best_of(traces)
        assert best.value == max(t.value for t in traces)
        assert [t.seed for t in traces] == [0, 1, 2]
