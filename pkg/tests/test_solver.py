import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import dblquad

from conftest import solved, toy_scenario
from stmatch.domain import TwoPieceLinear
from stmatch.scenarios import random_scenario
from stmatch.solver import (
    SolveOptions,
    mass_balance,
    smooth_plus_max,
    solve_stbd,
    spatial_term,
    stbd_objective,
    stbd_smoothed,
    temporal_term,
)


def small(seed=0, n=2, m=2, res=6, **kw):
    return random_scenario(seed, n, m, resolution=res, **kw)


def random_eta(sc, rng, spread=1.0):
    return rng.normal(0.0, spread * sc.cost_scale, (sc.n_stations, sc.n_types))


class TestSmoothPlusMax:
    def test_softplus_at_zero(self):
        assert smooth_plus_max([0.0], 1.0) == pytest.approx(math.log(2))

    def test_two_terms(self):
        expected = 0.5 * math.log(1 + math.exp(6) + math.exp(2))
        assert smooth_plus_max([3.0, 1.0], 0.5) == pytest.approx(expected, rel=1e-12)
        assert smooth_plus_max([3.0, 1.0], 0.5) == pytest.approx(3.0103, abs=5e-5)

    @given(st.lists(st.floats(-50, 50), min_size=1, max_size=6), st.floats(1e-3, 10))
    def test_bounds(self, a, eps):
        true = max(max(a), 0.0)
        val = smooth_plus_max(a, eps)
        assert val >= true - 1e-12
        assert val - true <= eps * math.log(1 + len(a)) + 1e-12


class TestObjectiveExamples:
    def test_zero_reward_zero_weights(self):
        sc = small(3).with_reward(0.0)
        val, _ = stbd_objective(sc, np.zeros((2, 2)))
        assert val == 0.0

    def test_zero_demand_negative_weights(self):
        cost = TwoPieceLinear(1.0)
        sc = toy_scenario(np.zeros((1, 3, 3)), [(0.5, 0.5)], [cost], [1.0], reward=0.2)
        val, g = stbd_objective(sc, np.array([[-0.5]]))
        assert val == 0.0
        assert np.all(g == 0.0)

    def test_single_station_at_corner(self):
        # uniform unit demand on the unit square, station at the origin
        sc = toy_scenario(np.ones((1, 200, 200)), [(0.0, 0.0)], [TwoPieceLinear(1.0)], [1e6],
                          reward=10.0)
        val, _ = stbd_objective(sc, np.zeros((1, 1)))
        ref, _ = dblquad(lambda y, x: 10.0 - math.hypot(x, y), 0, 1, 0, 1, epsabs=1e-12)
        assert ref == pytest.approx(10 - 0.7652, abs=1e-4)
        assert val == pytest.approx(ref, abs=1e-5)

    def test_rejects_bad_shape_and_nan(self):
        sc = small()
        with pytest.raises(ValueError):
            stbd_objective(sc, np.zeros((3, 2)))
        with pytest.raises(ValueError):
            stbd_objective(sc, np.full((2, 2), np.nan))

    def test_smoothed_rejects_nonpositive_eps(self):
        with pytest.raises(ValueError):
            stbd_smoothed(small(), np.zeros((2, 2)), 0.0)


class TestSurrogate:
    @pytest.mark.parametrize("seed", range(4))
    def test_upper_bound_and_gap(self, seed):
        sc = small(seed, 2, 3)
        rng = np.random.default_rng(seed)
        eta = random_eta(sc, rng, 0.5)
        true, _ = stbd_objective(sc, eta)
        for eps in (1.0, 0.1, 0.01):
            sm, _ = stbd_smoothed(sc, eta, eps)
            bound = eps * (math.log(1 + sc.n_stations) * sc.total_demand
                           + math.log(1 + sc.n_types) * sc.total_capacity)
            assert sm >= true - 1e-12
            assert sm - true <= bound + 1e-12

    def test_monotone_in_eps_and_limit(self, rng):
        sc = small(5, 2, 2)
        eta = random_eta(sc, rng, 0.5)
        true, _ = stbd_objective(sc, eta)
        vals = [stbd_smoothed(sc, eta, e)[0] for e in np.geomspace(1.0, 1e-6, 13)]
        assert np.all(np.diff(vals) <= 1e-12)
        assert vals[-1] == pytest.approx(true, abs=1e-5 * sc.cost_scale)

    @pytest.mark.parametrize("seed", range(3))
    def test_gradient_matches_central_differences(self, seed):
        sc = small(seed, 2, 2, constant_capacity=bool(seed % 2))
        rng = np.random.default_rng(100 + seed)
        eps = 0.1 * sc.cost_scale
        h = 1e-4 * sc.cost_scale
        for _ in range(3):
            eta = random_eta(sc, rng, 0.5)
            _, g = stbd_smoothed(sc, eta, eps)
            fd = np.zeros_like(eta)
            for idx in np.ndindex(*eta.shape):
                e = np.zeros_like(eta)
                e[idx] = h
                fd[idx] = (stbd_smoothed(sc, eta + e, eps)[0] - stbd_smoothed(sc, eta - e, eps)[0]) / (2 * h)
            assert np.linalg.norm(g - fd) <= 1e-5 * np.linalg.norm(g)

    def test_gradient_tends_to_subgradient(self, rng):
        sc = small(7, 2, 2)
        eta = random_eta(sc, rng, 0.3)
        _, sub = stbd_objective(sc, eta)
        errs = [np.abs(stbd_smoothed(sc, eta, e)[1] - sub).max() for e in np.array([1.0, 1e-2, 1e-7]) * sc.cost_scale]
        assert errs[-1] <= 1e-6 * (sc.total_demand + sc.total_capacity)
        assert errs[0] > 1e-3 * sc.total_demand  # the comparison is not vacuous


class TestConvexityAndTranslation:
    @given(st.integers(0, 10_000), st.floats(0.01, 0.99))
    def test_convexity_probe(self, seed, lam):
        sc = small(seed % 5, 2, 2, res=5)
        rng = np.random.default_rng(seed)
        e1, e2 = random_eta(sc, rng), random_eta(sc, rng)
        f = lambda e: stbd_objective(sc, e)[0]
        assert f(lam * e1 + (1 - lam) * e2) <= lam * f(e1) + (1 - lam) * f(e2) + 1e-12 * sc.cost_scale

    def test_row_shift_moves_terms_in_opposite_directions(self, rng):
        sc = small(2, 2, 2)
        eta = random_eta(sc, rng, 0.3)
        i = 1
        ks = np.linspace(-0.5, 0.5, 11) * sc.cost_scale
        tv, sv = [], []
        for k in ks:
            e = eta.copy()
            e[i] += k
            tv.append(temporal_term(sc, e)[0])
            sv.append(spatial_term(sc, e)[0])
        assert np.all(np.diff(tv) >= -1e-12)
        assert np.all(np.diff(sv) <= 1e-12)
        # the rate of change is the capacity (resp. demand) mass of row i
        _, tg = temporal_term(sc, eta)
        _, sg = spatial_term(sc, eta)
        d = 1e-6 * sc.cost_scale
        e = eta.copy()
        e[i] += d
        assert (temporal_term(sc, e)[0] - temporal_term(sc, eta)[0]) / d == pytest.approx(tg[i].sum(), rel=1e-4, abs=1e-9)
        assert (spatial_term(sc, e)[0] - spatial_term(sc, eta)[0]) / d == pytest.approx(sg[i].sum(), rel=1e-4, abs=1e-9)

    def test_uniform_shift_equals_reward_shift(self, rng):
        sc = small(4, 2, 2)
        eta = random_eta(sc, rng, 0.2)
        k = 0.1
        a, _ = spatial_term(sc, eta + k)
        b, _ = spatial_term(sc.with_reward(sc.reward - k), eta)
        assert a == pytest.approx(b, rel=1e-12)


class TestMassBalance:
    def test_empty_cells_both_sides(self):
        # eta <= 0 keeps temporal cells null; r - eta below every travel cost empties space
        sc = toy_scenario(np.ones((1, 4, 4)), [(0.5, 0.5)], [TwoPieceLinear(1.0)], [1.0], reward=0.05)
        assert np.all(mass_balance(sc, np.array([[-0.01]])) == 0.0)

    def test_sign_when_temporal_side_exceeds(self):
        sc = toy_scenario(np.ones((1, 4, 4)), [(0.5, 0.5)], [TwoPieceLinear(1.0)], [1.0], reward=0.05)
        res = mass_balance(sc, np.array([[1.0]]))
        assert res[0, 0] > 0

    @pytest.mark.parametrize("name", ["hotelling_partial", "random_sensitivity", "random_hump"])
    def test_residual_at_solution(self, name):
        sc, eta, rep, _ = solved(name)
        mref = sc.total_demand + sc.total_capacity
        assert rep.converged
        assert np.abs(mass_balance(sc, eta, rep.final_eps)).max() / mref <= 1e-5
        assert rep.mass_balance_residual <= 1e-5


class TestSolve:
    def test_no_exclusion_serves_everything(self):
        sc = toy_scenario(np.ones((1, 8, 8)), [(0.3, 0.6)], [TwoPieceLinear(1.0)], [50.0],
                          reward=20.0)
        eta, rep = solve_stbd(sc)
        _, sg = spatial_term(sc, eta, rep.final_eps)
        assert rep.converged
        assert -sg.sum() == pytest.approx(sc.total_demand, rel=1e-5)

    def test_hotelling_partial_boundary(self):
        sc, _, _, plan = solved("hotelling_partial")
        # uniform unit density on a unit-height strip: served mass is the interval length
        assert plan.q[0, 0] == pytest.approx(0.25, rel=5e-3)
        assert plan.q[1, 0] == pytest.approx(0.25, rel=5e-3)

    def test_uniform_complete_boundary(self):
        from stmatch.analytic import HotellingParams, hotelling_uniform

        sc, _, _, plan = solved("uniform_complete")
        sol = hotelling_uniform(HotellingParams(3, 1, 10, 2.0))
        alphas = np.array(sc.meta["alphas"])
        m = sc.n_types
        got = plan.q[0] * m  # mass per type is 1/m on a unit interval
        assert np.max(np.abs(got - sol.f1(alphas))) <= 2.0 / sc.grid.nx

    def test_iteration_budget_flags_non_convergence(self):
        sc = small(1)
        eta, rep = solve_stbd(sc, SolveOptions(max_iter=1))
        assert not rep.converged
        assert np.all(np.isfinite(eta))
        assert rep.mass_balance_residual >= 0
        assert rep.to_dict()["converged"] is False

    def test_report_records_schedule(self):
        _, _, rep, _ = solved("random_sensitivity")
        sch = rep.smoothing_schedule
        assert sch[0] > sch[-1]
        assert np.all(np.diff(sch) < 0)
        assert rep.final_eps == sch[-1]
