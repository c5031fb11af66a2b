import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from conftest import toy_scenario
from stmatch.allocation import (
    AllocationError,
    ca_objective,
    concentration_threshold,
    dispersion_bounds_general,
    dispersion_vs_concentration,
    induced_welfare,
    optimal_capacity_single_type,
    solve_capacity_allocation,
    spatial_gap_bound,
    voronoi_masses,
)
from stmatch.analytic import HotellingParams, hotelling_homogeneous
from stmatch.domain import TwoPieceLinear
from stmatch.linear import AssumptionError
from stmatch.scenarios import random_scenario
from stmatch.solver import solve_stbd


def two_sites(dens, reward=5.0, rates=(1.0, 1.0), m=1):
    costs = [TwoPieceLinear(2.0 - 0.5 * j) for j in range(m)]
    return toy_scenario(dens, [(0.25, 0.5), (0.75, 0.5)], costs, list(rates),
                        horizon=(-10.0, 10.0), reward=reward, mode="sensitivity")


def skewed_interval(res=200, reward=5.0):
    # density 2x on [0, 1] with sites at the two ends
    x = (np.arange(res) + 0.5) / res
    return toy_scenario((2 * x)[None, None, :], [(0.0, 0.0), (1.0, 0.0)], [TwoPieceLinear(1.0)],
                        [1.0, 1.0], horizon=(-10.0, 10.0), reward=reward,
                        extent=(0.0, 1.0, -0.5, 0.5))


class TestProportionalRule:
    def test_symmetric_uniform(self):
        sc = two_sites(np.ones((1, 10, 10)))
        assert optimal_capacity_single_type(sc, 4.0) == pytest.approx([2.0, 2.0])

    def test_all_mass_in_one_cell(self):
        dens = np.zeros((1, 10, 10))
        dens[0, 5, 1] = 1.0
        sc = two_sites(dens)
        assert optimal_capacity_single_type(sc, 3.0) == pytest.approx([3.0, 0.0])

    def test_skewed_interval(self):
        sc = skewed_interval()
        assert voronoi_masses(sc) == pytest.approx([0.25, 0.75])
        assert optimal_capacity_single_type(sc, 2.0) == pytest.approx([0.5, 1.5])

    def test_hypotheses_enforced(self):
        with pytest.raises(AssumptionError):
            optimal_capacity_single_type(two_sites(np.ones((2, 4, 4)), m=2), 1.0)
        with pytest.raises(AssumptionError, match="reward"):
            optimal_capacity_single_type(two_sites(np.ones((1, 4, 4)), reward=0.1), 1.0)
        with pytest.raises(AllocationError):
            optimal_capacity_single_type(two_sites(np.ones((1, 4, 4))), 0.0)


class TestSolveAllocation:
    def test_symmetric_split(self):
        sc = two_sites(np.ones((2, 8, 8)), reward=2.0, m=2)
        res = solve_capacity_allocation(sc, 2.0)
        assert res.scales == pytest.approx([1.0, 1.0], rel=1e-4)
        assert res.binding == (0, 1)

    def test_matches_proportional_rule(self):
        sc = skewed_interval(reward=20.0)
        B = 2.0
        res = solve_capacity_allocation(sc, B)
        ref = optimal_capacity_single_type(sc, B)
        assert res.converged
        assert np.abs(res.scales - ref).max() <= 0.01 * B

    def test_budget_exact_and_zero_off_binding(self):
        sc = random_scenario(3, 3, 2, resolution=8)
        xi = np.array([1.0, 2.0, 0.5])
        res = solve_capacity_allocation(sc, 1.5, xi)
        assert xi @ res.scales == pytest.approx(1.5, abs=1e-9)
        off = [i for i in range(3) if i not in res.binding]
        assert np.all(res.scales[off] == 0)
        assert np.all(res.scales >= 0)

    def test_induced_welfare_matches_objective(self):
        sc = random_scenario(5, 2, 2, resolution=8)
        res = solve_capacity_allocation(sc, 1.0)
        val = induced_welfare(sc, res.scales, res.eta)
        assert val == pytest.approx(res.welfare, rel=1e-3)

    def test_zero_demand(self):
        sc = two_sites(np.zeros((1, 4, 4)))
        res = solve_capacity_allocation(sc, 1.0)
        assert res.degenerate and np.all(res.scales == 0)

    @pytest.mark.parametrize("budget,xi", [(0.0, None), (-1.0, None), (float("inf"), None),
                                           (1.0, [1.0]), (1.0, [1.0, 0.0])])
    def test_invalid_inputs(self, budget, xi):
        with pytest.raises(AllocationError):
            solve_capacity_allocation(two_sites(np.ones((1, 4, 4))), budget, xi)

    @given(st.integers(0, 10_000), st.floats(0.01, 0.99))
    def test_objective_convexity_probe(self, seed, lam):
        sc = random_scenario(seed % 3, 2, 2, resolution=5)
        rng = np.random.default_rng(seed)
        e1, e2 = (rng.normal(0, sc.cost_scale, (2, 2)) for _ in range(2))
        f = lambda e: ca_objective(sc, e, 1.3, [1.0, 2.0])[0]
        assert f(lam * e1 + (1 - lam) * e2) <= lam * f(e1) + (1 - lam) * f(e2) + 1e-12 * sc.cost_scale

    def test_to_dict(self):
        sc = two_sites(np.ones((1, 4, 4)))
        d = solve_capacity_allocation(sc, 1.0).to_dict()
        assert set(d) >= {"scales", "eta", "welfare", "binding", "budget", "xi"}


class TestDispersion:
    def test_dispersion_when_capacity_dominates(self):
        for c0 in (0.0, 1.0, 100.0, 1e6):
            v = dispersion_vs_concentration(2, 2, 1, c0)
            assert v.verdict == "dispersion" and v.welfare_verdict == "dispersion"
            assert v.threshold == np.inf

    def test_concentration_example(self):
        assert concentration_threshold(1, 1, 2) == pytest.approx(2.0)
        v = dispersion_vs_concentration(1, 1, 2, 10)
        assert v.verdict == "concentration" and v.welfare_verdict == "concentration"

    def test_equal_welfare_at_threshold(self):
        for c1, c2, w in ((1, 1, 2), (1, 2, 3), (0.5, 0.7, 1.0)):
            thr = concentration_threshold(c1, c2, w)
            v = dispersion_vs_concentration(c1, c2, w, thr)
            assert v.dispersion_welfare == pytest.approx(v.concentration_welfare, abs=1e-12)

    def test_dispersed_cost_matches_homogeneous_solution(self):
        c1, c2, w, r = 1.0, 2.0, 3.0, 50.0
        v = dispersion_vs_concentration(c1, c2, w, 0.0, r)
        sol = hotelling_homogeneous(HotellingParams(c1, c2, w, r))
        assert v.dispersion_welfare == pytest.approx(sol.welfare)

    @given(st.floats(0.1, 5), st.floats(0.1, 5), st.floats(0.1, 10), st.floats(0, 100))
    def test_verdict_agrees_with_welfare(self, c1, c2, w, c0):
        v = dispersion_vs_concentration(c1, c2, w, c0)
        assume(abs(v.dispersion_cost - v.concentration_cost) > 1e-12)
        assert v.verdict == v.welfare_verdict

    def test_invalid(self):
        with pytest.raises(ValueError):
            dispersion_vs_concentration(0, 1, 1, 1)


class TestDispersionBounds:
    def test_equal_weights(self):
        assert dispersion_bounds_general(0.7, 0.7, 1.0, 2.0, 0.5).dispersion_sufficient

    def test_closed_second_station(self):
        assert dispersion_bounds_general(0.7, 0.0, 1.0, 2.0, 0.5).concentration_sufficient

    def test_nonpositive_gap_rejected(self):
        with pytest.raises(ValueError):
            dispersion_bounds_general(1, 1, 1, 1, 0.0)

    @given(st.floats(-5, 5), st.floats(1e-3, 5), st.floats(0.1, 5), st.floats(0.1, 5), st.floats(1e-3, 5))
    def test_never_both_when_weights_within_gap(self, e1, e2, c1, c2, D):
        # optimal weights of two stations that both serve demand differ by at most D
        assume(abs(e1 - e2) < D)
        res = dispersion_bounds_general(e1, e2, c1, c2, D)
        assert not (res.dispersion_sufficient and res.concentration_sufficient)

    @pytest.mark.parametrize("seed", range(4))
    def test_solved_instances(self, seed):
        sc = random_scenario(seed, 2, 1, resolution=10, half_horizon=10.0)
        eta, _ = solve_stbd(sc)
        D = spatial_gap_bound(sc)
        assert abs(eta[0, 0] - eta[1, 0]) <= D
        c = [s.capacity.rates[0] for s in sc.stations]
        res = dispersion_bounds_general(eta[0, 0], eta[1, 0], c[0], c[1], D)
        assert not (res.dispersion_sufficient and res.concentration_sufficient)
