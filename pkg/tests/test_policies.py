import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import linprog

from conftest import toy_scenario
from stmatch.domain import TwoPieceLinear
from stmatch.policies import (
    POLICY_NAMES,
    SpatialAssignment,
    assign_capacity_rule,
    assign_distance_rule,
    compare_policies,
    evaluate_benchmark,
    schedule_priority,
    schedule_random,
    urgency_order,
)
from stmatch.scenarios import GeneratorSpec, generate, random_scenario

LATE = dict(b=0.0, h=1.0, tau=0.0, early=False)


def one_site(volumes, s, rate, T=10.0, reward=100.0, mode="sensitivity"):
    """One site at the centre of a single cell holding ``volumes`` of each type."""
    dens = np.asarray(volumes, dtype=float)[:, None, None]
    costs = [TwoPieceLinear(x, **LATE) for x in s]
    return toy_scenario(dens, [(0.5, 0.5)], costs, [rate], horizon=(0.0, T), reward=reward,
                        mode=mode)


def fixed(scenario, assigned):
    """Assignment with prescribed per-site, per-type masses (travel ignored)."""
    assigned = np.asarray(assigned, dtype=float)
    n = assigned.shape[0]
    frac = np.full((n, scenario.demand.grid.n_cells), 1.0 / n)
    return SpatialAssignment("Fixed", frac, assigned, np.zeros_like(assigned))


def transport_lp(scenario):
    """Minimum travel cost with per-site horizon capacity, all types merged."""
    mass = scenario.demand.masses.sum(axis=0)
    caps = np.array([s.capacity.total for s in scenario.stations])
    n, N = scenario.distances.shape
    A_eq = np.kron(np.ones((1, n)), np.eye(N))
    A_ub = np.kron(np.eye(n), np.ones((1, N)))
    res = linprog(scenario.distances.ravel(), A_ub=A_ub, b_ub=caps, A_eq=A_eq, b_eq=mass,
                  method="highs")
    return res.fun


class TestSpatialRules:
    def test_capacity_rule_symmetric(self):
        sc = toy_scenario(np.ones((1, 10, 10)), [(0.25, 0.5), (0.75, 0.5)], [TwoPieceLinear(1.0)],
                          [1.0, 1.0])
        asg = assign_capacity_rule(sc)
        assert asg.assigned[:, 0] == pytest.approx([0.5, 0.5], abs=1e-6)
        assert np.array_equal(asg.labels, assign_distance_rule(sc).labels)

    def test_capacity_rule_one_open_site(self):
        sc = toy_scenario(np.ones((1, 6, 6)), [(0.25, 0.5), (0.75, 0.5)], [TwoPieceLinear(1.0)],
                          [1e6, 1e-9])
        asg = assign_capacity_rule(sc)
        assert asg.assigned[0, 0] == pytest.approx(1.0, rel=1e-6)
        assert np.all(asg.labels == 1)

    @pytest.mark.parametrize("rates", [(0.3 / 8, 0.7 / 8), (0.8 / 8, 0.25 / 8), (0.5 / 8, 0.6 / 8)])
    def test_capacity_rule_matches_transport_lp(self, rates):
        sc = toy_scenario(np.ones((1, 8, 8)), [(0.25, 0.4), (0.75, 0.6)], [TwoPieceLinear(1.0)],
                          list(rates))
        asg = assign_capacity_rule(sc)
        caps = np.array([s.capacity.total for s in sc.stations])
        assert np.all(asg.assigned.sum(axis=1) <= caps * (1 + 1e-6))
        assert asg.assigned.sum() == pytest.approx(1.0, rel=1e-6)
        assert asg.travel.sum() == pytest.approx(transport_lp(sc), rel=1e-4)

    def test_capacity_rule_scales_when_short(self):
        sc = toy_scenario(np.ones((1, 4, 4)), [(0.25, 0.5), (0.75, 0.5)], [TwoPieceLinear(1.0)],
                          [0.25 / 8, 0.25 / 8])
        asg = assign_capacity_rule(sc)
        assert asg.scaled
        assert asg.assigned.sum() == pytest.approx(0.5, rel=1e-5)

    def test_distance_rule_symmetric(self):
        sc = toy_scenario(np.ones((2, 10, 10)), [(0.25, 0.5), (0.75, 0.5)],
                          [TwoPieceLinear(2.0), TwoPieceLinear(1.0)], [1.0, 1.0])
        asg = assign_distance_rule(sc)
        assert asg.assigned == pytest.approx(np.full((2, 2), 0.5))

    def test_distance_rule_records_overload(self):
        dens = np.ones((1, 10, 10))
        dens[0, :, :3] = 20.0
        sc = toy_scenario(dens, [(0.1, 0.5), (0.9, 0.5)], [TwoPieceLinear(1.0)], [1e-3, 1e-3])
        asg = assign_distance_rule(sc)
        expected = (20.0 * 3 + 2) * 10 / 100  # cells with x < 0.5
        assert asg.assigned[0, 0] == pytest.approx(expected)
        assert asg.assigned[0, 0] > sc.stations[0].capacity.total

    def test_distance_rule_single_site(self):
        sc = random_scenario(0, 1, 2)
        asg = assign_distance_rule(sc)
        assert asg.assigned.sum(axis=0) == pytest.approx(sc.demand.masses.sum(axis=1))


class TestTemporalRules:
    def test_random_mean_cost(self):
        s, T = 0.7, 10.0
        sc = one_site([2.0], [s], 2.0 / T, T)
        out = schedule_random(fixed(sc, [[2.0]]), sc)
        assert out.waiting[0, 0] / out.served[0, 0] == pytest.approx(s * T / 2)

    def test_random_zero_assigned(self):
        sc = one_site([1.0], [1.0], 1.0)
        out = schedule_random(fixed(sc, [[0.0]]), sc)
        assert out.served[0, 0] == 0 and out.waiting[0, 0] == 0

    def test_random_overflow_pro_rata(self):
        sc = one_site([1.0, 3.0], [2.0, 1.0], 0.2, T=10.0)  # capacity 2, demand 4
        asg = fixed(sc, [[1.0, 3.0]])
        out = schedule_random(asg, sc)
        assert out.served[0] == pytest.approx([0.5, 1.5])
        res = evaluate_benchmark(sc, asg, out)
        assert res.uncovered_total == pytest.approx(0.5)
        assert res.uncovered_by_type == pytest.approx((0.125, 0.375))

    def test_priority_stacked_bands(self):
        sc = one_site([1.0, 2.0], [2.0, 1.0], 1.0, T=10.0)
        out = schedule_priority(fixed(sc, [[1.0, 2.0]]), sc)
        # type 0 on [0, 1], type 1 on [1, 3]
        assert out.waiting[0] == pytest.approx([2.0 * 0.5, 1.0 * (9 - 1) / 2])

    def test_priority_single_type_is_earliest(self):
        q, c, s = 1.5, 0.5, 0.8
        sc = one_site([q], [s], c, T=10.0)
        out = schedule_priority(fixed(sc, [[q]]), sc)
        assert out.waiting[0, 0] == pytest.approx(s * q**2 / (2 * c))

    def test_priority_overflow_trims_least_urgent(self):
        sc = one_site([1.0, 1.0, 1.0], [3.0, 2.0, 1.0], 0.15, T=10.0)  # capacity 1.5
        out = schedule_priority(fixed(sc, [[1.0, 1.0, 1.0]]), sc)
        assert out.served[0] == pytest.approx([1.0, 0.5, 0.0])

    def test_urgency_order(self):
        sc = one_site([1.0, 1.0, 1.0], [1.0, 3.0, 2.0], 1.0, mode=None)
        assert list(urgency_order(sc)) == [1, 2, 0]

    @given(st.integers(0, 10_000))
    def test_priority_not_worse_than_random(self, seed):
        rng = np.random.default_rng(seed)
        m = int(rng.integers(1, 5))
        s = np.sort(rng.uniform(0.1, 3.0, m))[::-1] + 0.01 * np.arange(m)[::-1]
        vol = rng.uniform(0.1, 2.0, m)
        T = 10.0
        rate = vol.sum() / T * rng.uniform(1.0, 3.0)
        sc = one_site(vol, s, rate, T)
        asg = fixed(sc, [vol])
        pri, ran = schedule_priority(asg, sc), schedule_random(asg, sc)
        assert pri.served == pytest.approx(ran.served)
        assert pri.waiting.sum() <= ran.waiting.sum() * (1 + 1e-12)


class TestCompare:
    def test_degenerate_instance_all_coincide(self):
        # capacity exactly equals demand, so every temporal rule fills the whole horizon
        sc = one_site([1.0], [1.0], 0.1, T=10.0)
        tab = compare_policies(sc)
        totals = np.array([r.total for r in tab.rows])
        assert [r.policy for r in tab.rows] == list(POLICY_NAMES)
        assert np.ptp(totals) <= 1e-4 * totals.max()
        assert tab.dominance_ok

    def test_outcome_invariants_and_dominance(self):
        sc = generate(GeneratorSpec(seed=0, resolution=12))
        tab = compare_policies(sc)
        assert tab.dominance_ok, tab.violations
        for r in tab.rows:
            assert r.total == pytest.approx(r.spatial + r.temporal)
            assert sum(r.uncovered_by_type) == pytest.approx(r.uncovered_total)
        best = tab.by_name()["Spatiotemporal"].total
        assert all(best < r.total for r in tab.rows if r.policy != "Spatiotemporal")

    def test_subset_and_unknown(self):
        sc = one_site([1.0], [1.0], 0.2)
        tab = compare_policies(sc, ["Distance_Random"])
        assert [r.policy for r in tab.rows] == ["Distance_Random"] and tab.dominance_ok
        with pytest.raises(ValueError):
            compare_policies(sc, ["Nearest_Random"])

    def test_to_dict_columns(self):
        tab = compare_policies(one_site([1.0], [1.0], 0.2), ["Capacity_Priority"])
        assert list(tab.to_dict()["rows"][0]) == ["policy", "spatial", "temporal", "total",
                                                  "uncovered_total", "uncovered_by_type"]
