import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import minimize

from stmatch.analytic import (
    HotellingParams,
    complete_threshold,
    critical_reward,
    hotelling_boundary_limits,
    hotelling_homogeneous,
    hotelling_uniform,
    mixing_rate,
    solve_hat_alpha,
)
from stmatch.analytic import _hat_alpha_rhs

ALPHA = np.linspace(0.0, 1.0, 401)


def brute_force_homogeneous(c1, c2, w, r):
    """Maximize welfare over the two served lengths directly.

    Station k serves ``x_k`` nearest agents first-come at rate ``c_k``: travel
    ``x_k^2 / 2`` and waiting ``w x_k^2 / (2 c_k)``.
    """
    def neg(x):
        x1, x2 = x
        return -(r * (x1 + x2) - 0.5 * x1**2 * (1 + w / c1) - 0.5 * x2**2 * (1 + w / c2))

    res = minimize(neg, x0=[0.1, 0.1], method="SLSQP", bounds=[(0, 1), (0, 1)],
                   constraints=[{"type": "ineq", "fun": lambda x: 1 - x[0] - x[1]}],
                   options={"ftol": 1e-14, "maxiter": 500})
    return res.x, -res.fun


params = st.tuples(st.floats(0.2, 5), st.floats(0.2, 5), st.floats(0.0, 20), st.floats(0.05, 5))


class TestHomogeneous:
    def test_symmetric_complete(self):
        for w in (0.0, 0.5, 3.0):
            sol = hotelling_homogeneous(HotellingParams(2.0, 2.0, w, 50.0))
            assert sol.regime == "complete" and sol.x1 == pytest.approx(0.5)

    def test_partial_example(self):
        sol = hotelling_homogeneous(HotellingParams(1, 1, 1, 0.5))
        assert sol.regime == "partial"
        assert sol.threshold == pytest.approx(1.0)
        assert sol.x1 == pytest.approx(0.25) and sol.x2 == pytest.approx(0.25)
        # c r^2 / (2 (c + w)) summed over both stations
        assert sol.welfare == pytest.approx(0.125)

    def test_free_waiting(self):
        sol = hotelling_homogeneous(HotellingParams(1.0, 3.0, 0.0, 2.0))
        assert sol.x1 == pytest.approx(0.5)
        assert sol.welfare == pytest.approx(2.0 - 0.25)

    @given(params)
    def test_matches_direct_maximization(self, p):
        c1, c2, w, r = p
        sol = hotelling_homogeneous(HotellingParams(c1, c2, w, r))
        x, val = brute_force_homogeneous(c1, c2, w, r)
        assert sol.welfare == pytest.approx(val, rel=1e-6, abs=1e-9)
        assert sol.x1 == pytest.approx(x[0], abs=1e-5)
        assert sol.x2 == pytest.approx(x[1], abs=1e-5)

    @given(st.floats(0.2, 5), st.floats(0.2, 5), st.floats(0.0, 20))
    def test_continuous_at_threshold(self, c1, c2, w):
        thr = complete_threshold(c1, c2, w)
        # at the threshold the partial formulas fill the interval exactly
        part = hotelling_homogeneous(HotellingParams(c1, c2, w, thr * (1 - 1e-15)))
        comp = hotelling_homogeneous(HotellingParams(c1, c2, w, thr))
        assert thr * c1 / (c1 + w) == pytest.approx(comp.x1, abs=1e-10)
        assert part.x1 == pytest.approx(comp.x1, abs=1e-10)
        assert part.welfare == pytest.approx(comp.welfare, abs=1e-10)

    def test_invalid_params(self):
        with pytest.raises(ValueError):
            HotellingParams(0.0, 1.0, 1.0, 1.0)
        with pytest.raises(ValueError):
            HotellingParams(1.0, 1.0, -1.0, 1.0)


class TestUniform:
    def test_partial_boundary_condition(self):
        sol = hotelling_uniform(HotellingParams(3, 1, 10, 0.45))
        assert sol.regime == "partial"
        assert float(sol.f1(0.0)) == pytest.approx(0.45)
        assert float(sol.f2(0.0)) == pytest.approx(0.45)

    def test_critical_reward(self):
        lam = mixing_rate(3, 1, 10)
        assert lam == pytest.approx(math.sqrt(20 / 3))
        # the quoted reference 6.658 is a rounding slip; cosh(sqrt(20/3)) = 6.6495
        assert math.cosh(lam) == pytest.approx(6.6495, abs=1e-4)
        assert critical_reward(3, 1, 10) == pytest.approx(1.8562, abs=5e-5)

    def test_complete_end_value(self):
        sol = hotelling_uniform(HotellingParams(3, 1, 10, 2.0))
        assert sol.regime == "complete"
        lam = mixing_rate(3, 1, 10)
        expected = (1 - 3) / (2 * 4) / math.cosh(lam) + 3 / 4
        assert float(sol.f1(1.0)) == pytest.approx(expected, rel=1e-12)
        # 0.7124 with the exact cosh; the quoted 0.7125 carries the cosh rounding slip
        assert float(sol.f1(1.0)) == pytest.approx(0.7124, abs=5e-5)
        assert float(sol.f1(1.0)) == pytest.approx(0.7125, abs=2e-4)
        assert sol.f1(ALPHA) + sol.f2(ALPHA) == pytest.approx(np.ones_like(ALPHA))

    def test_complete_symmetric(self):
        sol = hotelling_uniform(HotellingParams(2, 2, 5, 3.0))
        assert sol.f1(ALPHA) == pytest.approx(np.full_like(ALPHA, 0.5))

    @pytest.mark.parametrize("c1,c2,w", [(3, 1, 10), (2, 1, 1), (1.5, 1, 4)])
    def test_junctions(self, c1, c2, w):
        rc = critical_reward(c1, c2, w)
        for r_lo, r_hi in ((0.5, 0.5 + 1e-9), (rc - 1e-9, rc)):
            a = hotelling_uniform(HotellingParams(c1, c2, w, r_lo))
            b = hotelling_uniform(HotellingParams(c1, c2, w, r_hi))
            assert np.abs(a.f1(ALPHA) - b.f1(ALPHA)).max() <= 1e-8
            assert np.abs(a.f2(ALPHA) - b.f2(ALPHA)).max() <= 1e-8

    @pytest.mark.parametrize("r", [0.6, 0.65, 1.0, 1.5, 1.85])
    def test_mixed_gluing(self, r):
        sol = hotelling_uniform(HotellingParams(3, 1, 10, r))
        assert sol.regime == "mixed"
        ah = sol.hat_alpha
        assert 0 < ah < 1
        assert abs(_hat_alpha_rhs(ah, 3, 1, 10) - r) <= 1e-10
        for f in (sol.f1, sol.f2):
            assert abs(float(f(ah - 1e-12)) - float(f(ah + 1e-12))) <= 1e-8
        below = ALPHA[ALPHA < ah]
        above = ALPHA[ALPHA > ah]
        assert sol.f1(below) + sol.f2(below) == pytest.approx(np.ones_like(below))
        assert np.all(sol.f1(above) + sol.f2(above) < 1 + 1e-12)

    def test_mixed_reference_values(self):
        sol = hotelling_uniform(HotellingParams(3, 1, 10, 0.65))
        assert sol.hat_alpha == pytest.approx(0.11045, abs=5e-5)
        assert sol.kappa == pytest.approx(0.53876, abs=5e-5)

    def test_hat_alpha_rhs_limits(self):
        assert _hat_alpha_rhs(1e-6, 3, 1, 10) == pytest.approx(0.5, abs=1e-5)
        assert _hat_alpha_rhs(1 - 1e-9, 3, 1, 10) == pytest.approx(critical_reward(3, 1, 10), abs=1e-6)

    def test_hat_alpha_monotone_rhs(self):
        a = np.linspace(1e-4, 1 - 1e-4, 2000)
        v = np.array([_hat_alpha_rhs(x, 3, 1, 10) for x in a])
        assert np.all(np.diff(v) > 0)
        assert solve_hat_alpha(3, 1, 10, float(v[700])) == pytest.approx(a[700], abs=1e-9)

    @pytest.mark.parametrize("r", [0.3, 0.45, 0.65, 1.2, 2.0, 5.0])
    def test_total_coverage_nonincreasing(self, r):
        # more sensitive agents are never less covered in total
        sol = hotelling_uniform(HotellingParams(3, 1, 10, r))
        tot = sol.f1(ALPHA) + sol.f2(ALPHA)
        assert np.all(np.diff(tot) <= 1e-12)

    def test_partial_f1_nonincreasing(self):
        sol = hotelling_uniform(HotellingParams(3, 1, 10, 0.45))
        assert np.all(np.diff(sol.f1(ALPHA)) <= 1e-12)

    def test_f1_not_monotone_in_mixed_and_complete_regimes(self):
        # station 1 gains share as waiting matters more, so f1 rises with alpha once stations meet
        for r in (0.65, 2.0):
            sol = hotelling_uniform(HotellingParams(3, 1, 10, r))
            assert np.any(np.diff(sol.f1(ALPHA)) > 1e-6)


class TestBoundaryLimits:
    def test_limits(self):
        lim = hotelling_boundary_limits(3.0, 1.0)
        assert lim.low == 0.5 and lim.high == pytest.approx(0.75)
        assert lim.boundary[0] == pytest.approx(0.5)
        assert lim.boundary[-1] == pytest.approx(0.75, abs=1e-5)
        assert lim.monotone

    @given(st.floats(0.2, 5), st.floats(0.2, 5))
    def test_monotone_interpolation(self, c1, c2):
        lim = hotelling_boundary_limits(c1, c2)
        assert lim.monotone
        lo, hi = sorted((lim.low, lim.high))
        assert np.all(lim.boundary >= lo - 1e-12) and np.all(lim.boundary <= hi + 1e-12)
