"""Fast path for constant capacities and two-piece linear costs with a common preferred time.

When every station serves at a constant rate over a horizon long enough to
absorb all demand on each allowed side of the preferred time, the temporal
term of the dual collapses to the quadratic form
``sum_i (c_i / beta) * eta_i^T A^{-1} eta_i`` with ``A_jk = s_max(j,k)`` and
``beta = 2bh / (b + h)``.  ``A^{-1}`` is tridiagonal and known in closed form,
and the optimal schedule at each station is a set of nested bands around the
preferred time.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domain import Scenario, ScenarioError, TwoPieceLinear, check_sensitivity_mode, integrate_cost
from .partition import MatchingPlan, StationCells, TemporalPartition, spatial_cells
from .solver import (
    SolveOptions,
    SolveReport,
    _normalizers,
    eps_schedule,
    minimize_annealed,
    spatial_assignment,
    spatial_term,
)


class AssumptionError(ScenarioError):
    """The scenario does not satisfy the fast-path hypotheses."""


@dataclass(frozen=True, eq=False)
class SensitivityMatrix:
    s: np.ndarray
    A: np.ndarray
    A_inv: np.ndarray
    beta: float
    diag: np.ndarray
    off: np.ndarray

    def apply_inverse(self, x: np.ndarray) -> np.ndarray:
        """``A^{-1} x`` in O(m) using the tridiagonal structure."""
        y = self.diag * x
        y[:-1] += self.off * x[1:]
        y[1:] += self.off * x[:-1]
        return y


def harmonic_scale(b: float, h: float, early: bool = True, late: bool = True) -> float:
    """``beta = 2bh / (b + h)``; one-sided costs give ``2h`` or ``2b``."""
    if not early:
        return 2.0 * h
    if not late:
        return 2.0 * b
    if b + h == 0:
        raise ValueError("early and late slopes cannot both be zero")
    return 2.0 * b * h / (b + h)


def build_A_inverse(s, b: float = 1.0, h: float = 1.0, early: bool = True,
                    late: bool = True) -> SensitivityMatrix:
    s = np.asarray(s, dtype=float).ravel()
    if s.size < 1 or np.any(s <= 0):
        raise ValueError("sensitivities must be positive")
    if np.any(np.diff(s) >= 0):
        raise ValueError("sensitivities must be strictly decreasing (equal neighbours are degenerate)")
    m = s.size
    idx = np.arange(m)
    A = s[np.maximum.outer(idx, idx)]
    ext = np.concatenate([s, [0.0]])  # s_{m+1} = 0
    gaps = ext[:-1] - ext[1:]  # s_i - s_{i+1}
    diag = np.empty(m)
    diag[0] = 1.0 / gaps[0] if m > 1 else 1.0 / s[0]
    for i in range(1, m):
        diag[i] = (ext[i - 1] - ext[i + 1]) / ((ext[i - 1] - ext[i]) * (ext[i] - ext[i + 1]))
    off = -1.0 / gaps[:-1]
    A_inv = np.diag(diag) + np.diag(off, 1) + np.diag(off, -1)
    return SensitivityMatrix(s, A, A_inv, harmonic_scale(b, h, early, late), diag, off)


@dataclass(frozen=True)
class LinearSetting:
    matrix: SensitivityMatrix
    rates: np.ndarray  # constant rate per station
    tau: float
    b: float
    h: float
    early: bool
    late: bool


def check_linear_setting(scenario: Scenario) -> LinearSetting:
    """Validate the fast-path hypotheses and return the derived constants."""
    costs = scenario.temporal_costs
    if not all(isinstance(c, TwoPieceLinear) for c in costs):
        raise AssumptionError("fast path needs two-piece linear temporal costs")
    try:
        check_sensitivity_mode(costs)
    except ScenarioError as exc:
        raise AssumptionError(str(exc)) from exc
    c0 = costs[0]
    for st in scenario.stations:
        if not st.capacity.is_constant:
            raise AssumptionError("fast path needs constant capacities")
    rates = np.array([st.capacity.rates[0] for st in scenario.stations])
    need = scenario.total_demand / rates.min()
    t0, t1 = scenario.horizon
    if c0.late and t1 - c0.tau < need:
        raise AssumptionError("horizon too short: late side cannot absorb total demand")
    if c0.early and c0.tau - t0 < need:
        raise AssumptionError("horizon too short: early side cannot absorb total demand")
    mat = build_A_inverse([c.s for c in costs], c0.b, c0.h, c0.early, c0.late)
    if not mat.beta > 0:
        raise AssumptionError("harmonic slope scale must be positive")
    return LinearSetting(mat, rates, c0.tau, c0.b, c0.h, c0.early, c0.late)


def _quadratic(setting: LinearSetting, eta: np.ndarray) -> tuple[float, np.ndarray]:
    mat = setting.matrix
    grad = np.empty_like(eta)
    value = 0.0
    for i in range(eta.shape[0]):
        y = mat.apply_inverse(eta[i])
        coef = setting.rates[i] / mat.beta
        value += coef * float(eta[i] @ y)
        grad[i] = 2 * coef * y
    return value, grad


def linear_objective(scenario: Scenario, eta, eps: float = 0.0) -> tuple[float, np.ndarray]:
    """Quadratic temporal term plus the spatial term (smoothed when ``eps > 0``)."""
    setting = check_linear_setting(scenario)
    eta = np.asarray(eta, dtype=float)
    qv, qg = _quadratic(setting, eta)
    sv, sg = spatial_term(scenario, eta, eps)
    return qv + sv, qg + sg


@dataclass(frozen=True)
class BandSchedule:
    t_plus: np.ndarray  # outer late boundary of each type's band
    t_minus: np.ndarray  # outer early boundary
    cost: float


def closed_form_schedule(q, s, b: float, h: float, c: float, tau: float = 0.0,
                         early: bool = True, late: bool = True) -> BandSchedule:
    """Optimal nested bands for volumes ``q`` at a constant-rate station.

    Type ``j`` is served on ``[t_minus[j], t_minus[j-1]]`` and
    ``[t_plus[j-1], t_plus[j]]`` (with ``t_plus[-1] = t_minus[-1] = tau``).
    """
    q = np.asarray(q, dtype=float)
    s = np.asarray(s, dtype=float)
    Q = np.cumsum(q)
    if not late:
        tp = np.full_like(Q, tau)
        tm = tau - Q / c
    elif not early:
        tp = tau + Q / c
        tm = np.full_like(Q, tau)
    else:
        tp = tau + b * Q / (c * (b + h))
        tm = tau - h * Q / (c * (b + h))
    beta = harmonic_scale(b, h, early, late)
    ext = np.concatenate([s, [0.0]])
    cost = float(np.sum(beta * Q**2 * (ext[:-1] - ext[1:]) / (4 * c)))
    return BandSchedule(tp, tm, cost)


def schedule_cells(scenario: Scenario, i: int, sched: BandSchedule, q: np.ndarray) -> StationCells:
    """Temporal cells of station ``i`` under a band schedule."""
    m = q.size
    tau = scenario.temporal_costs[0].tau
    cap = scenario.stations[i].capacity
    ints = []
    cost = np.zeros(m)
    prev_p, prev_m = tau, tau
    for j in range(m):
        cur = []
        if sched.t_minus[j] < prev_m:
            cur.append((float(sched.t_minus[j]), float(prev_m)))
        if sched.t_plus[j] > prev_p:
            cur.append((float(prev_p), float(sched.t_plus[j])))
        ints.append(tuple(cur))
        cost[j] = sum(integrate_cost(scenario.temporal_costs[j], cap, a, b) for a, b in cur)
        prev_p, prev_m = sched.t_plus[j], sched.t_minus[j]
    t0, t1 = scenario.horizon
    lo = float(sched.t_minus[-1]) if m else tau
    hi = float(sched.t_plus[-1]) if m else tau
    idle = [iv for iv in ((t0, lo), (hi, t1)) if iv[1] > iv[0]]
    return StationCells(i, tuple(ints), tuple(idle), q.copy(), cost)


def solve_linear(scenario: Scenario,
                 options: SolveOptions | None = None) -> tuple[np.ndarray, MatchingPlan]:
    """Minimize the fast-path objective and assemble the plan with closed-form schedules."""
    options = options or SolveOptions()
    setting = check_linear_setting(scenario)
    n, m = scenario.n_stations, scenario.n_types
    scale, mref = _normalizers(scenario)

    def fun(x, eps):
        eta = x.reshape(n, m) * scale
        qv, qg = _quadratic(setting, eta)
        sv, sg = spatial_term(scenario, eta, eps)
        return (qv + sv) / (scale * mref), (qg + sg).ravel() / mref

    sched = eps_schedule(scale, options)
    res = minimize_annealed(fun, np.zeros(n * m), sched, options.tol, options.max_iter,
                            options.stage_max_iter)
    eta = res.x.reshape(n, m) * scale

    frac = spatial_assignment(scenario, eta, res.eps)
    mass = scenario.demand.masses
    flows = frac * mass[:, None, :]
    q = flows.sum(axis=2).T
    spatial_cost = float(np.sum(flows * scenario.distances[None, :, :]))
    _, qg = _quadratic(setting, eta)
    q_t = qg  # (2 c_i / beta) A^{-1} eta_i is the capacity of each band
    cells, tcost = [], 0.0
    mat = setting.matrix
    for i in range(n):
        bs = closed_form_schedule(q[i], mat.s, setting.b, setting.h, setting.rates[i],
                                  setting.tau, setting.early, setting.late)
        tcost += bs.cost
        cells.append(schedule_cells(scenario, i, bs, q[i]))
    served = q.sum(axis=0)
    resid = float(np.max(np.abs(q_t - q))) / mref
    value, _ = linear_objective(scenario, eta)
    report = SolveReport(value, res.grad_norms, resid, res.iterations, res.schedule,
                         res.converged and resid <= options.tol, res.eps, resid, res.message)
    plan = MatchingPlan(
        spatial=spatial_cells(scenario, eta),
        temporal=TemporalPartition(tuple(cells)),
        q=q,
        q_temporal=q_t,
        reward_total=float(scenario.reward * served.sum()),
        spatial_cost=spatial_cost,
        temporal_cost=tcost,
        served=served,
        uncovered=np.maximum(mass.sum(axis=1) - served, 0.0),
        residual=resid,
        grid=scenario.grid,
        mode=scenario.mode,
        eps=res.eps,
        fractions=frac,
        meta={"report": report},
    )
    return eta, plan


def volumes_to_weights(q, s, b: float, h: float, c: float, early: bool = True,
                       late: bool = True) -> np.ndarray:
    """Weights of one station whose temporal cells have capacities ``q``.

    Inverts ``q = (2c / beta) A^{-1} eta``, i.e. ``eta = (beta / 2c) A q``.
    """
    mat = build_A_inverse(s, b, h, early, late)
    return mat.beta / (2 * c) * (mat.A @ np.asarray(q, dtype=float))
