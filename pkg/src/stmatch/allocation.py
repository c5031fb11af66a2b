"""Budgeted capacity allocation.

Station ``i`` receives capacity ``a_i * cbar_i(t)`` where ``cbar_i`` is the
station's profile in the scenario, at linear cost ``xi_i * a_i`` under a
budget ``B``.  Maximizing welfare after optimal matching is equivalent to the
convex program

    min_eta  Psi(eta) + B * max_i Z_i(eta) / xi_i,

with ``Z_i`` the temporal term of station ``i`` under ``cbar_i`` and ``Psi``
the spatial term.  The scales are recovered afterwards from mass balance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp, softmax

from ._envelope import temporal_value, upper_envelope
from .domain import Scenario, ScenarioError, TwoPieceLinear
from .linear import AssumptionError, harmonic_scale
from .solver import SolveOptions, eps_schedule, minimize_annealed, spatial_term


class AllocationError(ScenarioError):
    """Invalid budget or cost weights."""


@dataclass(frozen=True, eq=False)
class AllocationResult:
    scales: np.ndarray  # a_i
    eta: np.ndarray
    welfare: float  # CA objective at eta, i.e. the welfare of the allocated system
    binding: tuple[int, ...]
    budget: float
    xi: np.ndarray
    degenerate: bool = False
    converged: bool = True
    normalized_z: np.ndarray = field(default_factory=lambda: np.zeros(0))
    multiplier_scales: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def to_dict(self) -> dict:
        return {
            "scales": self.scales.tolist(),
            "eta": self.eta.tolist(),
            "welfare": self.welfare,
            "binding": list(self.binding),
            "budget": self.budget,
            "xi": self.xi.tolist(),
            "degenerate": self.degenerate,
            "converged": self.converged,
            "normalized_z": self.normalized_z.tolist(),
        }


def _station_z(scenario: Scenario, eta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``Z_i`` and ``dZ_i / d eta_i`` (cell capacities) under the normalized profiles."""
    n, m = eta.shape
    z = np.empty(n)
    dz = np.empty((n, m))
    for i, st in enumerate(scenario.stations):
        env = upper_envelope(eta[i], scenario.pieces, st.capacity)
        z[i] = temporal_value(env)
        dz[i] = env.type_capacity(m)
    return z, dz


def ca_objective(scenario: Scenario, eta, budget: float, xi, eps: float = 0.0,
                 tau: float = 0.0) -> tuple[float, np.ndarray]:
    """``Psi(eta) + B * max_i Z_i / xi_i`` and a (sub)gradient.

    ``eps`` smooths the spatial term and ``tau`` the outer maximum.
    """
    eta = np.asarray(eta, dtype=float)
    xi = np.asarray(xi, dtype=float)
    sv, sg = spatial_term(scenario, eta, eps)
    z, dz = _station_z(scenario, eta)
    v = z / xi
    if tau > 0:
        top = float(tau * logsumexp(v / tau))
        w = softmax(v / tau)
    else:
        k = int(np.argmax(v))
        top = float(v[k])
        w = np.zeros_like(v)
        w[k] = 1.0
    grad = sg + budget * (w / xi)[:, None] * dz
    return sv + budget * top, grad


def solve_capacity_allocation(scenario: Scenario, budget: float, xi=None,
                              options: SolveOptions | None = None,
                              binding_rtol: float = 1e-6) -> AllocationResult:
    """Solve the allocation program and recover the capacity scales.

    Scales come from per-station mass balance on the binding set,
    ``a_i = (demand mass sent to i) / (normalized capacity used at i)``,
    renormalized so that ``sum xi_i a_i = B``.
    """
    n, m = scenario.n_stations, scenario.n_types
    if not (budget > 0 and math.isfinite(budget)):
        raise AllocationError("budget B must be positive")
    xi = np.ones(n) if xi is None else np.asarray(xi, dtype=float).ravel()
    if xi.shape != (n,) or np.any(~(xi > 0)):
        raise AllocationError(f"xi must hold {n} positive weights")
    options = options or SolveOptions()
    if scenario.total_demand <= 0:
        return AllocationResult(np.zeros(n), np.zeros((n, m)), 0.0, (), budget, xi, degenerate=True,
                                normalized_z=np.zeros(n), multiplier_scales=np.zeros(n))

    scale = scenario.cost_scale
    cap_unit = float(max(st.capacity.total / x for st, x in zip(scenario.stations, xi)))
    mref = scenario.total_demand + budget * cap_unit

    def fun(x, eps):
        eta = x.reshape(n, m) * scale
        val, g = ca_objective(scenario, eta, budget, xi, eps, eps * cap_unit)
        return val / (scale * mref), g.ravel() / mref

    sched = eps_schedule(scale, options)
    res = minimize_annealed(fun, np.zeros(n * m), sched, options.tol, options.max_iter,
                            options.stage_max_iter)
    eta = res.x.reshape(n, m) * scale
    value, _ = ca_objective(scenario, eta, budget, xi)

    z, dz = _station_z(scenario, eta)
    v = z / xi
    vmax = float(v.max())
    tau = res.eps * cap_unit
    # the smoothed maximum separates near-binding stations by a few temperatures
    slack = max(binding_rtol * abs(vmax), 20.0 * tau)
    binding = tuple(int(i) for i in np.flatnonzero(v >= vmax - slack))

    _, sg = spatial_term(scenario, eta, res.eps)
    sent = -sg.sum(axis=1)  # demand mass routed to each station
    used = dz.sum(axis=1)  # normalized capacity inside the temporal cells
    a = np.zeros(n)
    for i in binding:
        if used[i] > 0:
            a[i] = sent[i] / used[i]
    spent = float(xi @ a)
    degenerate = spent <= 0
    if not degenerate:
        a *= budget / spent
    mult = budget * softmax(v / tau) / xi if tau > 0 else np.zeros(n)
    return AllocationResult(a, eta, float(value), binding, float(budget), xi, degenerate,
                            res.converged, v, mult)


def induced_welfare(scenario: Scenario, scales, eta) -> float:
    """``sum_i a_i Z_i(eta) + Psi(eta)``: the allocated system's dual value at ``eta``."""
    eta = np.asarray(eta, dtype=float)
    z, _ = _station_z(scenario, eta)
    sv, _ = spatial_term(scenario, eta)
    return float(np.asarray(scales, dtype=float) @ z + sv)


def voronoi_masses(scenario: Scenario) -> np.ndarray:
    """Demand mass (all types) nearest to each station; ties go to the lowest index."""
    near = np.argmin(scenario.distances, axis=0)
    mass = scenario.demand.masses.sum(axis=0)
    return np.bincount(near, weights=mass, minlength=scenario.n_stations)


def optimal_capacity_single_type(scenario: Scenario, budget: float) -> np.ndarray:
    """Capacities proportional to Voronoi demand, ``c_i = B * mass_i / total``.

    Valid for one demand type with two-piece linear cost, constant capacity
    profiles, unit cost weights and a reward large enough that every agent is
    served.
    """
    if not budget > 0:
        raise AllocationError("budget B must be positive")
    if scenario.n_types != 1:
        raise AssumptionError("proportional rule needs a single demand type")
    cost = scenario.temporal_costs[0]
    if not isinstance(cost, TwoPieceLinear):
        raise AssumptionError("proportional rule needs a two-piece linear temporal cost")
    if not all(st.capacity.is_constant for st in scenario.stations):
        raise AssumptionError("proportional rule needs constant capacity profiles")
    total = scenario.total_demand
    if total <= 0:
        return np.zeros(scenario.n_stations)
    beta = harmonic_scale(cost.b, cost.h, cost.early, cost.late)
    # the last unit served waits until the band edge, costing s * beta / 2 * (q / c)
    worst = cost.s * beta / 2.0 * total / budget
    if scenario.reward <= float(np.max(scenario.distances)) + worst:
        raise AssumptionError(
            f"reward {scenario.reward:.4g} does not exceed the largest travel cost plus the "
            f"worst waiting cost ({float(np.max(scenario.distances)) + worst:.4g})"
        )
    return budget * voronoi_masses(scenario) / total


# ---------------------------------------------------------------------------
# Dispersion versus concentration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DispersionVerdict:
    verdict: str  # "dispersion" or "concentration"
    threshold: float  # bonus capacity above which concentration wins (inf if never)
    dispersion_cost: float
    concentration_cost: float
    dispersion_welfare: float
    concentration_welfare: float
    welfare_verdict: str  # verdict from the direct welfare comparison


def concentration_threshold(c1: float, c2: float, w: float) -> float:
    """Bonus capacity ``c0`` beyond which one pooled station beats two dispersed ones."""
    if c1 * c2 >= w * w:
        return math.inf
    return c1 * c2 * (c1 + c2 + 2 * w) / (w * w - c1 * c2)


def dispersion_vs_concentration(c1: float, c2: float, w: float, c0: float,
                                r: float | None = None) -> DispersionVerdict:
    """Two end stations on the unit interval versus one pooled station with bonus ``c0``.

    Both designs serve all demand.  Costs are per unit mass: the dispersed
    design costs ``(c2 + w)(c1 + w) / (2 (2 c1 c2 + (c1 + c2) w))``; the pooled
    station at one end costs ``1/2 + w / (2 (c1 + c2 + c0))``.
    """
    if not (c1 > 0 and c2 > 0 and w > 0 and c0 >= 0):
        raise ValueError("need c1, c2, w > 0 and c0 >= 0")
    disp = (c2 + w) * (c1 + w) / (2 * (2 * c1 * c2 + (c1 + c2) * w))
    conc = 0.5 + w / (2 * (c1 + c2 + c0))
    thr = concentration_threshold(c1, c2, w)
    if r is None:
        r = max(disp, conc) + 1.0
    verdict = "concentration" if c0 > thr else "dispersion"
    direct = "concentration" if conc < disp else "dispersion"
    return DispersionVerdict(verdict, thr, disp, conc, r - disp, r - conc, direct)


@dataclass(frozen=True)
class DispersionBounds:
    dispersion_sufficient: bool
    concentration_sufficient: bool
    D: float


def spatial_gap_bound(scenario: Scenario, i: int = 0, k: int = 1) -> float:
    """``max_x |delta(x, y_i) - delta(x, y_k)|`` over cell centres and the grid corners."""
    g = scenario.grid
    pts = np.vstack([g.centers, [[g.x_min, g.y_min], [g.x_min, g.y_max],
                                 [g.x_max, g.y_min], [g.x_max, g.y_max]]])
    yi, yk = scenario.positions[i], scenario.positions[k]
    return float(np.max(np.abs(scenario.spatial_cost(pts, yi) - scenario.spatial_cost(pts, yk))))


def dispersion_bounds_general(eta1: float, eta2: float, c1: float, c2: float,
                              D: float) -> DispersionBounds:
    """Sufficient conditions for keeping or closing station 2 from a solved single-type instance."""
    if not D > 0:
        raise ValueError("D must be positive")
    disp = eta2 >= max(eta1, (eta2 - eta1) * c1 / (2 * (c1 + c2)))
    conc = eta2 <= (eta1 - eta2) ** 2 * c1 / (2 * D * (c1 + c2))
    return DispersionBounds(bool(disp), bool(conc), float(D))
