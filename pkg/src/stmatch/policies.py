"""Benchmark policies that decouple spatial assignment from temporal scheduling.

Spatial rules:

* ``Capacity``: minimum travel cost subject to each site's total capacity
  over the horizon, ignoring types.
* ``Distance``: nearest site, ignoring capacity.

Temporal rules:

* ``Random``: assigned demand is spread over the horizon in proportion to
  the rate; overflow beyond total site capacity is dropped pro rata.
* ``Priority``: types are served in urgency order, filling capacity
  chronologically from the start; overflow drops the least urgent first.

All metrics are closed-form expectations.  Costs are averaged over served
demand; uncovered rates are fractions of total demand.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from ._parallel import pmap
from .domain import Scenario, integrate_cost
from .partition import extract_plan
from .solver import SolveOptions, eps_schedule, minimize_annealed, solve_stbd

POLICY_NAMES = (
    "Spatiotemporal",
    "Capacity_Priority",
    "Capacity_Random",
    "Distance_Priority",
    "Distance_Random",
)


@dataclass(frozen=True, eq=False)
class SpatialAssignment:
    """Fraction of every cell's demand sent to each site (shared by all types).

    ``fractions`` has shape ``(n, N)``; columns sum to at most one.
    """

    rule: str
    fractions: np.ndarray
    assigned: np.ndarray  # (n, m) assigned mass per site and type
    travel: np.ndarray  # (n, m) travel cost of the assigned mass
    scaled: bool = False  # demand was scaled down to fit capacity

    @property
    def labels(self) -> np.ndarray:
        """Hard labels (``0`` unassigned, ``i + 1`` site ``i``) by largest fraction."""
        best = np.argmax(self.fractions, axis=0)
        got = self.fractions[best, np.arange(self.fractions.shape[1])] > 0
        return np.where(got, best + 1, 0)


def _assignment(rule: str, scenario: Scenario, frac: np.ndarray, scaled: bool = False) -> SpatialAssignment:
    mass = scenario.demand.masses  # (m, N)
    assigned = frac @ mass.T  # (n, m)
    travel = (frac * scenario.distances) @ mass.T
    return SpatialAssignment(rule, frac, assigned, travel, scaled)


def assign_distance_rule(scenario: Scenario) -> SpatialAssignment:
    """Nearest site for every cell; ties go to the lowest index."""
    near = np.argmin(scenario.distances, axis=0)
    frac = np.zeros_like(scenario.distances)
    frac[near, np.arange(near.size)] = 1.0
    return _assignment("Distance", scenario, frac)


def assign_capacity_rule(scenario: Scenario, options: SolveOptions | None = None) -> SpatialAssignment:
    """Minimum travel cost with each site limited to its total capacity.

    Solved as the dual problem with all types merged and zero waiting cost:
    ``min_eta sum_i C_i eta_i^+ + sum_x mu(x) (max_i [R - eta_i - delta_i(x)])^+``
    with ``R`` above every travel cost, so that all demand is served when it
    fits.  If total demand exceeds total capacity, demand is scaled down
    uniformly and the assignment is flagged.
    """
    options = options or SolveOptions()
    n = scenario.n_stations
    mass = scenario.demand.masses.sum(axis=0)  # (N,)
    caps = np.array([st.capacity.total for st in scenario.stations])
    total = float(mass.sum())
    if total <= 0:
        return _assignment("Capacity", scenario, np.zeros_like(scenario.distances))
    scaled = total > caps.sum()
    if scaled:
        mass = mass * (caps.sum() / total)
    dist = scenario.distances
    R = 2.0 * float(np.max(dist)) + 1.0
    scale = R
    mref = float(mass.sum() + caps.sum())

    def fun(x, eps):
        eta = x * scale
        zc = eta / eps
        sp = eps * np.logaddexp(0.0, zc)
        dsp = np.exp(zc - np.logaddexp(0.0, zc))
        v = (R - eta[:, None] - dist) / eps
        zz = np.vstack([np.zeros((1, v.shape[1])), v])
        lse = logsumexp(zz, axis=0)
        p = np.exp(v - lse[None, :])
        val = float(caps @ sp + np.sum(mass * eps * lse))
        grad = caps * dsp - p @ mass
        return val / (scale * mref), grad / mref

    sched = eps_schedule(scale, options)
    res = minimize_annealed(fun, np.zeros(n), sched, options.tol, options.max_iter,
                            options.stage_max_iter)
    eta = res.x * scale
    v = (R - eta[:, None] - dist) / res.eps
    zz = np.vstack([np.zeros((1, v.shape[1])), v])
    frac = np.exp(v - logsumexp(zz, axis=0)[None, :])
    if scaled:
        frac = frac * (caps.sum() / total)
    return _assignment("Capacity", scenario, frac, scaled)


@dataclass(frozen=True, eq=False)
class TemporalOutcome:
    rule: str
    served: np.ndarray  # (n, m)
    waiting: np.ndarray  # (n, m) total waiting cost of served demand


def _random_unit_cost(scenario: Scenario, i: int, j: int) -> float:
    """Capacity-weighted mean of ``l_j`` over the part of the horizon where ``j`` may be served."""
    cap = scenario.stations[i].capacity
    pcs = scenario.pieces[j]
    mass = float(cap.cumulative(pcs.hi) - cap.cumulative(pcs.lo))
    return integrate_cost(scenario.temporal_costs[j], cap, pcs.lo, pcs.hi) / mass


def schedule_random(assignment: SpatialAssignment, scenario: Scenario) -> TemporalOutcome:
    n, m = assignment.assigned.shape
    served = np.zeros((n, m))
    waiting = np.zeros((n, m))
    for i, st in enumerate(scenario.stations):
        load = assignment.assigned[i].sum()
        if load <= 0:
            continue
        keep = min(1.0, st.capacity.total / load)
        served[i] = assignment.assigned[i] * keep
        for j in range(m):
            if served[i, j] > 0:
                waiting[i, j] = served[i, j] * _random_unit_cost(scenario, i, j)
    return TemporalOutcome("Random", served, waiting)


def urgency_order(scenario: Scenario) -> np.ndarray:
    """Types from most to least urgent (largest sensitivity first, index breaks ties)."""
    s = np.array([getattr(c, "s", 1.0) for c in scenario.temporal_costs])
    return np.lexsort((np.arange(s.size), -s))


def schedule_priority(assignment: SpatialAssignment, scenario: Scenario) -> TemporalOutcome:
    n, m = assignment.assigned.shape
    order = urgency_order(scenario)
    served = np.zeros((n, m))
    waiting = np.zeros((n, m))
    for i, st in enumerate(scenario.stations):
        cap = st.capacity
        left = cap.total
        used = 0.0
        for j in order:
            q = min(assignment.assigned[i, j], left)
            if q <= 0:
                continue
            a, b = cap.inverse_cumulative(used), cap.inverse_cumulative(used + q)
            served[i, j] = q
            waiting[i, j] = integrate_cost(scenario.temporal_costs[j], cap, float(a), float(b))
            used += q
            left -= q
    return TemporalOutcome("Priority", served, waiting)


@dataclass(frozen=True)
class PolicyOutcome:
    policy: str
    spatial: float  # per served unit
    temporal: float  # per served unit
    total: float
    uncovered_total: float
    uncovered_by_type: tuple[float, ...]
    served_mass: float = 0.0
    flags: tuple[str, ...] = field(default=())

    def row(self) -> dict:
        return {
            "policy": self.policy,
            "spatial": self.spatial,
            "temporal": self.temporal,
            "total": self.total,
            "uncovered_total": self.uncovered_total,
            "uncovered_by_type": list(self.uncovered_by_type),
        }


def _outcome(name: str, scenario: Scenario, served_nm: np.ndarray, travel: float, waiting: float,
             flags: tuple[str, ...] = ()) -> PolicyOutcome:
    demand = scenario.demand.masses.sum(axis=1)
    total = float(demand.sum())
    served_j = served_nm.sum(axis=0)
    n_served = float(served_j.sum())
    unc = np.maximum(demand - served_j, 0.0) / total if total > 0 else np.zeros_like(demand)
    sp = travel / n_served if n_served > 0 else 0.0
    tp = waiting / n_served if n_served > 0 else 0.0
    return PolicyOutcome(name, sp, tp, sp + tp, float(unc.sum()), tuple(float(u) for u in unc),
                         n_served, flags)


def evaluate_benchmark(scenario: Scenario, assignment: SpatialAssignment,
                       temporal: TemporalOutcome) -> PolicyOutcome:
    """Per-capita metrics of a decoupled policy; dropped demand leaves pro rata within each site and type."""
    with np.errstate(invalid="ignore", divide="ignore"):
        keep = np.where(assignment.assigned > 0, temporal.served / assignment.assigned, 0.0)
    travel = float(np.sum(keep * assignment.travel))
    flags = ("demand scaled to capacity",) if assignment.scaled else ()
    return _outcome(f"{assignment.rule}_{temporal.rule}", scenario, temporal.served, travel,
                    float(temporal.waiting.sum()), flags)


def spatiotemporal_outcome(scenario: Scenario, options: SolveOptions | None = None) -> PolicyOutcome:
    options = options or SolveOptions()
    eta, rep = solve_stbd(scenario, options)
    plan = extract_plan(scenario, eta, rep.final_eps, options.tol, check=False)
    flags = () if rep.converged else ("solver did not converge",)
    return _outcome("Spatiotemporal", scenario, plan.q, plan.spatial_cost, plan.temporal_cost, flags)


@dataclass(frozen=True)
class ComparisonTable:
    rows: tuple[PolicyOutcome, ...]
    dominance_ok: bool
    tolerance: float
    violations: tuple[str, ...]

    def by_name(self) -> dict[str, PolicyOutcome]:
        return {r.policy: r for r in self.rows}

    def to_dict(self) -> dict:
        return {"rows": [r.row() for r in self.rows], "dominance_ok": self.dominance_ok,
                "tolerance": self.tolerance, "violations": list(self.violations)}


def compare_policies(scenario: Scenario, policies: Sequence[str] | None = None,
                     options: SolveOptions | None = None) -> ComparisonTable:
    """Run the requested policies and check that the joint policy has the lowest total cost."""
    names = tuple(POLICY_NAMES if policies is None else policies)
    bad = [p for p in names if p not in POLICY_NAMES]
    if bad:
        raise ValueError(f"unknown policies {bad}; choose from {list(POLICY_NAMES)}")
    spatial_rules = {p.split("_")[0] for p in names if p != "Spatiotemporal"}
    assign = {}
    if "Capacity" in spatial_rules:
        assign["Capacity"] = assign_capacity_rule(scenario, options)
    if "Distance" in spatial_rules:
        assign["Distance"] = assign_distance_rule(scenario)

    def run(name: str) -> PolicyOutcome:
        if name == "Spatiotemporal":
            return spatiotemporal_outcome(scenario, options)
        rule, sched = name.split("_")
        fn = schedule_priority if sched == "Priority" else schedule_random
        return evaluate_benchmark(scenario, assign[rule], fn(assign[rule], scenario))

    rows = tuple(pmap(run, names))
    tol = 1e-6 * scenario.cost_scale
    viol = []
    best = {r.policy: r for r in rows}.get("Spatiotemporal")
    if best is not None:
        for r in rows:
            if r.policy != "Spatiotemporal" and best.total > r.total + tol:
                viol.append(f"{r.policy} total {r.total:.6g} below Spatiotemporal {best.total:.6g}")
    return ComparisonTable(rows, not viol, tol, tuple(viol))
