"""Matching plans built from dual weights, and structural verifiers.

Labels follow one convention throughout: ``0`` means unmatched (or idle in
time) and ``k + 1`` refers to station ``k`` (spatial labels) or type ``k``
(temporal labels).  Python-facing indices of stations and types are 0-based.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.ndimage import binary_dilation

from ._envelope import Envelope, upper_envelope
from .domain import (
    Scenario,
    ScenarioError,
    SpatialGrid,
    Station,
    TemporalCostSpec,
    check_preference_mode,
    check_sensitivity_mode,
)
from .solver import envelopes, spatial_assignment


class PlanInconsistencyError(RuntimeError):
    """Spatial and temporal masses disagree beyond tolerance."""


class ModeError(ScenarioError):
    """A verifier was called on costs outside its structural assumption."""


Interval = tuple[float, float]


@dataclass(frozen=True, eq=False)
class SpatialPartition:
    labels: np.ndarray  # (m, N) ints in {0..n}
    masses: np.ndarray  # (n, m) masses of the hard cells

    @property
    def n_types(self) -> int:
        return self.labels.shape[0]


@dataclass(frozen=True, eq=False)
class StationCells:
    station: int
    intervals: tuple[tuple[Interval, ...], ...]  # per type
    idle: tuple[Interval, ...]
    capacity: np.ndarray  # (m,) capacity mass per temporal cell
    cost: np.ndarray  # (m,) int_{T_j} l_j c dt


@dataclass(frozen=True, eq=False)
class TemporalPartition:
    stations: tuple[StationCells, ...]

    def intervals(self, i: int, j: int) -> tuple[Interval, ...]:
        return self.stations[i].intervals[j]


def spatial_cells(scenario: Scenario, eta: np.ndarray, r: float | None = None) -> SpatialPartition:
    """Generalized Laguerre labels: argmin of ``delta + eta`` if it is at most ``r``."""
    eta = np.asarray(eta, dtype=float)
    r = scenario.reward if r is None else r
    m = scenario.n_types
    labels = np.zeros((m, scenario.grid.n_cells), dtype=int)
    masses = np.zeros((scenario.n_stations, m))
    for j in range(m):
        tot = scenario.distances + eta[:, j][:, None]
        best = np.argmin(tot, axis=0)
        val = tot[best, np.arange(tot.shape[1])]
        served = val <= r
        labels[j] = np.where(served, best + 1, 0)
        np.add.at(masses[:, j], best[served], scenario.demand.masses[j][served])
    return SpatialPartition(labels, masses)


def _cells_from_envelope(i: int, env: Envelope, m: int) -> StationCells:
    ints = tuple(tuple(env.intervals(j + 1)) for j in range(m))
    return StationCells(i, ints, tuple(env.intervals(0)), env.type_capacity(m), env.type_cost(m))


def temporal_cells(station: Station, temporal_costs: Sequence[TemporalCostSpec],
                   eta_row: np.ndarray) -> StationCells:
    """Exact temporal cells of one station: where ``l_j - eta_j <= min(0, l_k - eta_k)``."""
    horizon = station.capacity.horizon
    pieces = [c.pieces(horizon) for c in temporal_costs]
    env = upper_envelope(np.asarray(eta_row, dtype=float), pieces, station.capacity)
    return _cells_from_envelope(station.id, env, len(temporal_costs))


@dataclass(frozen=True, eq=False)
class MatchingPlan:
    """Masses, partitions and welfare of a matching.

    ``q`` holds the spatial-side masses (demand actually sent to each
    station); ``q_temporal`` the capacity of the temporal cells.  They agree
    up to ``residual`` (relative to total demand plus capacity).
    """

    spatial: SpatialPartition
    temporal: TemporalPartition
    q: np.ndarray
    q_temporal: np.ndarray
    reward_total: float
    spatial_cost: float
    temporal_cost: float
    served: np.ndarray
    uncovered: np.ndarray
    residual: float
    grid: SpatialGrid
    mode: str | None = None
    eps: float = 0.0
    fractions: np.ndarray | None = None  # (m, n, N) soft assignment
    meta: dict = field(default_factory=dict)

    @property
    def welfare(self) -> float:
        return self.reward_total - self.spatial_cost - self.temporal_cost

    def to_dict(self) -> dict:
        return {
            "q": self.q.tolist(),
            "q_temporal": self.q_temporal.tolist(),
            "welfare": self.welfare,
            "reward_total": self.reward_total,
            "spatial_cost": self.spatial_cost,
            "temporal_cost": self.temporal_cost,
            "served": self.served.tolist(),
            "uncovered": self.uncovered.tolist(),
            "residual": self.residual,
            "eps": self.eps,
            "temporal_cells": [
                {
                    "station": sc.station,
                    "types": [[list(iv) for iv in ivs] for ivs in sc.intervals],
                    "idle": [list(iv) for iv in sc.idle],
                }
                for sc in self.temporal.stations
            ],
        }


def extract_plan(scenario: Scenario, eta: np.ndarray, eps: float = 0.0, tol: float = 1e-5,
                 check: bool = True) -> MatchingPlan:
    """Assemble the matching plan induced by ``eta``.

    ``eps`` must be the final temperature used by the solver so that boundary
    atoms are split the same way.  With ``check`` set, a mismatch between the
    two sides above ``10 * tol`` raises :class:`PlanInconsistencyError`.
    """
    eta = np.asarray(eta, dtype=float)
    m = scenario.n_types
    frac = spatial_assignment(scenario, eta, eps)  # (m, n, N)
    mass = scenario.demand.masses
    flows = frac * mass[:, None, :]
    q = flows.sum(axis=2).T  # (n, m)
    spatial_cost = float(np.sum(flows * scenario.distances[None, :, :]))
    envs = envelopes(scenario, eta)
    cells = tuple(_cells_from_envelope(i, env, m) for i, env in enumerate(envs))
    q_t = np.stack([c.capacity for c in cells])
    temporal_cost = float(sum(c.cost.sum() for c in cells))
    served = q.sum(axis=0)
    total = mass.sum(axis=1)
    mref = scenario.total_demand + scenario.total_capacity
    resid = float(np.max(np.abs(q_t - q))) / (mref if mref > 0 else 1.0) if q.size else 0.0
    if check and resid > 10 * tol:
        raise PlanInconsistencyError(
            f"spatial and temporal masses differ by {resid:.3e} (relative), above {10 * tol:.1e}"
        )
    return MatchingPlan(
        spatial=spatial_cells(scenario, eta),
        temporal=TemporalPartition(cells),
        q=q,
        q_temporal=q_t,
        reward_total=float(scenario.reward * served.sum()),
        spatial_cost=spatial_cost,
        temporal_cost=temporal_cost,
        served=served,
        uncovered=np.maximum(total - served, 0.0),
        residual=resid,
        grid=scenario.grid,
        mode=scenario.mode,
        eps=eps,
        fractions=frac,
    )


# ---------------------------------------------------------------------------
# Structural verifiers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CheckResult:
    ok: bool
    violations: tuple[str, ...]

    def __bool__(self) -> bool:
        return self.ok


def _span_tol(plan: MatchingPlan) -> float:
    ends = [iv[1] for sc in plan.temporal.stations for ivs in (*sc.intervals, sc.idle) for iv in ivs]
    starts = [iv[0] for sc in plan.temporal.stations for ivs in (*sc.intervals, sc.idle) for iv in ivs]
    span = (max(ends) - min(starts)) if ends else 1.0
    return 1e-9 * max(span, 1.0)


def _clip(ivs: Sequence[Interval], lo: float, hi: float) -> list[Interval]:
    out = []
    for a, b in ivs:
        a2, b2 = max(a, lo), min(b, hi)
        if b2 > a2:
            out.append((a2, b2))
    return out


def check_sensitivity_priority(plan: MatchingPlan,
                               temporal_costs: Sequence[TemporalCostSpec]) -> CheckResult:
    """More sensitive types are served closer to the common preferred time, on both sides."""
    try:
        check_sensitivity_mode(temporal_costs)
    except ScenarioError as exc:
        raise ModeError(f"sensitivity-priority check needs sensitivity mode: {exc}") from exc
    tau = temporal_costs[0].tau
    tol = _span_tol(plan)
    viol = []
    m = len(temporal_costs)
    for sc in plan.temporal.stations:
        for j in range(m):
            for k in range(j + 1, m):
                late_j = _clip(sc.intervals[j], tau, np.inf)
                late_k = _clip(sc.intervals[k], tau, np.inf)
                if late_j and late_k and max(b for _, b in late_j) > min(a for a, _ in late_k) + tol:
                    viol.append(f"station {sc.station}: type {j} served after type {k} on the late side")
                early_j = _clip(sc.intervals[j], -np.inf, tau)
                early_k = _clip(sc.intervals[k], -np.inf, tau)
                if early_j and early_k and min(a for a, _ in early_j) < max(b for _, b in early_k) - tol:
                    viol.append(f"station {sc.station}: type {j} served before type {k} on the early side")
    return CheckResult(not viol, tuple(viol))


def check_order_preserving(plan: MatchingPlan,
                           temporal_costs: Sequence[TemporalCostSpec]) -> CheckResult:
    """Types with earlier preferred times are served weakly earlier at every station."""
    try:
        check_preference_mode(temporal_costs)
    except ScenarioError as exc:
        raise ModeError(f"order-preservation check needs preference mode: {exc}") from exc
    order = np.argsort([c.tau for c in temporal_costs], kind="stable")
    tol = _span_tol(plan)
    viol = []
    for sc in plan.temporal.stations:
        for p, a in enumerate(order):
            for b in order[p + 1:]:
                ia, ib = sc.intervals[a], sc.intervals[b]
                if ia and ib and max(e for _, e in ia) > min(s for s, _ in ib) + tol:
                    viol.append(f"station {sc.station}: type {a} (earlier preference) served after type {b}")
    return CheckResult(not viol, tuple(viol))


def check_monotone_coverage(plan: MatchingPlan) -> CheckResult:
    """Served region of a more sensitive type lies inside that of a less sensitive one.

    One grid cell of slack is allowed around each boundary.
    """
    if plan.mode != "sensitivity":
        raise ModeError("monotone-coverage check needs a plan solved in sensitivity mode")
    grid = plan.grid
    served = plan.spatial.labels > 0
    viol = []
    m = served.shape[0]
    for j in range(m):
        for k in range(j + 1, m):
            loose = binary_dilation(served[k].reshape(grid.ny, grid.nx), np.ones((3, 3), dtype=bool))
            bad = served[j] & ~loose.ravel()
            if np.any(bad):
                viol.append(f"type {j} served in {int(bad.sum())} cells where less sensitive type {k} is not")
    return CheckResult(not viol, tuple(viol))
