"""Envy-free prices, finite slot menus and an envy/IR verifier.

The continuous price at station ``i`` is the upper envelope
``p_i(t) = (max_j [eta_ij - l_j(t)])^+``.  A slot is a maximal interval on
which a single type wins; its price is the capacity-weighted mean of
``eta_ij - l_j`` over the slot.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ._envelope import Envelope, upper_envelope
from .domain import CapacityProfile, Scenario, TemporalCostSpec, integrate_cost


class DegenerateTieError(RuntimeError):
    """Two types tie for the envelope over an interval of positive length."""


class SlotBoundError(RuntimeError):
    """More slots than the crossing bound allows."""


def ds_bound(m: int, s: int) -> int:
    """Longest Davenport-Schinzel sequence on ``m`` symbols for order 1 or 2."""
    if s == 1:
        return m
    if s == 2:
        return 2 * m - 1
    raise ValueError("only crossing orders 1 and 2 are supported")


# ---------------------------------------------------------------------------
# Continuous prices
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class StationPrice:
    """Piecewise-linear price on sub-intervals ``[t0[k], t1[k]]`` from ``p0[k]`` to ``p1[k]``."""

    t0: np.ndarray
    t1: np.ndarray
    p0: np.ndarray
    p1: np.ndarray

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        k = np.clip(np.searchsorted(self.t0, t, side="right") - 1, 0, self.t0.size - 1)
        frac = (t - self.t0[k]) / (self.t1[k] - self.t0[k])
        return self.p0[k] + frac * (self.p1[k] - self.p0[k])

    def breakpoints(self) -> tuple[np.ndarray, np.ndarray]:
        """Breakpoints with consecutive duplicates removed (jumps keep both values)."""
        t = np.column_stack([self.t0, self.t1]).ravel()
        p = np.column_stack([self.p0, self.p1]).ravel()
        keep = np.ones(t.size, dtype=bool)
        keep[1:] = ~((t[1:] == t[:-1]) & (p[1:] == p[:-1]))
        return t[keep], p[keep]


@dataclass(frozen=True, eq=False)
class PricingSchedule:
    stations: tuple[StationPrice, ...]

    def price(self, i: int, t) -> np.ndarray:
        return self.stations[i](t)

    def shifted(self, noise: Sequence[np.ndarray]) -> "PricingSchedule":
        """Copy with per-breakpoint additive perturbations (for negative controls)."""
        out = []
        for sp, nz in zip(self.stations, noise):
            nz = np.asarray(nz, dtype=float)
            out.append(StationPrice(sp.t0, sp.t1, sp.p0 + nz[:-1], sp.p1 + nz[1:]))
        return PricingSchedule(tuple(out))


def _price_from_envelope(env: Envelope, eta_row: np.ndarray) -> StationPrice:
    n = env.t0.size
    if env.values.shape[1] == 0:
        z = np.zeros(n)
        return StationPrice(env.t0, env.t1, z, z.copy())
    j = np.argmax(env.values, axis=1)
    rows = np.arange(n)
    active = env.label > 0
    sl, ic = env.slopes[rows, j], env.intercepts[rows, j]
    p0 = np.where(active, eta_row[j] - (ic + sl * env.t0), 0.0)
    p1 = np.where(active, eta_row[j] - (ic + sl * env.t1), 0.0)
    return StationPrice(env.t0, env.t1, np.maximum(p0, 0.0), np.maximum(p1, 0.0))


def envy_free_prices(eta: np.ndarray, temporal_costs: Sequence[TemporalCostSpec],
                     capacities: Sequence[CapacityProfile]) -> PricingSchedule:
    """Continuous prices ``p_i(t) = (max_j [eta_ij - l_j(t)])^+`` for every station."""
    eta = np.atleast_2d(np.asarray(eta, dtype=float))
    out = []
    for i, cap in enumerate(capacities):
        pcs = [c.pieces(cap.horizon) for c in temporal_costs]
        out.append(_price_from_envelope(upper_envelope(eta[i], pcs, cap), eta[i]))
    return PricingSchedule(tuple(out))


def scenario_prices(scenario: Scenario, eta: np.ndarray) -> PricingSchedule:
    return envy_free_prices(eta, scenario.temporal_costs, [st.capacity for st in scenario.stations])


# ---------------------------------------------------------------------------
# Slots
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Slot:
    start: float
    end: float
    price: float
    target: int  # 0-based type index
    capacity: float  # int_I c dt
    mean_cost: float  # capacity-weighted mean of l_target over the slot


@dataclass(frozen=True)
class SlotSchedule:
    stations: tuple[tuple[Slot, ...], ...]
    bound: int

    @property
    def counts(self) -> list[int]:
        return [len(s) for s in self.stations]

    def to_dict(self) -> dict:
        return {
            "bound": self.bound,
            "stations": [
                [{"start": s.start, "end": s.end, "price": s.price, "type": s.target,
                  "capacity": s.capacity} for s in slots]
                for slots in self.stations
            ],
        }


def slot_mechanism(eta_row: np.ndarray, temporal_costs: Sequence[TemporalCostSpec],
                   capacity: CapacityProfile, crossing_order: int = 2,
                   tie_tol: float = 1e-12) -> tuple[Slot, ...]:
    """Slots of one station: maximal intervals with a unique winning type."""
    pcs = [c.pieces(capacity.horizon) for c in temporal_costs]
    env = upper_envelope(np.asarray(eta_row, dtype=float), pcs, capacity)
    m = len(temporal_costs)
    scale = max(1.0, float(np.max(np.abs(eta_row)))) if m else 1.0
    if m > 1:
        srt = np.sort(env.values, axis=1)
        tied = (env.label > 0) & (srt[:, -1] - srt[:, -2] <= tie_tol * scale) & (env.length > 0)
        if np.any(tied):
            k = int(np.flatnonzero(tied)[0])
            raise DegenerateTieError(
                f"types tie on [{env.t0[k]:.6g}, {env.t1[k]:.6g}]; the preference structure "
                "is degenerate there"
            )
    slots: list[Slot] = []
    acc = None
    for k in range(env.t0.size):
        lab = int(env.label[k])
        if lab == 0:
            if acc is not None:
                slots.append(acc)
                acc = None
            continue
        j = lab - 1
        w = env.rate[k] * env.length[k]
        cost = env.intercepts[k, j] + env.slopes[k, j] * env.mid[k]
        gain = env.values[k, j]
        if acc is not None and acc[3] == j and abs(acc[1] - env.t0[k]) <= 1e-12 * max(1.0, abs(acc[1])):
            a, _, num, jj, cap, cnum = acc
            acc = (a, env.t1[k], num + gain * w, jj, cap + w, cnum + cost * w)
        else:
            if acc is not None:
                slots.append(acc)
            acc = (env.t0[k], env.t1[k], gain * w, j, w, cost * w)
    if acc is not None:
        slots.append(acc)
    out = tuple(Slot(float(a), float(b), float(num / cap), int(j), float(cap), float(cnum / cap))
                for a, b, num, j, cap, cnum in slots)
    bound = ds_bound(m, crossing_order)
    if len(out) > bound:
        raise SlotBoundError(f"{len(out)} slots exceed the bound {bound} for m={m}")
    return out


def scenario_slots(scenario: Scenario, eta: np.ndarray, crossing_order: int = 2) -> SlotSchedule:
    eta = np.asarray(eta, dtype=float)
    per = tuple(slot_mechanism(eta[i], scenario.temporal_costs, st.capacity, crossing_order)
                for i, st in enumerate(scenario.stations))
    return SlotSchedule(per, ds_bound(scenario.n_types, crossing_order))


# ---------------------------------------------------------------------------
# Verification
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EnvyReport:
    max_envy: float
    min_ir: float
    n_agents: int
    n_served: int
    n_unschedulable: int
    max_unmatched_alternative: float


def _min_cost_plus_price(spec: TemporalCostSpec, price: StationPrice) -> float:
    """Exact ``min_t l(t) + p(t)`` over the allowed part of the horizon.

    Price pieces are cut at every kink and domain end of the costs, so on each
    piece both terms are affine and the minimum sits at a piece endpoint.
    """
    pcs = spec.pieces((float(price.t0[0]), float(price.t1[-1])))
    t = np.concatenate([price.t0, price.t1])
    p = np.concatenate([price.p0, price.p1])
    ok = (t >= pcs.lo) & (t <= pcs.hi)
    if not np.any(ok):
        return np.inf
    return float(np.min(np.asarray(spec(t[ok]), dtype=float) + p[ok]))


def _slot_alternatives(spec: TemporalCostSpec, slots: Sequence[Slot], capacity: CapacityProfile):
    """Expected cost plus price of every slot for a given type."""
    vals = []
    for sl in slots:
        vals.append(integrate_cost(spec, capacity, sl.start, sl.end) / sl.capacity + sl.price)
    return np.array(vals)


def verify_envy_free(scenario: Scenario, eta: np.ndarray,
                     prices: PricingSchedule | SlotSchedule, n_agents: int = 10_000,
                     seed: int = 0) -> EnvyReport:
    """Sample agents and measure envy and individual rationality.

    Agents are drawn from the demand density (cell by mass, then uniformly
    inside the cell) and matched by the generalized Laguerre rule at their
    exact position.  A served agent receives a time drawn from its temporal
    cell with density proportional to capacity (continuous prices) or a slot
    targeted at its type (slot menu).
    """
    rng = np.random.default_rng(seed)
    eta = np.asarray(eta, dtype=float)
    grid = scenario.grid
    masses = scenario.demand.masses
    tot = masses.sum()
    if tot <= 0:
        return EnvyReport(0.0, 0.0, 0, 0, 0, -np.inf)
    flat = masses.ravel() / tot
    pick = rng.choice(flat.size, size=n_agents, p=flat)
    types, cells = np.divmod(pick, grid.n_cells)
    ctr = grid.centers[cells]
    pos = ctr + (rng.random((n_agents, 2)) - 0.5) * np.array([grid.dx, grid.dy])
    dist = np.stack([scenario.spatial_cost(pos, y) for y in scenario.positions], axis=1)  # (A, n)
    r = scenario.reward
    n, m = scenario.n_stations, scenario.n_types
    use_slots = isinstance(prices, SlotSchedule)

    # best net cost per (station, type) over all times
    alt = np.full((n, m), np.inf)
    slot_cost: list[list[np.ndarray]] = []
    for i, st in enumerate(scenario.stations):
        row = []
        for j, spec in enumerate(scenario.temporal_costs):
            if use_slots:
                v = _slot_alternatives(spec, prices.stations[i], st.capacity)
                row.append(v)
                alt[i, j] = v.min() if v.size else np.inf
            else:
                alt[i, j] = _min_cost_plus_price(spec, prices.stations[i])
        slot_cost.append(row)

    envs = None if use_slots else [
        upper_envelope(eta[i], scenario.pieces, st.capacity) for i, st in enumerate(scenario.stations)
    ]
    max_envy, min_ir, unsched, served_n = -np.inf, np.inf, 0, 0
    worst_unmatched = -np.inf
    for a in range(n_agents):
        j = types[a]
        tot_cost = dist[a] + eta[:, j]
        i = int(np.argmin(tot_cost))
        best_alt = float(np.max(r - dist[a] - alt[:, j]))
        if tot_cost[i] > r:
            worst_unmatched = max(worst_unmatched, best_alt)
            max_envy = max(max_envy, best_alt)
            continue
        if use_slots:
            mine = [k for k, sl in enumerate(prices.stations[i]) if sl.target == j]
            if not mine:
                unsched += 1
                continue
            caps = np.array([prices.stations[i][k].capacity for k in mine])
            k = mine[int(rng.choice(len(mine), p=caps / caps.sum()))]
            paid = slot_cost[i][j][k]
        else:
            env = envs[i]
            sel = np.flatnonzero(env.label == j + 1)
            if sel.size == 0:
                unsched += 1
                continue
            w = env.rate[sel] * env.length[sel]
            k = sel[int(rng.choice(sel.size, p=w / w.sum()))]
            t = env.t0[k] + rng.random() * env.length[k]
            paid = float(scenario.temporal_costs[j](t)) + float(prices.stations[i](t))
        u = r - dist[a, i] - paid
        served_n += 1
        min_ir = min(min_ir, u)
        max_envy = max(max_envy, best_alt - u)
    return EnvyReport(float(max_envy), float(min_ir if served_n else 0.0), n_agents, served_n,
                      unsched, float(worst_unmatched))
