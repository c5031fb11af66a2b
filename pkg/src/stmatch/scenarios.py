"""Synthetic scenario builders.

:func:`generate` produces a vaccination-like instance: urgency types with
one-sided linear waiting costs ``0.1 * (1 + 2 * IFR_j) * t``, gaussian demand
blobs on a square city, and two classes of sites whose capacity rises and
then falls over the horizon.  The remaining builders produce the small
reference instances used by the analytic oracles and the tests.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from typing import Any, Mapping

import numpy as np

from .domain import (
    CapacityProfile,
    DemandField,
    PowerDistance,
    Scenario,
    ScenarioError,
    SpatialGrid,
    Station,
    TwoPieceLinear,
    gaussian_blob,
)


@dataclass(frozen=True)
class GeneratorSpec:
    """Parameters of :func:`generate`.

    Demand and capacity totals are in millions of people and doses; lengths
    are kilometres and times are days.
    """

    seed: int = 0
    extent: float = 20.0
    resolution: int = 30
    ifr_percent: tuple[float, ...] = (4.6, 0.3, 0.02, 0.002)
    type_weights: tuple[float, ...] = (0.05, 0.2, 0.3, 0.45)
    blobs_per_type: int = 3
    blob_sigma: tuple[float, float] = (2.0, 5.0)
    total_demand: float = 1.65
    total_capacity: float = 2.19
    sites_per_class: tuple[int, ...] = (2, 3)
    class_capacity_share: tuple[float, ...] = (0.6, 0.4)
    class_peak_day: tuple[float, ...] = (60.0, 90.0)
    capacity_shape: str = "hump"
    capacity_pieces: int = 30
    horizon: float = 300.0
    cost_base: float = 0.1
    placement: str = "random"

    def __post_init__(self) -> None:
        m = len(self.ifr_percent)
        if m < 1 or len(self.type_weights) != m:
            raise ScenarioError("generator: ifr_percent and type_weights need the same nonzero length")
        if any(w < 0 for w in self.type_weights) or sum(self.type_weights) <= 0:
            raise ScenarioError("generator: type_weights must be nonnegative with a positive sum")
        if any(a <= b for a, b in zip(self.ifr_percent, self.ifr_percent[1:])):
            raise ScenarioError("generator: ifr_percent must be strictly decreasing (urgency order)")
        k = len(self.sites_per_class)
        if k < 1 or len(self.class_capacity_share) != k or len(self.class_peak_day) != k:
            raise ScenarioError("generator: site class lists must have equal nonzero length")
        if any(n < 1 for n in self.sites_per_class):
            raise ScenarioError("generator: every site class needs at least one site")
        if any(s <= 0 for s in self.class_capacity_share):
            raise ScenarioError("generator: class capacity shares must be positive")
        if self.capacity_shape not in ("hump", "constant"):
            raise ScenarioError("generator: capacity_shape must be 'hump' or 'constant'")
        if self.placement not in ("random", "grid"):
            raise ScenarioError("generator: placement must be 'random' or 'grid'")
        if self.blobs_per_type < 0 or self.resolution < 1 or self.capacity_pieces < 1:
            raise ScenarioError("generator: counts must be positive")
        if not (self.extent > 0 and self.horizon > 0 and self.total_capacity > 0):
            raise ScenarioError("generator: extent, horizon and total_capacity must be positive")
        if self.total_demand < 0:
            raise ScenarioError("generator: total_demand must be >= 0")

    @classmethod
    def from_dict(cls, cfg: Mapping[str, Any]) -> "GeneratorSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(cfg) - known
        if unknown:
            raise ScenarioError(f"generator: unknown field(s) {sorted(unknown)}")
        kw = {k: tuple(v) if isinstance(v, list) else v for k, v in cfg.items()}
        return cls(**kw)

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}

    @property
    def slack_ratio(self) -> float:
        return self.total_capacity / self.total_demand if self.total_demand > 0 else math.inf


def hump_profile(horizon: float, peak: float, pieces: int, total: float) -> CapacityProfile:
    """Piecewise-constant rise-then-fall rate with the given total.

    The shape is ``(t / peak) * exp(1 - t / peak)`` plus a 10% floor, averaged
    over equal pieces.
    """
    edges = np.linspace(0.0, horizon, pieces + 1)

    def antideriv(t):
        u = t / peak
        # integral of u * exp(1 - u) dt = -peak * (u + 1) * exp(1 - u)
        return -peak * (u + 1.0) * np.exp(1.0 - u) + 0.1 * t

    mass = np.diff(antideriv(edges))
    rates = mass / np.diff(edges)
    rates *= total / mass.sum()
    return CapacityProfile(edges, rates)


def _place_sites(rng: np.random.Generator, spec: GeneratorSpec) -> np.ndarray:
    n = sum(spec.sites_per_class)
    L = spec.extent
    if spec.placement == "random":
        return rng.uniform(0.1 * L, 0.9 * L, size=(n, 2))
    k = math.ceil(math.sqrt(n))
    g = (np.arange(k) + 0.5) / k * L
    pts = np.array([(x, y) for y in g for x in g])
    return pts[:n]


def generate(spec: GeneratorSpec) -> Scenario:
    """Build a reproducible synthetic scenario from ``spec``."""
    rng = np.random.default_rng(spec.seed)
    L = spec.extent
    grid = SpatialGrid(0.0, L, 0.0, L, spec.resolution, spec.resolution)
    m = len(spec.ifr_percent)
    w = np.asarray(spec.type_weights, dtype=float)
    w = w / w.sum()

    # one set of blob centres shared by all types, with type-specific mass mixes,
    # so that neighbourhoods have different age compositions
    centres = rng.uniform(0.15 * L, 0.85 * L, size=(spec.blobs_per_type, 2))
    sigmas = rng.uniform(spec.blob_sigma[0], spec.blob_sigma[1], size=spec.blobs_per_type)
    dens = np.zeros((m, grid.n_cells))
    for j in range(m):
        if spec.blobs_per_type == 0:
            break
        mix = rng.dirichlet(np.ones(spec.blobs_per_type))
        for k in range(spec.blobs_per_type):
            dens[j] += gaussian_blob(grid, centres[k], float(sigmas[k]),
                                     spec.total_demand * w[j] * mix[k])
    demand = DemandField(grid, dens)

    pos = _place_sites(rng, spec)
    share = np.asarray(spec.class_capacity_share, dtype=float)
    share = share / share.sum()
    stations = []
    idx = 0
    for c, count in enumerate(spec.sites_per_class):
        per_site = spec.total_capacity * share[c] / count
        for _ in range(count):
            if spec.capacity_shape == "hump":
                cap = hump_profile(spec.horizon, spec.class_peak_day[c], spec.capacity_pieces, per_site)
            else:
                cap = CapacityProfile.constant(per_site / spec.horizon, (0.0, spec.horizon))
            stations.append(Station(idx, (float(pos[idx, 0]), float(pos[idx, 1])), cap))
            idx += 1

    costs = tuple(
        TwoPieceLinear(spec.cost_base * (1 + 2 * ifr), b=0.0, h=1.0, tau=0.0, early=False)
        for ifr in spec.ifr_percent
    )
    spatial = PowerDistance(1.0, 1.0)
    max_dist = L * math.sqrt(2.0)
    reward = max_dist + costs[0].s * spec.horizon + 1.0
    site_class = [c for c, count in enumerate(spec.sites_per_class) for _ in range(count)]
    meta = {"generator": spec.to_dict(), "site_class": site_class, "slack_ratio": spec.slack_ratio}
    return Scenario(demand, tuple(stations), costs, spatial, reward, "sensitivity",
                    f"synthetic-{spec.seed}", meta)


# ---------------------------------------------------------------------------
# Reference instances
# ---------------------------------------------------------------------------


def _hotelling_base(c1: float, c2: float, resolution: int, horizon: float | None):
    if horizon is None:
        horizon = max(4.0, 2.0 / min(c1, c2))
    grid = SpatialGrid(0.0, 1.0, -0.5, 0.5, resolution, 1)
    stations = (
        Station(0, (0.0, 0.0), CapacityProfile.constant(c1, (0.0, horizon))),
        Station(1, (1.0, 0.0), CapacityProfile.constant(c2, (0.0, horizon))),
    )
    return grid, stations


def hotelling_scenario(c1: float, c2: float, w: float, r: float, resolution: int = 400,
                       horizon: float | None = None) -> Scenario:
    """Two stations at the ends of the unit interval, uniform demand, waiting cost ``w * t``."""
    grid, stations = _hotelling_base(c1, c2, resolution, horizon)
    demand = DemandField(grid, np.ones((1, resolution)))
    cost = TwoPieceLinear(1.0, b=0.0, h=w, tau=0.0, early=False)
    return Scenario(demand, stations, (cost,), PowerDistance(1.0, 1.0), r, None,
                    "hotelling", {"params": [c1, c2, w, r]})


def hotelling_uniform_scenario(c1: float, c2: float, w: float, r: float, n_types: int = 20,
                               resolution: int = 400, horizon: float | None = None) -> Scenario:
    """As :func:`hotelling_scenario` with sensitivity ``alpha`` uniform on ``[0, 1]``.

    Type ``j`` has ``alpha_j = (m - j - 0.5) / m`` (most sensitive first) and mass ``1 / m``.
    """
    grid, stations = _hotelling_base(c1, c2, resolution, horizon)
    m = n_types
    alphas = (m - 1 - np.arange(m) + 0.5) / m
    demand = DemandField(grid, np.full((m, resolution), 1.0 / m))
    costs = tuple(TwoPieceLinear(float(a), b=0.0, h=w, tau=0.0, early=False) for a in alphas)
    return Scenario(demand, stations, costs, PowerDistance(1.0, 1.0), r, "sensitivity",
                    "hotelling-uniform", {"params": [c1, c2, w, r], "alphas": alphas.tolist()})


def three_type_scenario() -> Scenario:
    """One station at rate 8 serving volumes (12, 15, 19) of three types.

    Sensitivities are (1, 0.7, 0.5), the early slope is 2 and the late slope 1
    around a common preferred time 0.
    """
    grid = SpatialGrid(0.0, 1.0, 0.0, 1.0, 1, 1)
    demand = DemandField(grid, np.array([[12.0], [15.0], [19.0]]))
    station = Station(0, (0.5, 0.5), CapacityProfile.constant(8.0, (-10.0, 10.0)))
    costs = tuple(TwoPieceLinear(s, b=2.0, h=1.0, tau=0.0) for s in (1.0, 0.7, 0.5))
    return Scenario(demand, (station,), costs, PowerDistance(1.0, 1.0), 100.0, "sensitivity", "three_types")


def random_scenario(seed: int, n_stations: int = 2, n_types: int = 2, resolution: int = 12,
                    mode: str | None = "sensitivity", constant_capacity: bool = True,
                    reward: float | None = None, half_horizon: float = 4.0) -> Scenario:
    """Small random instance on the unit square for tests.

    ``mode="sensitivity"`` gives two-piece costs around a common preferred
    time with decreasing sensitivities; ``mode="preference"`` gives a common
    shape at distinct preferred times; ``None`` mixes both.
    """
    rng = np.random.default_rng(seed)
    grid = SpatialGrid(0.0, 1.0, 0.0, 1.0, resolution, resolution)
    dens = np.zeros((n_types, grid.n_cells))
    for j in range(n_types):
        for _ in range(2):
            dens[j] += gaussian_blob(grid, rng.uniform(0.2, 0.8, 2), float(rng.uniform(0.15, 0.4)),
                                     float(rng.uniform(0.3, 1.0)))
    demand = DemandField(grid, dens)
    total = dens.sum() * grid.cell_area
    T = half_horizon
    stations = []
    for i in range(n_stations):
        share = float(rng.uniform(0.5, 1.5)) * total / n_stations
        if constant_capacity:
            cap = CapacityProfile.constant(share / 2.0, (-T, T))
        else:
            bp = np.linspace(-T, T, 5)
            rates = rng.uniform(0.5, 1.5, 4)
            rates *= share / 2.0 / rates.mean()
            cap = CapacityProfile(bp, rates)
        stations.append(Station(i, tuple(rng.uniform(0.1, 0.9, 2)), cap))
    b, h = float(rng.uniform(0.5, 2.0)), float(rng.uniform(0.5, 2.0))
    if mode == "sensitivity":
        s = np.sort(rng.uniform(0.2, 2.0, n_types))[::-1]
        s = s + 0.05 * np.arange(n_types)[::-1]  # keep strictly decreasing
        costs = tuple(TwoPieceLinear(float(x), b, h, 0.0) for x in s)
    elif mode == "preference":
        taus = np.sort(rng.uniform(-2.0, 2.0, n_types)) + 0.1 * np.arange(n_types)
        costs = tuple(TwoPieceLinear(1.0, b, h, float(t)) for t in taus)
    else:
        costs = tuple(TwoPieceLinear(float(rng.uniform(0.2, 2.0)), float(rng.uniform(0.5, 2)),
                                     float(rng.uniform(0.5, 2)), float(rng.uniform(-1, 1)))
                      for _ in range(n_types))
    if reward is None:
        reward = float(rng.uniform(0.6, 1.6))
    return Scenario(demand, tuple(stations), costs, PowerDistance(1.0, 1.0), reward, mode,
                    f"random-{seed}")

