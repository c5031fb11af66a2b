"""Problem-instance types, cost evaluation, grid quadrature and scenario loading.

All types here are immutable.  Arrays held by them are copied and marked
read-only on construction so that a :class:`Scenario` can be shared freely
between threads.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Mapping, Sequence, Union

import numpy as np

try:  # Python >= 3.11
    import tomllib as _toml
except ModuleNotFoundError:  # pragma: no cover - exercised on 3.10 only
    import tomli as _toml


class ScenarioError(ValueError):
    """Raised when a scenario description is malformed or violates an invariant."""


def _frozen(a: Any, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


# ---------------------------------------------------------------------------
# Space
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SpatialGrid:
    """Uniform rectangular grid of ``nx * ny`` cells.

    Cells are indexed row-major, ``k = iy * nx + ix``.
    """

    x_min: float
    x_max: float
    y_min: float
    y_max: float
    nx: int
    ny: int

    def __post_init__(self) -> None:
        if self.nx < 1 or self.ny < 1:
            raise ScenarioError("grid.resolution must be >= 1 on each axis")
        if not (self.x_max > self.x_min and self.y_max > self.y_min):
            raise ScenarioError("grid bounds must satisfy min < max on each axis")

    @property
    def n_cells(self) -> int:
        return self.nx * self.ny

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.nx

    @property
    def dy(self) -> float:
        return (self.y_max - self.y_min) / self.ny

    @property
    def cell_area(self) -> float:
        return self.dx * self.dy

    @cached_property
    def centers(self) -> np.ndarray:
        """Cell centres, shape ``(n_cells, 2)``."""
        xs = self.x_min + (np.arange(self.nx) + 0.5) * self.dx
        ys = self.y_min + (np.arange(self.ny) + 0.5) * self.dy
        gx, gy = np.meshgrid(xs, ys)
        return _frozen(np.column_stack([gx.ravel(), gy.ravel()]))

    def contains(self, point: Sequence[float]) -> bool:
        x, y = float(point[0]), float(point[1])
        return self.x_min <= x <= self.x_max and self.y_min <= y <= self.y_max

    def cell_of(self, points: np.ndarray) -> np.ndarray:
        """Index of the cell containing each point (points on the far edge map inward)."""
        pts = np.atleast_2d(points)
        ix = np.clip(((pts[:, 0] - self.x_min) / self.dx).astype(int), 0, self.nx - 1)
        iy = np.clip(((pts[:, 1] - self.y_min) / self.dy).astype(int), 0, self.ny - 1)
        return iy * self.nx + ix


@dataclass(frozen=True, eq=False)
class DemandField:
    """Per-type demand densities (mass per unit area) rasterized on a grid."""

    grid: SpatialGrid
    densities: np.ndarray  # shape (m, n_cells)

    def __post_init__(self) -> None:
        dens = np.array(self.densities, dtype=float)
        if dens.ndim == 1:
            dens = dens[None, :]
        if dens.ndim != 2 or dens.shape[1] != self.grid.n_cells:
            raise ScenarioError(
                f"demand densities must have shape (m, {self.grid.n_cells}), got {dens.shape}"
            )
        if not np.all(np.isfinite(dens)):
            raise ScenarioError("demand density must be finite")
        if np.any(dens < 0):
            raise ScenarioError("demand density must be nonnegative")
        object.__setattr__(self, "densities", _frozen(dens))

    @property
    def n_types(self) -> int:
        return self.densities.shape[0]

    @cached_property
    def masses(self) -> np.ndarray:
        """Cell masses ``mu_j(cell) * cell_area``, shape ``(m, n_cells)``."""
        return _frozen(self.densities * self.grid.cell_area)

    def total_mass(self, j: int | None = None) -> float:
        if j is None:
            return float(self.masses.sum())
        return float(self.masses[j].sum())


def spatial_integral(field: DemandField, j: int, weight) -> float:
    """Midpoint-rule integral of ``weight(x) * mu_j(x)`` over the grid.

    ``weight`` is either a callable mapping an ``(N, 2)`` array of cell
    centres to ``N`` values, or an array of per-cell values.
    """
    if not 0 <= j < field.n_types:
        raise IndexError(f"type index {j} out of range")
    if callable(weight):
        w = np.asarray(weight(field.grid.centers), dtype=float)
    else:
        w = np.asarray(weight, dtype=float)
    w = np.broadcast_to(w, (field.grid.n_cells,))
    return float(np.sum(w * field.masses[j]))


# ---------------------------------------------------------------------------
# Time
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CapacityProfile:
    """Piecewise-constant service rate ``c(t)`` on ``[breakpoints[0], breakpoints[-1]]``."""

    breakpoints: np.ndarray
    rates: np.ndarray

    def __post_init__(self) -> None:
        bp = np.array(self.breakpoints, dtype=float).ravel()
        rt = np.array(self.rates, dtype=float).ravel()
        if bp.size < 2:
            raise ScenarioError("capacity breakpoints need at least two entries")
        if rt.size != bp.size - 1:
            raise ScenarioError("capacity needs exactly one rate per breakpoint interval")
        if not np.all(np.isfinite(bp)) or np.any(np.diff(bp) <= 0):
            raise ScenarioError("capacity breakpoints must be strictly increasing")
        if not np.all(np.isfinite(rt)) or np.any(rt <= 0):
            raise ScenarioError("capacity rates must be positive")
        object.__setattr__(self, "breakpoints", _frozen(bp))
        object.__setattr__(self, "rates", _frozen(rt))

    @classmethod
    def constant(cls, rate: float, horizon: tuple[float, float]) -> "CapacityProfile":
        return cls(np.array(horizon, dtype=float), np.array([rate], dtype=float))

    @property
    def horizon(self) -> tuple[float, float]:
        return float(self.breakpoints[0]), float(self.breakpoints[-1])

    @property
    def total(self) -> float:
        return float(np.sum(self.rates * np.diff(self.breakpoints)))

    @property
    def is_constant(self) -> bool:
        return bool(np.all(self.rates == self.rates[0]))

    def rate_at(self, t) -> np.ndarray:
        idx = np.clip(np.searchsorted(self.breakpoints, t, side="right") - 1, 0, self.rates.size - 1)
        return self.rates[idx]

    def cumulative(self, t) -> np.ndarray:
        """``int_{T0}^{t} c``, clipped to the horizon."""
        t = np.clip(np.asarray(t, dtype=float), self.breakpoints[0], self.breakpoints[-1])
        cum = np.concatenate([[0.0], np.cumsum(self.rates * np.diff(self.breakpoints))])
        idx = np.clip(np.searchsorted(self.breakpoints, t, side="right") - 1, 0, self.rates.size - 1)
        return cum[idx] + self.rates[idx] * (t - self.breakpoints[idx])

    def inverse_cumulative(self, mass) -> np.ndarray:
        """Smallest time at which cumulative capacity reaches ``mass``."""
        mass = np.clip(np.asarray(mass, dtype=float), 0.0, self.total)
        cum = np.concatenate([[0.0], np.cumsum(self.rates * np.diff(self.breakpoints))])
        idx = np.clip(np.searchsorted(cum, mass, side="left") - 1, 0, self.rates.size - 1)
        return self.breakpoints[idx] + (mass - cum[idx]) / self.rates[idx]


@dataclass(frozen=True, eq=False)
class AffinePieces:
    """A temporal cost restricted to a horizon, as affine pieces.

    On ``[knots[k], knots[k+1]]`` the cost equals ``intercept[k] + slope[k] * t``.
    Outside ``[lo, hi]`` the cost is infinite (service forbidden).
    """

    knots: np.ndarray
    slope: np.ndarray
    intercept: np.ndarray
    lo: float
    hi: float

    def locate(self, t) -> np.ndarray:
        return np.clip(np.searchsorted(self.knots, t, side="right") - 1, 0, self.slope.size - 1)


@dataclass(frozen=True)
class TwoPieceLinear:
    """``l(t) = s * (b * (tau - t)^+ + h * (t - tau)^+)``.

    ``early=False`` forbids service before ``tau`` (an infinite early slope);
    ``late=False`` forbids service after ``tau``.  Infinite slopes are kept as
    flags so that derived constants stay exact.
    """

    s: float
    b: float = 1.0
    h: float = 1.0
    tau: float = 0.0
    early: bool = True
    late: bool = True

    def __post_init__(self) -> None:
        if not (math.isfinite(self.s) and self.s > 0):
            raise ScenarioError("temporal sensitivity s must be positive")
        if self.early and not (math.isfinite(self.b) and self.b >= 0):
            raise ScenarioError("early slope b must be finite and >= 0")
        if self.late and not (math.isfinite(self.h) and self.h >= 0):
            raise ScenarioError("late slope h must be finite and >= 0")
        if not (self.early or self.late):
            raise ScenarioError("temporal cost cannot forbid both early and late service")
        if not math.isfinite(self.tau):
            raise ScenarioError("preferred time tau must be finite")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        early = np.maximum(self.tau - t, 0.0)
        late = np.maximum(t - self.tau, 0.0)
        b = self.b if self.early else 0.0
        h = self.h if self.late else 0.0
        val = self.s * (b * early + h * late)
        if not self.early:
            val = np.where(t < self.tau, np.inf, val)
        if not self.late:
            val = np.where(t > self.tau, np.inf, val)
        return val

    @property
    def kinks(self) -> np.ndarray:
        return np.array([self.tau])

    def pieces(self, horizon: tuple[float, float]) -> AffinePieces:
        t0, t1 = horizon
        lo = t0 if self.early else max(t0, self.tau)
        hi = t1 if self.late else min(t1, self.tau)
        b = self.b if self.early else 0.0
        h = self.h if self.late else 0.0
        knots = [t0]
        slopes, intercepts = [], []
        if t0 < self.tau:
            slopes.append(-self.s * b)
            intercepts.append(self.s * b * self.tau)
            if self.tau < t1:
                knots.append(self.tau)
        if self.tau < t1:
            slopes.append(self.s * h)
            intercepts.append(-self.s * h * self.tau)
        if not slopes:  # degenerate horizon collapsed onto tau
            slopes, intercepts = [0.0], [0.0]
        knots.append(t1)
        return AffinePieces(np.array(knots), np.array(slopes), np.array(intercepts), lo, hi)


@dataclass(frozen=True, eq=False)
class PiecewiseLinear:
    """Convex piecewise-linear cost through ``(times[k], values[k])``.

    Beyond the first and last breakpoints the end segments are extended.
    """

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        t = np.array(self.times, dtype=float).ravel()
        v = np.array(self.values, dtype=float).ravel()
        if t.size < 2 or t.size != v.size:
            raise ScenarioError("piecewise-linear cost needs >= 2 matching times/values")
        if np.any(np.diff(t) <= 0):
            raise ScenarioError("piecewise-linear cost times must be strictly increasing")
        if np.any(v < 0):
            raise ScenarioError("temporal cost must be nonnegative")
        slopes = np.diff(v) / np.diff(t)
        if np.any(np.diff(slopes) < -1e-12 * max(1.0, float(np.max(np.abs(slopes))))):
            raise ScenarioError("piecewise-linear cost must be convex")
        zeros = np.flatnonzero(v == 0)
        if zeros.size != 1 or zeros[0] in (0, t.size - 1):
            raise ScenarioError("piecewise-linear cost must vanish at exactly one interior breakpoint")
        k = int(zeros[0])
        if not (slopes[k - 1] < 0 < slopes[k]):
            raise ScenarioError("piecewise-linear cost must vanish at exactly one point")
        object.__setattr__(self, "times", _frozen(t))
        object.__setattr__(self, "values", _frozen(v))

    @property
    def tau(self) -> float:
        return float(self.times[int(np.flatnonzero(self.values == 0)[0])])

    @property
    def _slopes(self) -> np.ndarray:
        return np.diff(self.values) / np.diff(self.times)

    @property
    def kinks(self) -> np.ndarray:
        return self.times[1:-1] if self.times.size > 2 else np.empty(0)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        sl = self._slopes
        k = np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, sl.size - 1)
        return self.values[k] + sl[k] * (t - self.times[k])

    def pieces(self, horizon: tuple[float, float]) -> AffinePieces:
        t0, t1 = horizon
        sl = self._slopes
        inner = self.times[(self.times > t0) & (self.times < t1)]
        knots = np.concatenate([[t0], inner, [t1]])
        mids = 0.5 * (knots[:-1] + knots[1:])
        k = np.clip(np.searchsorted(self.times, mids, side="right") - 1, 0, sl.size - 1)
        slope = sl[k]
        intercept = self.values[k] - sl[k] * self.times[k]
        return AffinePieces(knots, slope, intercept, t0, t1)


TemporalCostSpec = Union[TwoPieceLinear, PiecewiseLinear]


def temporal_cost(spec: TemporalCostSpec, t):
    """Evaluate a temporal cost exactly; returns a float for scalar ``t``."""
    val = spec(t)
    return float(val) if np.ndim(val) == 0 else val


def integrate_cost(spec: TemporalCostSpec, capacity: CapacityProfile, a: float, b: float) -> float:
    """Exact ``int_a^b l(t) c(t) dt`` for piecewise-linear ``l`` and piecewise-constant ``c``."""
    if b <= a:
        return 0.0
    pcs = spec.pieces(capacity.horizon)
    if a < pcs.lo - 1e-12 or b > pcs.hi + 1e-12:
        return math.inf
    pts = np.unique(np.concatenate([[a, b], pcs.knots, capacity.breakpoints]))
    pts = pts[(pts >= a) & (pts <= b)]
    mid = 0.5 * (pts[:-1] + pts[1:])
    k = pcs.locate(mid)
    vals = pcs.intercept[k] + pcs.slope[k] * mid
    return float(np.sum(vals * capacity.rate_at(mid) * np.diff(pts)))


# ---------------------------------------------------------------------------
# Space costs, stations, scenario
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PowerDistance:
    """``delta(x, y) = coefficient * ||x - y||_2 ** exponent``."""

    exponent: float = 1.0
    coefficient: float = 1.0

    def __post_init__(self) -> None:
        if not (self.exponent >= 1):
            raise ScenarioError("spatial cost exponent p must be >= 1")
        if not (self.coefficient > 0):
            raise ScenarioError("spatial cost coefficient must be positive")

    def __call__(self, x, y):
        d = np.linalg.norm(np.asarray(x, dtype=float) - np.asarray(y, dtype=float), axis=-1)
        return self.coefficient * d**self.exponent


SpatialCostSpec = PowerDistance


def spatial_cost(spec: SpatialCostSpec, x, y):
    val = spec(x, y)
    return float(val) if np.ndim(val) == 0 else val


@dataclass(frozen=True, eq=False)
class Station:
    id: int
    position: tuple[float, float]
    capacity: CapacityProfile


MODES = (None, "sensitivity", "preference")


@dataclass(frozen=True, eq=False)
class Scenario:
    """A complete matching instance.

    ``mode`` declares which structural assumption the temporal costs satisfy:
    ``"sensitivity"`` (common preferred time, strictly decreasing
    sensitivities) or ``"preference"`` (common shape, distinct preferred
    times).  ``None`` means no structure is asserted.
    """

    demand: DemandField
    stations: tuple[Station, ...]
    temporal_costs: tuple[TemporalCostSpec, ...]
    spatial_cost: SpatialCostSpec
    reward: float
    mode: str | None = None
    name: str = ""
    meta: Mapping[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "stations", tuple(self.stations))
        object.__setattr__(self, "temporal_costs", tuple(self.temporal_costs))
        if len(self.stations) < 1:
            raise ScenarioError("scenario needs at least one station")
        if len(self.temporal_costs) < 1:
            raise ScenarioError("scenario needs at least one demand type")
        if len(self.temporal_costs) != self.demand.n_types:
            raise ScenarioError(
                f"costs.temporal has {len(self.temporal_costs)} entries but demand has "
                f"{self.demand.n_types} types"
            )
        if not (math.isfinite(self.reward) and self.reward >= 0):
            raise ScenarioError("reward must be finite and >= 0")
        horizon = self.stations[0].capacity.horizon
        for st in self.stations:
            if not self.demand.grid.contains(st.position):
                raise ScenarioError(f"station {st.id} position lies outside the grid")
            if st.capacity.horizon != horizon:
                raise ScenarioError("all stations must share the same horizon")
        for j, spec in enumerate(self.temporal_costs):
            pcs = spec.pieces(horizon)
            if pcs.hi <= pcs.lo:
                raise ScenarioError(f"type {j} cannot be served anywhere in the horizon")
            ends = np.array([pcs.lo, pcs.hi])
            if np.any(spec(ends) < 0):
                raise ScenarioError("temporal cost must be nonnegative")
        if self.mode not in MODES:
            raise ScenarioError(f"unknown mode {self.mode!r}")
        if self.mode == "sensitivity":
            check_sensitivity_mode(self.temporal_costs)
        elif self.mode == "preference":
            check_preference_mode(self.temporal_costs)

    # -- sizes -------------------------------------------------------------
    @property
    def n_stations(self) -> int:
        return len(self.stations)

    @property
    def n_types(self) -> int:
        return len(self.temporal_costs)

    @property
    def horizon(self) -> tuple[float, float]:
        return self.stations[0].capacity.horizon

    @property
    def grid(self) -> SpatialGrid:
        return self.demand.grid

    @cached_property
    def positions(self) -> np.ndarray:
        return _frozen([st.position for st in self.stations])

    @cached_property
    def distances(self) -> np.ndarray:
        """Spatial cost from every station to every cell centre, shape ``(n, N)``."""
        c = self.grid.centers
        return _frozen(np.stack([self.spatial_cost(c, p) for p in self.positions]))

    @cached_property
    def pieces(self) -> tuple[AffinePieces, ...]:
        return tuple(spec.pieces(self.horizon) for spec in self.temporal_costs)

    @property
    def total_demand(self) -> float:
        return self.demand.total_mass()

    @property
    def total_capacity(self) -> float:
        return float(sum(st.capacity.total for st in self.stations))

    @cached_property
    def cost_scale(self) -> float:
        """A representative cost magnitude used to scale tolerances."""
        cand = [self.reward, float(np.max(self.distances))]
        for spec, pcs in zip(self.temporal_costs, self.pieces):
            cand.append(float(np.max(spec(np.array([pcs.lo, pcs.hi])))))
        scale = max(cand)
        return scale if scale > 0 and math.isfinite(scale) else 1.0

    def with_reward(self, reward: float) -> "Scenario":
        return Scenario(self.demand, self.stations, self.temporal_costs, self.spatial_cost,
                        reward, self.mode, self.name, self.meta)


def check_sensitivity_mode(costs: Sequence[TemporalCostSpec]) -> None:
    """Validate a common preferred time with strictly decreasing sensitivities."""
    if not all(isinstance(c, TwoPieceLinear) for c in costs):
        raise ScenarioError("sensitivity mode requires two-piece linear costs")
    first = costs[0]
    for c in costs[1:]:
        if (c.tau, c.b, c.h, c.early, c.late) != (first.tau, first.b, first.h, first.early, first.late):
            raise ScenarioError("sensitivity mode requires a common preferred time and slopes")
    s = np.array([c.s for c in costs])
    if np.any(np.diff(s) >= 0):
        raise ScenarioError("sensitivities not strictly decreasing")


def check_preference_mode(costs: Sequence[TemporalCostSpec]) -> None:
    """Validate a common cost shape shifted to distinct preferred times."""
    taus = []
    first = costs[0]
    for c in costs:
        if type(c) is not type(first):
            raise ScenarioError("preference mode requires one cost variant for all types")
        if isinstance(c, TwoPieceLinear):
            if (c.s, c.b, c.h, c.early, c.late) != (first.s, first.b, first.h, first.early, first.late):
                raise ScenarioError("preference mode requires a common cost shape")
        else:
            same = c.times.size == first.times.size and np.allclose(
                c.times - c.tau, first.times - first.tau, rtol=0, atol=1e-12
            ) and np.allclose(c.values, first.values, rtol=0, atol=1e-12)
            if not same:
                raise ScenarioError("preference mode requires a common cost shape")
        taus.append(c.tau)
    if len(set(taus)) != len(taus):
        raise ScenarioError("preference mode requires distinct preferred times")


# ---------------------------------------------------------------------------
# Config loading
# ---------------------------------------------------------------------------


def _need(section: Mapping[str, Any], key: str, where: str) -> Any:
    if key not in section:
        raise ScenarioError(f"missing field {where}.{key}")
    return section[key]


def _slope(value: Any, where: str) -> tuple[float, bool]:
    """Parse a slope that may be the string ``"inf"``; returns (value, allowed)."""
    if isinstance(value, str):
        if value.strip().lower() in ("inf", "+inf", "infinity"):
            return 0.0, False
        raise ScenarioError(f"{where} must be a number or 'inf'")
    v = float(value)
    if math.isinf(v):
        return 0.0, False
    return v, True


def parse_temporal_cost(entry: Mapping[str, Any], where: str) -> TemporalCostSpec:
    kind = entry.get("kind", "two_piece")
    if kind == "two_piece":
        b, early = _slope(entry.get("b", 1.0), f"{where}.b")
        h, late = _slope(entry.get("h", 1.0), f"{where}.h")
        return TwoPieceLinear(float(_need(entry, "s", where)), b, h, float(entry.get("tau", 0.0)),
                              early=early, late=late)
    if kind == "piecewise_linear":
        return PiecewiseLinear(_need(entry, "times", where), _need(entry, "values", where))
    raise ScenarioError(f"{where}.kind must be 'two_piece' or 'piecewise_linear'")


def _rasterize_type(grid: SpatialGrid, entry: Mapping[str, Any], where: str) -> np.ndarray:
    if "constant" in entry:
        val = float(entry["constant"])
        if val < 0:
            raise ScenarioError(f"{where}.constant: negative density")
        return np.full(grid.n_cells, val)
    if "gaussians" in entry:
        dens = np.zeros(grid.n_cells)
        for k, g in enumerate(entry["gaussians"]):
            mass = float(_need(g, "mass", f"{where}.gaussians[{k}]"))
            if mass < 0:
                raise ScenarioError(f"{where}.gaussians[{k}].mass: negative density")
            dens += gaussian_blob(grid, _need(g, "mean", f"{where}.gaussians[{k}]"),
                                  float(_need(g, "sigma", f"{where}.gaussians[{k}]")), mass)
        return dens
    raise ScenarioError(f"{where} needs 'constant' or 'gaussians'")


def gaussian_blob(grid: SpatialGrid, mean: Sequence[float], sigma: float, mass: float) -> np.ndarray:
    """Isotropic gaussian truncated to the grid and normalized to ``mass``."""
    if sigma <= 0:
        raise ScenarioError("gaussian sigma must be positive")
    d2 = np.sum((grid.centers - np.asarray(mean, dtype=float)) ** 2, axis=1)
    w = np.exp(-0.5 * d2 / sigma**2)
    tot = w.sum() * grid.cell_area
    if tot <= 0:
        return np.zeros(grid.n_cells)
    return w * (mass / tot)


def _read_demand_csv(grid: SpatialGrid, path: Path, m: int | None) -> np.ndarray:
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["x", "y", "type", "density"]:
            raise ScenarioError("demand CSV header must be x,y,type,density")
        for row in reader:
            rows.append((float(row["x"]), float(row["y"]), int(row["type"]), float(row["density"])))
    if not rows:
        raise ScenarioError("demand CSV is empty")
    arr = np.array(rows)
    n_types = int(arr[:, 2].max()) + 1 if m is None else m
    dens = np.zeros((n_types, grid.n_cells))
    cells = grid.cell_of(arr[:, :2])
    types = arr[:, 2].astype(int)
    if np.any(types < 0) or np.any(types >= n_types):
        raise ScenarioError("demand CSV type index out of range")
    if np.any(arr[:, 3] < 0):
        raise ScenarioError("demand CSV: negative density")
    dens[types, cells] = arr[:, 3]
    return dens


def _parse_capacity(entry: Mapping[str, Any], horizon: tuple[float, float] | None, where: str) -> CapacityProfile:
    cap = _need(entry, "capacity", where)
    if isinstance(cap, (int, float)):
        if horizon is None:
            raise ScenarioError(f"{where}.capacity is a scalar but no top-level horizon is given")
        return CapacityProfile.constant(float(cap), horizon)
    return CapacityProfile(_need(cap, "breakpoints", f"{where}.capacity"),
                           _need(cap, "rates", f"{where}.capacity"))


def scenario_from_dict(cfg: Mapping[str, Any], base_dir: Path | None = None) -> Scenario:
    """Build a :class:`Scenario` from a parsed config mapping."""
    if "generator" in cfg:
        from .scenarios import GeneratorSpec, generate

        return generate(GeneratorSpec.from_dict(cfg["generator"]))
    base_dir = base_dir or Path(".")
    g = _need(cfg, "grid", "")
    xr, yr = _need(g, "x", "grid"), _need(g, "y", "grid")
    res = _need(g, "resolution", "grid")
    if isinstance(res, int):
        res = [res, res]
    grid = SpatialGrid(float(xr[0]), float(xr[1]), float(yr[0]), float(yr[1]), int(res[0]), int(res[1]))

    costs = _need(cfg, "costs", "")
    temporal = [parse_temporal_cost(e, f"costs.temporal[{k}]")
                for k, e in enumerate(_need(costs, "temporal", "costs"))]
    sp = costs.get("spatial", {})
    spatial = PowerDistance(float(sp.get("exponent", 1.0)), float(sp.get("coefficient", 1.0)))

    demand_cfg = _need(cfg, "demand", "")
    if "csv" in demand_cfg:
        dens = _read_demand_csv(grid, base_dir / demand_cfg["csv"], len(temporal))
    else:
        types = _need(demand_cfg, "types", "demand")
        dens = np.stack([_rasterize_type(grid, e, f"demand.types[{k}]") for k, e in enumerate(types)])
    demand = DemandField(grid, dens)

    horizon = cfg.get("horizon")
    horizon = (float(horizon[0]), float(horizon[1])) if horizon is not None else None
    stations = []
    for k, e in enumerate(_need(cfg, "stations", "")):
        pos = _need(e, "position", f"stations[{k}]")
        stations.append(Station(k, (float(pos[0]), float(pos[1])),
                                _parse_capacity(e, horizon, f"stations[{k}]")))
    return Scenario(demand, tuple(stations), tuple(temporal), spatial,
                    float(_need(cfg, "reward", "")), costs.get("mode"), str(cfg.get("name", "")))


def read_config(path: str | Path) -> dict[str, Any]:
    """Parse a JSON or TOML config file."""
    path = Path(path)
    if not path.exists():
        raise ScenarioError(f"config file not found: {path}")
    raw = path.read_bytes()
    try:
        if path.suffix.lower() == ".toml":
            return _toml.loads(raw.decode("utf-8"))
        return json.loads(raw.decode("utf-8"))
    except (ValueError, UnicodeDecodeError) as exc:
        raise ScenarioError(f"cannot parse {path}: {exc}") from exc


def load_scenario(path: str | Path) -> Scenario:
    """Load and validate a scenario config (JSON or TOML)."""
    path = Path(path)
    cfg = read_config(path)
    try:
        return scenario_from_dict(cfg, path.parent)
    except (KeyError, TypeError, IndexError) as exc:
        raise ScenarioError(f"malformed config {path}: {exc!r}") from exc
