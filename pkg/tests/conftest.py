"""Shared fixtures: solved reference scenarios are cached per session."""

from __future__ import annotations

import functools

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from stmatch.partition import extract_plan
from stmatch.scenarios import (
    GeneratorSpec,
    three_type_scenario,
    generate,
    hotelling_scenario,
    hotelling_uniform_scenario,
    random_scenario,
)
from stmatch.solver import solve_stbd

settings.register_profile("default", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


BUILDERS = {
    "hotelling_partial": lambda: hotelling_scenario(1, 1, 1, 0.5),
    "hotelling_complete": lambda: hotelling_scenario(1, 1, 1, 2.0),
    "uniform_partial": lambda: hotelling_uniform_scenario(3, 1, 10, 0.45),
    "uniform_mixed": lambda: hotelling_uniform_scenario(3, 1, 10, 0.65),
    "uniform_complete": lambda: hotelling_uniform_scenario(3, 1, 10, 2.0),
    "three_types": three_type_scenario,
    "random_sensitivity": lambda: random_scenario(0, 3, 3),
    "random_preference": lambda: random_scenario(1, 3, 3, mode="preference"),
    "random_hump": lambda: random_scenario(2, 2, 3, constant_capacity=False),
    "synthetic": lambda: generate(GeneratorSpec(seed=0)),
}


@functools.lru_cache(maxsize=None)
def solved(name: str):
    """``(scenario, eta, report, plan)`` for a named reference scenario."""
    sc = BUILDERS[name]()
    eta, rep = solve_stbd(sc)
    plan = extract_plan(sc, eta, rep.final_eps)
    return sc, eta, rep, plan


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def toy_scenario(densities, positions, costs, rates, horizon=(-4.0, 4.0), reward=1.0,
                 extent=(0.0, 1.0, 0.0, 1.0), mode=None, exponent=1.0):
    """Small hand-built scenario; ``densities`` has shape ``(m, ny, nx)``."""
    from stmatch.domain import (CapacityProfile, DemandField, PowerDistance, Scenario,
                                SpatialGrid, Station)

    dens = np.asarray(densities, dtype=float)
    m, ny, nx = dens.shape
    grid = SpatialGrid(*extent, nx, ny)
    stations = tuple(Station(i, tuple(p), CapacityProfile.constant(c, horizon))
                     for i, (p, c) in enumerate(zip(positions, rates)))
    return Scenario(DemandField(grid, dens.reshape(m, -1)), stations, tuple(costs),
                    PowerDistance(exponent, 1.0), reward, mode)


def with_cells(plan, station, intervals):
    """Copy of ``plan`` with the temporal intervals of one station replaced."""
    import dataclasses

    from stmatch.partition import StationCells, TemporalPartition

    cells = list(plan.temporal.stations)
    old = cells[station]
    cells[station] = StationCells(old.station, tuple(tuple(v) for v in intervals), old.idle,
                                  old.capacity, old.cost)
    return dataclasses.replace(plan, temporal=TemporalPartition(tuple(cells)))


# ---------------------------------------------------------------------------
# Acceptance summary: one PASS/FAIL line per criterion at the end of the run
# ---------------------------------------------------------------------------

_CRITERIA: dict[int, tuple[str, bool, list[str]]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call":
        return
    number, title = mark.args
    details = [v for k, v in item.user_properties if k == "detail"]
    _CRITERIA[number] = (title, rep.passed, details)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, ok, details = _CRITERIA[number]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {number:2d}: {title}")
        for d in details:
            terminalreporter.write_line(f"       {d}")
