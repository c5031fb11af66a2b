"""Brute-force ground truth: the fully discretized primal as a linear program.

Demand atoms (one per positive-mass cell and type) are matched to time bins
of each station.  The LP maximizes ``sum v * pi`` with ``v = r - delta - l``
subject to atom masses and bin capacities.  Every optimum comes with an
explicit dual certificate that is checked independently of the LP solver.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import linprog
from scipy.sparse import coo_matrix

from .domain import Scenario
from .solver import SolveOptions, solve_stbd

DEFAULT_MAX_VARS = 10_000


class OracleSizeError(ValueError):
    """The discretized instance exceeds the variable cap."""


class OracleFailure(RuntimeError):
    """The LP solver failed or its certificate did not verify."""


@dataclass(frozen=True, eq=False)
class DiscreteInstance:
    atom_mass: np.ndarray  # (A,)
    atom_type: np.ndarray  # (A,)
    atom_pos: np.ndarray  # (A, 2)
    bin_capacity: np.ndarray  # (n, K)
    bin_edges: np.ndarray  # (K + 1,)
    var_atom: np.ndarray  # (V,)
    var_station: np.ndarray  # (V,)
    var_bin: np.ndarray  # (V,)
    value: np.ndarray  # (V,) r - delta - l

    @property
    def n_vars(self) -> int:
        return int(self.value.size)

    @property
    def n_atoms(self) -> int:
        return int(self.atom_mass.size)


def discretize(scenario: Scenario, time_bins: int, block: int = 1,
               max_vars: int = DEFAULT_MAX_VARS) -> DiscreteInstance:
    """Atoms from grid cells (optionally merged in ``block x block`` groups) and uniform time bins.

    Travel and waiting costs are sampled at atom centroids and bin midpoints.
    Bin capacities are exact integrals of the rate.  Pairs whose bin midpoint
    lies where the type may not be served are left out.
    """
    if time_bins < 1 or block < 1:
        raise ValueError("time_bins and block must be >= 1")
    g = scenario.grid
    masses = scenario.demand.masses  # (m, N)
    ix = np.arange(g.n_cells) % g.nx // block
    iy = np.arange(g.n_cells) // g.nx // block
    nbx = -(-g.nx // block)
    group = iy * nbx + ix
    n_groups = int(group.max()) + 1
    cx, cy = g.centers[:, 0], g.centers[:, 1]

    am, at, ap = [], [], []
    for j in range(scenario.n_types):
        gm = np.bincount(group, weights=masses[j], minlength=n_groups)
        gx = np.bincount(group, weights=masses[j] * cx, minlength=n_groups)
        gy = np.bincount(group, weights=masses[j] * cy, minlength=n_groups)
        keep = np.flatnonzero(gm > 0)
        am.append(gm[keep])
        at.append(np.full(keep.size, j))
        ap.append(np.column_stack([gx[keep] / gm[keep], gy[keep] / gm[keep]]) if keep.size
                  else np.zeros((0, 2)))
    atom_mass = np.concatenate(am)
    atom_type = np.concatenate(at).astype(int)
    atom_pos = np.vstack(ap) if ap else np.zeros((0, 2))

    t0, t1 = scenario.horizon
    edges = np.linspace(t0, t1, time_bins + 1)
    mid = 0.5 * (edges[:-1] + edges[1:])
    cap = np.stack([np.diff(st.capacity.cumulative(edges)) for st in scenario.stations])
    ell = np.stack([np.asarray(c(mid), dtype=float) for c in scenario.temporal_costs])  # (m, K)

    n = scenario.n_stations
    n_allowed = int(np.sum(np.isfinite(ell[atom_type]))) * n if atom_mass.size else 0
    if n_allowed > max_vars:
        raise OracleSizeError(f"discretized instance has {n_allowed} variables, above the cap {max_vars}")

    va, vs, vb, vv = [], [], [], []
    for a in range(atom_mass.size):
        j = atom_type[a]
        ok = np.flatnonzero(np.isfinite(ell[j]))
        for i in range(n):
            d = float(scenario.spatial_cost(atom_pos[a], scenario.positions[i]))
            va.append(np.full(ok.size, a))
            vs.append(np.full(ok.size, i))
            vb.append(ok)
            vv.append(scenario.reward - d - ell[j, ok])
    cat = lambda xs, dt: np.concatenate(xs).astype(dt) if xs else np.zeros(0, dtype=dt)
    return DiscreteInstance(atom_mass, atom_type, atom_pos, cap, edges,
                            cat(va, int), cat(vs, int), cat(vb, int), cat(vv, float))


@dataclass(frozen=True, eq=False)
class DualCertificate:
    atom_price: np.ndarray  # y_a >= 0
    bin_price: np.ndarray  # z_ik >= 0, shape (n, K)
    dual_value: float
    gap: float  # relative
    max_slackness: float  # largest complementary-slackness violation, mass-weighted


@dataclass(frozen=True, eq=False)
class LPSolution:
    value: float
    flows: np.ndarray  # (V,)
    certificate: DualCertificate


def _certificate(inst: DiscreteInstance, flows: np.ndarray, y: np.ndarray, z: np.ndarray,
                 primal: float) -> DualCertificate:
    y = np.maximum(y, 0.0)
    z = np.maximum(z, 0.0)
    # repair any tiny infeasibility so the certificate is feasible by construction
    reduced = inst.value - z[inst.var_station, inst.var_bin]
    need = np.zeros_like(y)
    np.maximum.at(need, inst.var_atom, reduced)
    y = np.maximum(y, need)
    dual = float(y @ inst.atom_mass + np.sum(z * inst.bin_capacity))
    gap = abs(dual - primal) / max(1.0, abs(primal))
    red = y[inst.var_atom] + z[inst.var_station, inst.var_bin] - inst.value
    used_atom = np.bincount(inst.var_atom, weights=flows, minlength=inst.n_atoms)
    used_bin = np.zeros_like(inst.bin_capacity)
    np.add.at(used_bin, (inst.var_station, inst.var_bin), flows)
    cs = max(
        float(np.max(flows * red, initial=0.0)),
        float(np.max(y * (inst.atom_mass - used_atom), initial=0.0)),
        float(np.max(z * (inst.bin_capacity - used_bin), initial=0.0)),
    )
    return DualCertificate(y, z, dual, gap, cs)


def solve_lp(inst: DiscreteInstance, gap_tol: float = 1e-7) -> LPSolution:
    """Exact LP optimum with a verified dual certificate."""
    V = inst.n_vars
    n, K = inst.bin_capacity.shape
    if V == 0:
        cert = DualCertificate(np.zeros(inst.n_atoms), np.zeros((n, K)), 0.0, 0.0, 0.0)
        return LPSolution(0.0, np.zeros(0), cert)
    rows_a = inst.var_atom
    rows_b = inst.n_atoms + inst.var_station * K + inst.var_bin
    cols = np.arange(V)
    A = coo_matrix((np.ones(2 * V), (np.concatenate([rows_a, rows_b]), np.concatenate([cols, cols]))),
                   shape=(inst.n_atoms + n * K, V)).tocsr()
    b = np.concatenate([inst.atom_mass, inst.bin_capacity.ravel()])
    res = linprog(-inst.value, A_ub=A, b_ub=b, bounds=(0, None), method="highs")
    if res.status != 0:
        raise OracleFailure(f"LP solver failed: {res.message}")
    flows = np.maximum(res.x, 0.0)
    primal = float(inst.value @ flows)
    marg = -np.asarray(res.ineqlin.marginals)
    cert = _certificate(inst, flows, marg[: inst.n_atoms], marg[inst.n_atoms:].reshape(n, K), primal)
    scale = max(1.0, abs(primal))
    if cert.gap > gap_tol or cert.max_slackness > 1e-6 * scale:
        raise OracleFailure(
            f"dual certificate did not verify (gap {cert.gap:.2e}, slackness {cert.max_slackness:.2e})"
        )
    return LPSolution(primal, flows, cert)


@dataclass(frozen=True)
class ParityLevel:
    level: int
    n_vars: int
    lp_value: float
    solver_value: float
    gap: float
    certificate_gap: float


def oracle_parity(builder: Callable[[int], tuple[Scenario, int]], levels: Sequence[int],
                  options: SolveOptions | None = None, block: int = 1,
                  max_vars: int = DEFAULT_MAX_VARS) -> list[ParityLevel]:
    """Compare the LP optimum with the dual solver's welfare at several refinement levels.

    ``builder(level)`` returns the scenario and the number of time bins to use.
    The gap is ``|LP - welfare| / max(1, LP)``.
    """
    out = []
    for lev in levels:
        sc, bins = builder(lev)
        inst = discretize(sc, bins, block, max_vars)
        lp = solve_lp(inst)
        if sc.total_demand > 0:
            _, rep = solve_stbd(sc, options)
            wel = rep.final_objective
        else:
            wel = 0.0
        gap = abs(lp.value - wel) / max(1.0, abs(lp.value))
        out.append(ParityLevel(lev, inst.n_vars, lp.value, wel, gap, lp.certificate.gap))
    return out
