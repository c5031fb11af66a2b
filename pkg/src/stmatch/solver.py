"""Evaluate and minimize the finite-dimensional convex dual over the weights ``eta``.

The dual objective is

    f(eta) = sum_i int_T (max_j [eta_ij - l_j(t)])^+ c_i(t) dt
           + sum_j int_X (max_i [r - eta_ij - delta(x, y_i)])^+ mu_j(x) dx.

The temporal term is evaluated exactly through the upper envelope of the
affine pieces.  The spatial term is a midpoint sum over grid cells, which
makes it piecewise linear in ``eta``: each cell is an atom.  The solver
minimizes a softplus/softmax surrogate of the spatial term with an annealed
temperature, leaving the temporal term exact (it is already continuously
differentiable for piecewise-linear costs).  At the final temperature the
soft cell assignment splits the few boundary atoms fractionally, which is
exactly the freedom the discrete first-order condition needs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import minimize
from scipy.special import logsumexp

from ._envelope import smoothed_temporal, temporal_value, upper_envelope
from ._parallel import pmap
from .domain import Scenario


def smooth_plus_max(a, eps: float) -> float:
    """``eps * log(1 + sum_k exp(a_k / eps))``, a smooth upper bound on ``(max_k a_k)^+``."""
    a = np.atleast_1d(np.asarray(a, dtype=float))
    return float(eps * logsumexp(np.concatenate([[0.0], a / eps])))


# ---------------------------------------------------------------------------
# Spatial term
# ---------------------------------------------------------------------------


def _spatial_type(scenario: Scenario, eta_col: np.ndarray, j: int, eps: float):
    """Value, per-station mass and per-cell assignment for one type.

    ``eps == 0`` gives the hard assignment with lowest-index ties.
    """
    mass = scenario.demand.masses[j]
    v = scenario.reward - eta_col[:, None] - scenario.distances  # (n, N)
    if eps == 0.0:
        best = np.argmax(v, axis=0)
        top = v[best, np.arange(v.shape[1])]
        served = top >= 0
        value = float(np.sum(mass * np.maximum(top, 0.0)))
        assign = np.zeros_like(v)
        cols = np.flatnonzero(served)
        assign[best[cols], cols] = 1.0
    else:
        z = v / eps
        zz = np.vstack([np.zeros((1, z.shape[1])), z])
        lse = logsumexp(zz, axis=0)
        value = float(np.sum(mass * eps * lse))
        assign = np.exp(z - lse[None, :])
    cell_mass = assign * mass[None, :]
    return value, cell_mass.sum(axis=1), assign


def spatial_term(scenario: Scenario, eta: np.ndarray, eps: float = 0.0) -> tuple[float, np.ndarray]:
    """Spatial term and its derivative ``-(cell masses)``, shape ``(n, m)``."""
    eta = np.asarray(eta, dtype=float)
    res = pmap(lambda j: _spatial_type(scenario, eta[:, j], j, eps)[:2], range(scenario.n_types))
    value = 0.0
    grad = np.zeros_like(eta)
    for j, (val, cm) in enumerate(res):
        value += val
        grad[:, j] = -cm
    return value, grad


def spatial_assignment(scenario: Scenario, eta: np.ndarray, eps: float = 0.0) -> np.ndarray:
    """Fraction of each cell's type-``j`` demand sent to each station, shape ``(m, n, N)``."""
    eta = np.asarray(eta, dtype=float)
    res = pmap(lambda j: _spatial_type(scenario, eta[:, j], j, eps)[2], range(scenario.n_types))
    return np.stack(res)


# ---------------------------------------------------------------------------
# Temporal term
# ---------------------------------------------------------------------------


def envelopes(scenario: Scenario, eta: np.ndarray):
    eta = np.asarray(eta, dtype=float)
    return pmap(lambda i: upper_envelope(eta[i], scenario.pieces, scenario.stations[i].capacity),
                range(scenario.n_stations))


def temporal_term(scenario: Scenario, eta: np.ndarray, eps: float = 0.0) -> tuple[float, np.ndarray]:
    """Temporal term and its gradient (capacity mass of each temporal cell)."""
    eta = np.asarray(eta, dtype=float)
    m = scenario.n_types
    grad = np.zeros_like(eta)
    value = 0.0
    if eps == 0.0:
        for i, env in enumerate(envelopes(scenario, eta)):
            value += temporal_value(env)
            grad[i] = env.type_capacity(m)
    else:
        res = pmap(lambda i: smoothed_temporal(eta[i], scenario.pieces,
                                               scenario.stations[i].capacity, eps),
                   range(scenario.n_stations))
        for i, (val, g) in enumerate(res):
            value += val
            grad[i] = g
    return value, grad


# ---------------------------------------------------------------------------
# Objectives
# ---------------------------------------------------------------------------


def _check_eta(scenario: Scenario, eta) -> np.ndarray:
    eta = np.asarray(eta, dtype=float)
    if eta.shape != (scenario.n_stations, scenario.n_types):
        raise ValueError(f"eta must have shape {(scenario.n_stations, scenario.n_types)}")
    if not np.all(np.isfinite(eta)):
        raise ValueError("eta must be finite")
    return eta


def stbd_objective(scenario: Scenario, eta) -> tuple[float, np.ndarray]:
    """Exact dual value and the lowest-index tie-broken subgradient."""
    eta = _check_eta(scenario, eta)
    tv, tg = temporal_term(scenario, eta)
    sv, sg = spatial_term(scenario, eta)
    return tv + sv, tg + sg


def stbd_smoothed(scenario: Scenario, eta, eps: float,
                  smooth_temporal: bool = True) -> tuple[float, np.ndarray]:
    """Smooth surrogate of :func:`stbd_objective` and its exact gradient.

    Every ``(max a)^+`` is replaced by ``eps * log(1 + sum exp(a / eps))``.  With
    ``smooth_temporal=False`` only the spatial term is smoothed and the exact
    temporal term is kept.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    eta = _check_eta(scenario, eta)
    tv, tg = temporal_term(scenario, eta, eps if smooth_temporal else 0.0)
    sv, sg = spatial_term(scenario, eta, eps)
    return tv + sv, tg + sg


def mass_balance(scenario: Scenario, eta, eps: float = 0.0) -> np.ndarray:
    """``int_{T_ij} c_i - int_{C_ij} mu_j`` for every station/type pair.

    With ``eps > 0`` the spatial side uses the soft assignment at that
    temperature, which is how the solver splits boundary atoms.
    """
    eta = _check_eta(scenario, eta)
    _, tg = temporal_term(scenario, eta)
    _, sg = spatial_term(scenario, eta, eps)
    return tg + sg


# ---------------------------------------------------------------------------
# Annealed minimization
# ---------------------------------------------------------------------------


@dataclass
class SolveOptions:
    """Tolerances and temperature schedule.

    The temperature starts at ``eps_start * scale`` and is halved until it
    reaches ``eps_final * scale``.
    """

    tol: float = 1e-5
    eps_start: float = 1.0
    eps_final: float = 1e-6
    shrink: float = 0.5
    max_iter: int = 20000
    stage_max_iter: int = 2000


@dataclass
class SolveReport:
    final_objective: float
    gradient_norm_history: list[float]
    mass_balance_residual: float
    iterations: int
    smoothing_schedule: list[float]
    converged: bool
    final_eps: float
    hard_residual: float = math.nan
    message: str = ""
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "final_objective": self.final_objective,
            "gradient_norm_history": list(self.gradient_norm_history),
            "mass_balance_residual": self.mass_balance_residual,
            "hard_residual": self.hard_residual,
            "iterations": self.iterations,
            "smoothing_schedule": list(self.smoothing_schedule),
            "converged": self.converged,
            "final_eps": self.final_eps,
            "message": self.message,
        }


def eps_schedule(scale: float, options: SolveOptions) -> list[float]:
    eps = options.eps_start * scale
    stop = options.eps_final * scale
    out = []
    while eps > stop * (1 + 1e-12):
        out.append(eps)
        eps *= options.shrink
    out.append(stop)
    return out


@dataclass
class AnnealResult:
    x: np.ndarray
    eps: float
    iterations: int
    grad_norms: list[float]
    schedule: list[float]
    converged: bool
    message: str


def minimize_annealed(fun: Callable[[np.ndarray, float], tuple[float, np.ndarray]],
                      x0: np.ndarray, schedule: list[float], tol: float,
                      max_iter: int, stage_max_iter: int) -> AnnealResult:
    """Minimize ``fun(x, eps)`` for each temperature in turn with L-BFGS.

    ``fun`` must be normalized so that its gradient norm is the quantity
    compared against ``tol``.
    """
    x = np.asarray(x0, dtype=float).ravel().copy()
    used, norms = [], []
    iters = 0
    msg = ""
    for k, eps in enumerate(schedule):
        last = k == len(schedule) - 1
        gtol = (0.05 if last else 1.0) * tol / math.sqrt(max(1, x.size))
        budget = min(stage_max_iter, max_iter - iters)
        if budget <= 0:
            msg = "iteration budget exhausted"
            break
        res = minimize(lambda z: fun(z, eps), x, jac=True, method="L-BFGS-B",
                       options={"maxiter": budget, "gtol": gtol, "ftol": 1e-16, "maxcor": 30})
        iters += int(res.nit)
        x = res.x
        used.append(eps)
        norms.append(float(np.linalg.norm(res.jac)))
    if used and used[-1] == schedule[-1]:
        _, g = fun(x, schedule[-1])
        gn = float(np.linalg.norm(g))
        norms.append(gn)
        converged = gn <= tol
        if not converged and not msg:
            msg = "gradient tolerance not reached at final temperature"
    else:
        converged = False
    return AnnealResult(x, used[-1] if used else schedule[0], iters, norms, used, converged, msg)


def _normalizers(scenario: Scenario) -> tuple[float, float]:
    mref = scenario.total_demand + scenario.total_capacity
    return scenario.cost_scale, (mref if mref > 0 else 1.0)


def solve_stbd(scenario: Scenario, options: SolveOptions | None = None,
               eta0: np.ndarray | None = None) -> tuple[np.ndarray, SolveReport]:
    """Minimize the dual; returns ``eta*`` and a report.

    Non-convergence is reported through ``report.converged`` together with
    the best iterate; it does not raise.
    """
    options = options or SolveOptions()
    n, m = scenario.n_stations, scenario.n_types
    scale, mref = _normalizers(scenario)

    def fun(x, eps):
        eta = x.reshape(n, m) * scale
        val, g = stbd_smoothed(scenario, eta, eps, smooth_temporal=False)
        return val / (scale * mref), g.ravel() / mref

    x0 = np.zeros(n * m) if eta0 is None else np.asarray(eta0, dtype=float).ravel() / scale
    sched = eps_schedule(scale, options)
    res = minimize_annealed(fun, x0, sched, options.tol, options.max_iter, options.stage_max_iter)
    eta = res.x.reshape(n, m) * scale
    resid = float(np.linalg.norm(mass_balance(scenario, eta, res.eps))) / mref
    hard = float(np.linalg.norm(mass_balance(scenario, eta, 0.0))) / mref
    value, _ = stbd_objective(scenario, eta)
    converged = res.converged and resid <= options.tol
    report = SolveReport(value, res.grad_norms, resid, res.iterations, res.schedule, converged,
                         res.eps, hard, res.message)
    return eta, report
