"""Closed-form two-station Hotelling oracles.

Demand is uniform on ``[0, 1]`` with stations at both ends, spatial cost
``|x - y|`` and one-sided waiting cost ``alpha * w * t`` from ``t = 0``.
Station ``i`` serves at constant rate ``c_i``.

Two settings are covered.  In the homogeneous one every agent has
``alpha = 1``.  In the heterogeneous one ``alpha`` is uniform on ``[0, 1]``,
and station 1 serves ``[0, f1(alpha)]`` while station 2 serves
``[1 - f2(alpha), 1]`` for each sensitivity level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class HotellingParams:
    c1: float
    c2: float
    w: float
    r: float

    def __post_init__(self) -> None:
        if not (self.c1 > 0 and self.c2 > 0):
            raise ValueError("capacities c1, c2 must be positive")
        if not (self.w >= 0 and self.r >= 0):
            raise ValueError("w and r must be nonnegative")


@dataclass(frozen=True)
class HomogeneousSolution:
    regime: str
    x1: float
    x2: float
    welfare: float
    threshold: float


def complete_threshold(c1: float, c2: float, w: float) -> float:
    """Reward above which all demand is served (homogeneous setting)."""
    return (w + c1) * (w + c2) / (2 * c1 * c2 + (c1 + c2) * w)


def hotelling_homogeneous(p: HotellingParams) -> HomogeneousSolution:
    c1, c2, w, r = p.c1, p.c2, p.w, p.r
    thr = complete_threshold(c1, c2, w)
    if r < thr:
        x1 = r * c1 / (c1 + w)
        x2 = r * c2 / (c2 + w)
        welfare = c1 * r**2 / (2 * (c1 + w)) + c2 * r**2 / (2 * (c2 + w))
        return HomogeneousSolution("partial", x1, x2, welfare, thr)
    den = 2 * c1 * c2 + (c1 + c2) * w
    x1 = 0.5 + (c1 - c2) * w / (2 * den)
    welfare = r - (c2 + w) * (c1 + w) / (2 * den)
    return HomogeneousSolution("complete", x1, 1 - x1, welfare, thr)


# ---------------------------------------------------------------------------
# Heterogeneous sensitivities
# ---------------------------------------------------------------------------


def _cosh_ratio(a, b):
    """``cosh(a) / cosh(b)`` for ``a, b >= 0`` without overflow."""
    a = np.asarray(a, dtype=float)
    return np.exp(a - b) * (1 + np.exp(-2 * a)) / (1 + np.exp(-2 * b))


def _sinh_ratio(a, b):
    """``sinh(a) / sinh(b)`` for ``0 <= a``, ``b > 0``."""
    a = np.asarray(a, dtype=float)
    return np.exp(a - b) * (-np.expm1(-2 * a)) / (-np.expm1(-2 * b))


def mixing_rate(c1: float, c2: float, w: float) -> float:
    return math.sqrt(w * (c1 + c2) / (2 * c1 * c2))


def critical_reward(c1: float, c2: float, w: float) -> float:
    """Reward above which every sensitivity level is fully served."""
    lam = mixing_rate(c1, c2, w)
    s = c1 + c2
    return (c1**2 + c2**2) / s**2 + w / (2 * s) - (c1 - c2) ** 2 / (2 * s**2 * math.cosh(lam))


def _hat_alpha_rhs(alpha: float, c1: float, c2: float, w: float) -> float:
    """Reward level at which the stations first meet at sensitivity ``alpha``."""
    s = c1 + c2
    lam = mixing_rate(c1, c2, w)
    la = lam * alpha
    a1 = 1.0 / math.tanh(la)
    k1, k2 = math.sqrt(w / c1), math.sqrt(w / c2)
    b1 = k1 * math.tanh(k1 * (1 - alpha))
    b2 = k2 * math.tanh(k2 * (1 - alpha))
    sh = math.sinh(la)
    out = c2 / s + w * alpha**2 / (2 * s) - w * alpha * a1 / (s * lam)
    out += (c1 - c2) * w * alpha / (2 * c1 * s * lam * sh)
    num = (b2 * s + 2 * a1 * c1 * lam - (c1 - c2) * lam / sh) * (c1 - c2 + b1 * s * alpha + 2 * a1 * c2 * alpha * lam)
    out += num / (s**2 * (b1 + b2 + 2 * a1 * lam))
    return out


def _kappa(ah: float, c1: float, c2: float, w: float) -> float:
    s = c1 + c2
    lam = mixing_rate(c1, c2, w)
    k1, k2 = math.sqrt(w / c1), math.sqrt(w / c2)
    b1 = k1 * math.tanh(k1 * (1 - ah))
    b2 = k2 * math.tanh(k2 * (1 - ah))
    a1 = 1.0 / math.tanh(lam * ah)
    num = 2 * lam / math.sinh(lam * ah) * (c1 / s * math.cosh(lam * ah) - (c1 - c2) / (2 * s)) + b2
    return num / (2 * lam * a1 + b2 + b1)


def solve_hat_alpha(c1: float, c2: float, w: float, r: float, delta: float = 1e-8) -> float:
    """Meeting sensitivity for intermediate rewards.

    Bisection on ``(delta, 1 - delta)``; if the endpoint values do not bracket
    ``r`` the interval is scanned on 10**4 sub-intervals for a sign change.
    """
    f = lambda a: _hat_alpha_rhs(a, c1, c2, w) - r
    lo, hi = delta, 1 - delta
    flo, fhi = f(lo), f(hi)
    # The right-hand side tends to 1/2 as alpha -> 0 and equals the critical
    # reward at alpha = 1; rewards within delta of either end are resolved by
    # linear interpolation towards that limit.
    if flo > 0 and r >= 0.5:
        return delta * (r - 0.5) / (flo + r - 0.5)
    rc = critical_reward(c1, c2, w)
    if fhi < 0 and r <= rc:
        gap = rc - (fhi + r)
        return hi if gap <= 0 else 1 - delta * (rc - r) / gap
    if flo * fhi > 0:
        grid = np.linspace(lo, hi, 10001)
        vals = np.array([f(a) for a in grid])
        idx = np.flatnonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) <= 0)
        if idx.size == 0:
            raise RuntimeError(f"no root for the meeting sensitivity in [{lo}, {hi}] "
                               f"(values {flo:.3g}, {fhi:.3g} at the ends)")
        lo, hi = grid[idx[0]], grid[idx[0] + 1]
        flo = vals[idx[0]]
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if fm == 0 or hi - lo < 1e-15:
            return mid
        if (fm < 0) == (flo < 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class UniformSolution:
    regime: str  # "partial", "mixed" or "complete"
    f1: Callable[[np.ndarray], np.ndarray]
    f2: Callable[[np.ndarray], np.ndarray]
    r_c: float
    hat_alpha: float | None = None
    kappa: float | None = None


def hotelling_uniform(p: HotellingParams) -> UniformSolution:
    """Served-interval lengths ``f1(alpha)``, ``f2(alpha)`` for uniform sensitivities."""
    c1, c2, w, r = p.c1, p.c2, p.w, p.r
    rc = critical_reward(c1, c2, w)
    lam = mixing_rate(c1, c2, w)
    s = c1 + c2
    k1, k2 = math.sqrt(w / c1), math.sqrt(w / c2)

    if r <= 0.5:
        f1 = lambda a: r * _cosh_ratio((1 - np.asarray(a)) * k1, k1)
        f2 = lambda a: r * _cosh_ratio((1 - np.asarray(a)) * k2, k2)
        return UniformSolution("partial", f1, f2, rc)

    if r >= rc:
        def f1(a):
            a = np.asarray(a, dtype=float)
            return (c2 - c1) / (2 * s) * _cosh_ratio(lam * (1 - a), lam) + c1 / s
        return UniformSolution("complete", f1, lambda a: 1 - f1(a), rc)

    ah = solve_hat_alpha(c1, c2, w, r)
    kap = _kappa(ah, c1, c2, w)

    def f1(a):
        a = np.asarray(a, dtype=float)
        hi = kap * _cosh_ratio(k1 * (1 - a), k1 * (1 - ah))
        lo = ((c2 - c1) / (2 * s) * _sinh_ratio(lam * np.clip(ah - a, 0, None), lam * ah)
              + (kap - c1 / s) * _sinh_ratio(lam * np.clip(a, 0, ah), lam * ah) + c1 / s)
        return np.where(a >= ah, hi, lo)

    def f2(a):
        a = np.asarray(a, dtype=float)
        hi = (1 - kap) * _cosh_ratio(k2 * (1 - a), k2 * (1 - ah))
        return np.where(a >= ah, hi, 1 - f1(a))

    return UniformSolution("mixed", f1, f2, rc, ah, kap)


@dataclass(frozen=True)
class BoundaryLimits:
    low: float
    high: float
    w_grid: np.ndarray
    boundary: np.ndarray
    monotone: bool


def hotelling_boundary_limits(c1: float, c2: float,
                              w_grid: np.ndarray | None = None) -> BoundaryLimits:
    """Complete-service boundary as waiting costs vary.

    The boundary is the midpoint when waiting is free and tends to the
    capacity share ``c1 / (c1 + c2)`` as waiting becomes dominant.
    """
    if w_grid is None:
        w_grid = np.concatenate([[0.0], np.logspace(-3, 6, 60)])
    w_grid = np.asarray(w_grid, dtype=float)
    bnd = np.array([hotelling_homogeneous(HotellingParams(c1, c2, w, 1e9)).x1 for w in w_grid])
    d = np.diff(bnd)
    monotone = bool(np.all(d >= -1e-15) or np.all(d <= 1e-15))
    return BoundaryLimits(0.5, c1 / (c1 + c2), w_grid, bnd, monotone)
