"""Exact upper envelope of ``eta_j - l_j(t)`` for piecewise-linear temporal costs.

For one station the horizon is cut at every capacity breakpoint, every kink
and domain end of the costs, every zero of ``eta_j - l_j`` and every pairwise
crossing.  On each resulting sub-interval all functions are affine, the rate
is constant and the winner is constant, so integrals are exact midpoint sums.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import logsumexp

from .domain import AffinePieces, CapacityProfile


@dataclass(frozen=True, eq=False)
class Envelope:
    """Sub-intervals ``[t0[k], t1[k]]`` with a constant winner.

    ``label`` is 0 when idle and ``j + 1`` when type ``j`` wins.  ``values`` holds
    ``eta_j - l_j`` for every type at the midpoint (``-inf`` where forbidden);
    ``slopes`` and ``intercepts`` describe each type's cost on the sub-interval.
    """

    t0: np.ndarray
    t1: np.ndarray
    rate: np.ndarray
    label: np.ndarray
    values: np.ndarray
    slopes: np.ndarray
    intercepts: np.ndarray
    valid: np.ndarray

    @property
    def length(self) -> np.ndarray:
        return self.t1 - self.t0

    @property
    def mid(self) -> np.ndarray:
        return 0.5 * (self.t0 + self.t1)

    @property
    def gain(self) -> np.ndarray:
        """``(max_j eta_j - l_j)^+`` at each midpoint."""
        g = np.max(self.values, axis=1) if self.values.shape[1] else np.zeros(self.t0.size)
        return np.maximum(g, 0.0)

    def type_capacity(self, m: int) -> np.ndarray:
        """Capacity mass of each temporal cell, shape ``(m,)``."""
        w = self.rate * self.length
        out = np.zeros(m + 1)
        np.add.at(out, self.label, w)
        return out[1:]

    def type_cost(self, m: int) -> np.ndarray:
        """``int_{T_j} l_j c dt`` for each type."""
        lab = self.label
        served = lab > 0
        j = lab[served] - 1
        mid = self.mid[served]
        cost = self.intercepts[served, j] + self.slopes[served, j] * mid
        out = np.zeros(m)
        np.add.at(out, j, cost * self.rate[served] * self.length[served])
        return out

    def intervals(self, label: int) -> list[tuple[float, float]]:
        """Maximal intervals carrying ``label`` (merging contiguous pieces)."""
        out: list[tuple[float, float]] = []
        for a, b, lab in zip(self.t0, self.t1, self.label):
            if lab != label:
                continue
            if out and abs(out[-1][1] - a) <= 1e-12 * max(1.0, abs(a)):
                out[-1] = (out[-1][0], float(b))
            else:
                out.append((float(a), float(b)))
        return out


def _base_points(pieces: Sequence[AffinePieces], capacity: CapacityProfile) -> np.ndarray:
    t0, t1 = capacity.horizon
    pts = [capacity.breakpoints]
    for p in pieces:
        pts.append(p.knots)
        pts.append(np.array([p.lo, p.hi]))
    pts = np.unique(np.concatenate(pts))
    return pts[(pts >= t0) & (pts <= t1)]


def _affine_table(pieces: Sequence[AffinePieces], mid: np.ndarray):
    m = len(pieces)
    sl = np.empty((mid.size, m))
    ic = np.empty((mid.size, m))
    ok = np.empty((mid.size, m), dtype=bool)
    for j, p in enumerate(pieces):
        k = p.locate(mid)
        sl[:, j] = p.slope[k]
        ic[:, j] = p.intercept[k]
        ok[:, j] = (mid >= p.lo) & (mid <= p.hi)
    return sl, ic, ok


def upper_envelope(eta_row: np.ndarray, pieces: Sequence[AffinePieces],
                   capacity: CapacityProfile) -> Envelope:
    eta_row = np.asarray(eta_row, dtype=float)
    base = _base_points(pieces, capacity)
    a, b = base[:-1], base[1:]
    bmid = 0.5 * (a + b)
    sl, ic, ok = _affine_table(pieces, bmid)
    m = eta_row.size

    cands = [base]
    with np.errstate(divide="ignore", invalid="ignore"):
        # zeros of eta_j - l_j
        tz = (eta_row[None, :] - ic) / sl
        keep = ok & (sl != 0) & (tz > a[:, None]) & (tz < b[:, None])
        cands.append(tz[keep])
        if m > 1:
            iu, ju = np.triu_indices(m, 1)
            num = (eta_row[iu] - ic[:, iu]) - (eta_row[ju] - ic[:, ju])
            den = sl[:, iu] - sl[:, ju]
            tc = num / den
            keep = ok[:, iu] & ok[:, ju] & (den != 0) & (tc > a[:, None]) & (tc < b[:, None])
            cands.append(tc[keep])
    pts = np.unique(np.concatenate(cands))

    t0, t1 = pts[:-1], pts[1:]
    mid = 0.5 * (t0 + t1)
    k = np.clip(np.searchsorted(base, mid, side="right") - 1, 0, a.size - 1)
    slk, ick, okk = sl[k], ic[k], ok[k]
    vals = eta_row[None, :] - (ick + slk * mid[:, None])
    vals = np.where(okk, vals, -np.inf)
    best = np.argmax(vals, axis=1)
    top = vals[np.arange(mid.size), best]
    label = np.where(top > 0, best + 1, 0)
    return Envelope(t0, t1, capacity.rate_at(mid), label, vals, slk, ick, okk)


def temporal_value(env: Envelope) -> float:
    return float(np.sum(env.gain * env.rate * env.length))


_GL_NODES, _GL_WEIGHTS = leggauss(6)


def smoothed_temporal(eta_row: np.ndarray, pieces: Sequence[AffinePieces],
                      capacity: CapacityProfile, eps: float,
                      max_panels: int = 20000) -> tuple[float, np.ndarray]:
    """Softplus-of-softmax surrogate of the temporal term, with its exact gradient.

    Integrated by composite Gauss-Legendre on panels whose layout depends on
    ``eps`` and the cost slopes but never on ``eta``, so the returned gradient
    is the exact derivative of the returned value.
    """
    base = _base_points(pieces, capacity)
    a, b = base[:-1], base[1:]
    bmid = 0.5 * (a + b)
    sl, _, ok = _affine_table(pieces, bmid)
    steep = np.max(np.where(ok, np.abs(sl), 0.0), axis=1)
    want = np.ceil((b - a) * np.maximum(steep, 1e-300) / eps).astype(float)
    panels = np.clip(want, 1, None)
    if panels.sum() > max_panels:
        panels = np.maximum(1, np.floor(panels * (max_panels / panels.sum())))
    panels = panels.astype(int)

    starts = np.repeat(a, panels)
    widths = np.repeat((b - a) / panels, panels)
    offs = np.concatenate([np.arange(p) for p in panels])
    left = starts + offs * widths
    t = (left[:, None] + 0.5 * widths[:, None] * (_GL_NODES[None, :] + 1.0)).ravel()
    w = (0.5 * widths[:, None] * _GL_WEIGHTS[None, :]).ravel()

    slt, ict, okt = _affine_table(pieces, t)
    z = (np.asarray(eta_row, dtype=float)[None, :] - (ict + slt * t[:, None])) / eps
    z = np.where(okt, z, -np.inf)
    zz = np.concatenate([np.zeros((t.size, 1)), z], axis=1)
    lse = logsumexp(zz, axis=1)
    wt = w * capacity.rate_at(t)
    value = float(np.sum(wt * eps * lse))
    prob = np.exp(z - lse[:, None])
    grad = np.sum(wt[:, None] * prob, axis=0)
    return value, grad
