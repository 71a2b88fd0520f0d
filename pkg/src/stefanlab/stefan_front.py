"""Moving boundaries and the physical-frame density.

Each half-problem lives on (0, lam) after the shifts x = y - s+(t) (right
liquid phase) and x = s-(t) - y (left phase).  Differentiating
w(y, t) = u+(y - s+(t), t) in t gives u+_t - s+'(t) u+_x, which matches the
transport term -u_x(0+, t) u_x of the transformed equation iff
s+'(t) = -u+_x(0+, t).  The mirrored chart gives s-'(t) = +u-_x(0+, t).
Both half-problems are driven by independent noise sheets.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .mild_solver import PathState

HIT_NONE = "none"
HIT_SPREAD = "spread_zero"
HIT_WALL = "wall_contact"


@dataclass
class FrontTrajectory:
    t: np.ndarray
    s_minus: np.ndarray
    s_plus: np.ndarray
    a: float
    b: float
    hit_time: float = math.inf
    hit_kind: str = HIT_NONE

    @property
    def spread(self) -> np.ndarray:
        return self.s_plus - self.s_minus

    @property
    def hit_index(self) -> int | None:
        if math.isinf(self.hit_time):
            return None
        return int(np.flatnonzero(self.t >= self.hit_time)[0])

    def valid(self) -> np.ndarray:
        """Mask of time levels strictly before the hit."""
        return self.t < self.hit_time


def _cumtrapz(y, dt):
    out = np.zeros_like(y)
    out[1:] = np.cumsum(0.5 * (y[1:] + y[:-1])) * dt
    return out


def detect_hit(front: FrontTrajectory):
    """First grid time with spread <= 0 or a front on a wall of [a, b]."""
    closed = front.spread <= 0.0
    wall = (front.s_minus <= front.a) | (front.s_plus >= front.b)
    idx = np.flatnonzero(closed | wall)
    if not idx.size:
        return math.inf, HIT_NONE
    k = idx[0]
    return float(front.t[k]), (HIT_SPREAD if closed[k] else HIT_WALL)


def reconstruct_front(path_plus: PathState, path_minus: PathState, s0_minus: float,
                      s0_plus: float, a: float | None = None, b: float | None = None) -> FrontTrajectory:
    """Integrate the Stefan condition from the two boundary-gradient traces.

    s+(t) = s0+ - int_0^t u+_x(0+, r) dr and s-(t) = s0- + int_0^t u-_x(0+, r) dr
    (trapezoid rule).  The walls default to lam beyond the initial fronts.
    """
    gp, gm = path_plus.grid, path_minus.grid
    if gp != gm:
        raise ValueError("half-problem paths must share one grid")
    if not s0_minus < s0_plus:
        raise ValueError("need s0_minus < s0_plus")
    a = s0_minus - gp.lam if a is None else a
    b = s0_plus + gp.lam if b is None else b
    if not a < s0_minus or not s0_plus < b:
        raise ValueError("initial solid must lie inside (a, b)")
    s_plus = s0_plus - _cumtrapz(path_plus.boundary_grad, gp.dt)
    s_minus = s0_minus + _cumtrapz(path_minus.boundary_grad, gp.dt)
    front = FrontTrajectory(gp.t.copy(), s_minus, s_plus, float(a), float(b))
    front.hit_time, front.hit_kind = detect_hit(front)
    return front


def velocity_residual(front: FrontTrajectory, path_plus: PathState) -> float:
    """max_j |(s+_{j+1} - s+_j)/dt + u+_x(0+, t_j)| over levels before the hit."""
    dt = path_plus.grid.dt
    v = np.diff(front.s_plus) / dt + path_plus.boundary_grad[:-1]
    ok = front.valid()[1:]
    return float(np.max(np.abs(v[ok]))) if ok.any() else 0.0


def inverse_transform(path_plus: PathState, path_minus: PathState, front: FrontTrajectory,
                      y, t_indices=None) -> np.ndarray:
    """Physical density w(y, t) on the rows ``t_indices`` (default: all before the hit).

    w = u+(y - s+) right of s+, u-(s- - y) left of s-, 0 on [s-, s+].
    Values between nodes are linearly interpolated; points beyond the far
    end of a chart take the Dirichlet value 0.
    """
    grid = path_plus.grid
    y = np.asarray(y, float)
    if t_indices is None:
        t_indices = np.flatnonzero(front.valid())
    t_indices = np.atleast_1d(np.asarray(t_indices, int))
    if np.any(front.t[t_indices] >= front.hit_time):
        raise ValueError("density requested at or beyond the hit time")
    xf = grid.x_full
    out = np.zeros((t_indices.size, y.size))
    for r, m in enumerate(t_indices):
        sp, sm = front.s_plus[m], front.s_minus[m]
        right = y >= sp
        left = y <= sm
        out[r, right] = np.interp(y[right] - sp, xf, path_plus.values[:, m], right=0.0)
        out[r, left] = np.interp(sm - y[left], xf, path_minus.values[:, m], right=0.0)
    return out


def write_front_csv(front: FrontTrajectory, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "s_minus", "s_plus", "spread"])
        for row in zip(front.t, front.s_minus, front.s_plus, front.spread):
            w.writerow([repr(float(v)) for v in row])


def write_density_csv(times, y, w, path) -> None:
    """Long-format snapshots: one (t, y, w) row per point."""
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["t", "y", "w"])
        for t, row in zip(times, w):
            for yy, ww in zip(y, row):
                wr.writerow([repr(float(t)), repr(float(yy)), repr(float(ww))])
