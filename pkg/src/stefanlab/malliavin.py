"""Malliavin derivative of the cut-off solution.

D_{y,s} u_n solves the linear equation obtained by differentiating the mild
map with respect to the noise:

    D u(x,t) = G(x,y,t-s) sigma(y)
             + int_s^t int G_y(x,z,t-r) [ u_z(0,r) G_n(z,r) D u(z,r)
                                          + D(u_z(0,r)) z T_n(u(z,r)/z) ] dz dr

with G_n = T_n'(u/z) and the trace D(u_z(0,r)) read off the field itself by
the same boundary stencil the solver uses.  On the grid this is the exact
derivative of the discrete scheme with respect to one cell increment,
D_{k,j} u = d u / d dW[k, j], so a finite-difference bump of the noise is a
pathwise oracle for it.

Source cell j spans [t_j, t_{j+1}); its derivative is zero up to t_j and
equals sigma_k times the grid kernel at zero lag at t_{j+1}.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cutoff import CutoffParams, Tn, Tn_prime
from .heat_kernel import KernelParams, smooth_source
from .mild_solver import PathState, SpectralOps, on_grid, picard_solve


class PreconditionError(ValueError):
    pass


@dataclass
class GnProcess:
    values: np.ndarray  # (nx, nt + 1)
    c_L: float
    bound: float

    @property
    def within_bound(self) -> bool:
        return self.c_L <= self.bound


def gn_process(path: PathState, params: CutoffParams, use_cutoff: bool = True) -> GnProcess:
    """Chain-rule factor G_n(x, t) = T_n'(u(x, t) / x) along the path."""
    u = path.interior
    x = path.grid.x[:, None]
    vals = Tn_prime(u / x, params) if use_cutoff else np.ones_like(u)
    return GnProcess(vals, float(np.max(np.abs(vals))), params.lipschitz_bound)


@dataclass
class MalliavinField:
    """D_{y_k, s_j} u(x_i, t_m) for a set of source cells.

    ``values[k, j, i, m]`` and ``correction[k, j, i, m]`` (the part of D
    beyond the kernel source) are views onto arrays stored time-major.
    Entries at and after ``trip_index`` are NaN when the trace cap tripped.
    """

    _d: np.ndarray  # (nt + 1, n_src, nx)
    _r: np.ndarray | None
    _trace: np.ndarray  # (nt + 1, n_src)
    src_nodes: np.ndarray
    src_steps: np.ndarray
    path: PathState
    params: CutoffParams
    trip_index: int | None = None
    x_nodes: np.ndarray | None = None  # stored x rows (None: all)
    node_weight: float = 1.0  # source quadrature weight in units of dx

    @property
    def grid(self):
        return self.path.grid

    def _view(self, a):
        nt1, _, nx = a.shape
        return a.reshape(nt1, len(self.src_nodes), len(self.src_steps), nx).transpose(1, 2, 3, 0)

    @property
    def values(self):
        return self._view(self._d)

    @property
    def correction(self):
        if self._r is None:
            raise AttributeError("field was solved without store_correction")
        return self._view(self._r)

    @property
    def boundary_grad_trace(self):
        nt1 = self._trace.shape[0]
        return self._trace.reshape(nt1, len(self.src_nodes), len(self.src_steps)).transpose(1, 2, 0)

    def trace_sup(self) -> np.ndarray:
        """sup over source cells of |D(u_x(0+, t))| per time level."""
        with np.errstate(invalid="ignore"):
            return np.nanmax(np.abs(self._trace), axis=1)

    @property
    def valid_steps(self) -> int:
        return self._d.shape[0] if self.trip_index is None else self.trip_index

    @property
    def tripped(self) -> bool:
        return self.trip_index is not None

    def _row(self, i: int) -> int:
        if self.x_nodes is None:
            return i
        hit = np.flatnonzero(self.x_nodes == i)
        if not hit.size:
            raise KeyError(f"x node {i} was not stored")
        return int(hit[0])

    def at_probe(self, i: int, which: str = "values") -> np.ndarray:
        """(k, j, m) slice at spatial node i."""
        if which == "values":
            a = self._d
        elif self._r is None:
            raise AttributeError("field was solved without store_correction")
        else:
            a = self._r
        r = self._row(i)
        return self._view(a[:, :, r:r + 1])[:, :, 0, :]


def malliavin_solve(path: PathState, gn: GnProcess, sigma, params: CutoffParams, *,
                    alpha: float | None = None, drift: bool = True, use_cutoff: bool = True,
                    src_nodes=None, src_steps=None, reverse_sweep: bool = False,
                    store_correction: bool = True, keep_nodes=None,
                    node_weight: float = 1.0) -> MalliavinField:
    """March the linearised scheme forward for every requested source cell.

    ``gn`` must come from ``path`` (same run, same params).  ``src_nodes``
    and ``src_steps`` select source cells (default: all).  The march stops at
    the first time level where some source's boundary trace reaches M_d; the
    remaining levels are NaN and ``trip_index`` records the level.
    ``drift=False`` forces the transport coefficient to zero.  ``keep_nodes``
    limits the stored x rows (the march itself always uses the full state).
    ``node_weight`` scales the y quadrature in window sums and masses, e.g.
    the stride of a stratified node subsample.
    """
    grid = path.grid
    alpha = path.meta.get("alpha", 1.0) if alpha is None else alpha
    ops = SpectralOps(grid, alpha)
    nx, nt, dx, dt = grid.nx, grid.nt, grid.dx, grid.dt
    sig = on_grid(sigma, grid)
    src_nodes = np.arange(nx) if src_nodes is None else np.asarray(src_nodes, int)
    src_steps = np.arange(nt) if src_steps is None else np.asarray(src_steps, int)
    kk, jj = np.meshgrid(src_nodes, src_steps, indexing="ij")
    kk, jj = kk.ravel(), jj.ravel()
    n_src = kk.size

    u = path.interior
    b = path.boundary_grad
    x = grid.x[:, None]
    g = x * Tn(u / x, params) if use_cutoff else u
    G = gn.values

    proj_dy = ops.project_dy  # (K, nx)
    phi = ops.phi
    order = slice(None, None, -1) if reverse_sweep else slice(None)
    proj_dy_s = proj_dy[:, order]
    g_modes = (proj_dy_s @ g[order, :]).T  # (nt + 1, K)
    inject = phi[kk] * sig[kk][:, None]  # (n_src, K)

    keep = np.arange(nx) if keep_nodes is None else np.asarray(keep_nodes, int)
    n_keep = keep.size
    phi_keep = phi[keep].T  # (K, n_keep)
    d = np.zeros((nt + 1, n_src, n_keep))
    r_out = np.zeros((nt + 1, n_src, n_keep)) if store_correction else None
    trace = np.zeros((nt + 1, n_src))
    # work in injection order so the live sources at step m are a prefix
    perm = np.argsort(jj, kind="stable")
    inject = inject[perm]
    j_sorted = jj[perm]
    S = np.zeros((n_src, nx))  # modal coefficients, one mode per node
    R = np.zeros((n_src, nx))
    Du = np.zeros((n_src, nx))
    trip = None
    for m in range(1, nt + 1):
        na = int(np.searchsorted(j_sorted, m - 1, side="right"))
        if na == 0:
            continue
        live = slice(0, na)
        if drift:
            Dl = Du[live]
            Db = (4.0 * Dl[:, 0] - Dl[:, 1]) / (2.0 * dx)
            inc = np.outer(Db, g_modes[m - 1])
            inc += b[m - 1] * ((Dl * G[:, m - 1])[:, order] @ proj_dy_s.T)
            R[live] = ops.r * (R[live] + dt * inc)
        S[live] = ops.r * S[live]
        new = j_sorted[:na] == m - 1
        S[:na][new] = inject[:na][new]
        Du[live] = (S[live] + R[live]) @ phi.T
        rows = perm[:na]
        d[m, rows] = Du[live][:, keep]
        if r_out is not None:
            r_out[m, rows] = R[live] @ phi_keep
        trace[m, rows] = (4.0 * Du[live, 0] - Du[live, 1]) / (2.0 * dx)
        if np.max(np.abs(trace[m])) >= params.M_d:
            trip = m
            d[m:] = np.nan
            trace[m:] = np.nan
            if r_out is not None:
                r_out[m:] = np.nan
            break
    return MalliavinField(d, r_out, trace, src_nodes, src_steps, path, params, trip,
                          None if keep_nodes is None else keep, float(node_weight))


def stratified_nodes(nx: int, stride: int, seed: int) -> np.ndarray:
    """One uniformly drawn node from each block of ``stride`` nodes.

    With weight ``stride`` per node the y sum is an unbiased estimate of the
    full one.  The draw uses its own Philox stream (high key word 1), so it
    is independent of the noise sheet of the same seed.  A short last block
    is kept only when its draw lands inside the grid.
    """
    if stride < 1:
        raise ValueError("stride must be >= 1")
    starts = np.arange(0, nx, stride)
    if stride == 1:
        return starts
    rng = np.random.Generator(np.random.Philox(key=(int(seed) & (2**64 - 1)) + 2**64))
    nodes = starts + rng.integers(0, stride, size=starts.size)
    return nodes[nodes < nx]


def bump_quotient(noise, u0, sigma, params: CutoffParams, cell, base: PathState,
                  delta: float | None = None, *, alpha: float = 1.0, use_cutoff: bool = True,
                  drift: bool = True) -> np.ndarray:
    """[u(dW + delta e_cell) - u(dW)] / delta on interior nodes, all times.

    Both solves iterate to an exact fixed point (tol = 0).
    """
    g = noise.grid
    if delta is None:
        delta = 1e-4 * math.sqrt(g.dx * g.dt)
    k_max = g.nt + 2
    bumped, _ = picard_solve(noise.bumped(cell[0], cell[1], delta), u0, sigma, params, tol=0.0,
                             k_max=k_max, alpha=alpha, use_cutoff=use_cutoff, drift=drift)
    return (bumped.interior - base.interior) / delta


def bump_check(noise, u0, sigma, params: CutoffParams, cells, field: MalliavinField, *,
               alpha: float = 1.0, use_cutoff: bool = True, drift: bool = True,
               floor: float = 1e-6):
    """Max relative error between bump quotients and the field, per probed cell.

    Only points with |D| > floor enter the comparison.
    """
    pos_k = {int(k): a for a, k in enumerate(field.src_nodes)}
    pos_j = {int(j): a for a, j in enumerate(field.src_steps)}
    out = []
    for k, j in cells:
        fd = bump_quotient(noise, u0, sigma, params, (k, j), field.path, alpha=alpha,
                           use_cutoff=use_cutoff, drift=drift)
        D = field.values[pos_k[k], pos_j[j]][:, : field.valid_steps]
        fd = fd[:, : field.valid_steps]
        mask = np.abs(D) > floor
        err = float(np.max(np.abs(fd[mask] - D[mask]) / np.abs(D[mask]))) if mask.any() else 0.0
        out.append(err)
    return out


# -- estimates on windows of the source time ---------------------------------

def window_profiles(field: MalliavinField, i: int, b_index: int, steps, p: float):
    """Window sums on one path as functions of the end level m.

    For window length L (in steps) and m = b-L, ..., b:

        P1[L][m] = sum_{cells in [t_b - L dt, t_m]} |D(y,s,x_i,t_m)|^p dx dt
        P2[L][m] = same with the correction D - G sigma

    Returns two lists of arrays, one array of length L + 1 per window.
    """
    g = field.grid
    cell = g.dx * g.dt * field.node_weight
    Dp = (np.abs(field.at_probe(i)) ** p).sum(axis=0)  # (j, m)
    Rp = (np.abs(field.at_probe(i, "correction")) ** p).sum(axis=0)
    order = np.argsort(field.src_steps, kind="stable")
    src = field.src_steps[order]
    zero = np.zeros((1, Dp.shape[1]))
    cD = np.vstack([zero, np.cumsum(Dp[order], axis=0)])
    cR = np.vstack([zero, np.cumsum(Rp[order], axis=0)])
    p1, p2 = [], []
    for L in steps:
        m = np.arange(b_index - L, b_index + 1)
        lo = np.searchsorted(src, b_index - L, side="left")
        hi = np.maximum(np.searchsorted(src, m - 1, side="right"), lo)
        p1.append((cD[hi, m] - cD[lo, m]) * cell)
        p2.append((cR[hi, m] - cR[lo, m]) * cell)
    return p1, p2


def window_integrals(field: MalliavinField, i: int, b_index: int, steps, p: float):
    """E1, E2 on one path for each window length L (in steps).

    E1(L) = max_{m in [b-L, b]} sum_{cells in [t_b - L dt, t_m]} |D(y,s,x_i,t_m)|^p dx dt
    E2(L) = same with the correction D - G sigma.
    """
    p1, p2 = window_profiles(field, i, b_index, steps, p)
    return np.array([a.max() for a in p1]), np.array([a.max() for a in p2])


@dataclass
class ScalingReport:
    eps: np.ndarray
    E1: np.ndarray
    E2: np.ndarray
    slope1: float
    slope2: float
    target1: float
    target2: float
    passed1: bool
    passed2: bool
    n_paths: int

    @property
    def passed(self) -> bool:
        return self.passed1 and self.passed2


def scaling_targets(p: float):
    q = p / (p - 1.0)
    return (3.0 - p) / 2.0, 1.0 + (3.0 - p) / 2.0 + (1.0 - q / 2.0) * p / q


def estimate_scaling(fields, i: int, eps_steps, b_index: int, p: float,
                     slack1: float = 0.15, slack2: float = 0.25) -> ScalingReport:
    """Ensemble means of E1, E2 over the windows and their log-log slopes.

    E(L) is the sup over the end level of the ensemble-mean window sum.

    ``fields`` may be any iterable (a generator keeps memory flat).
    """
    eps_steps = [int(L) for L in eps_steps]
    if len(eps_steps) < 4:
        raise ValueError("need at least 4 window lengths")
    if any(L <= 0 or L > b_index for L in eps_steps):
        raise ValueError("window lengths must lie in (0, b]")
    if not 2.0 < p < 3.0:
        raise ValueError("p must lie in (2, 3)")
    s1 = [np.zeros(L + 1) for L in eps_steps]
    s2 = [np.zeros(L + 1) for L in eps_steps]
    n = 0
    dt = None
    for f in fields:
        p1, p2 = window_profiles(f, i, b_index, eps_steps, p)
        for a, (q1, q2) in enumerate(zip(p1, p2)):
            s1[a] += q1
            s2[a] += q2
        n += 1
        dt = f.grid.dt
    if n == 0:
        raise ValueError("empty ensemble")
    # sup over the end time of the ensemble mean
    E1 = np.array([a.max() for a in s1]) / n
    E2 = np.array([a.max() for a in s2]) / n
    eps = np.asarray(eps_steps) * dt
    le = np.log(eps)
    slope1 = float(np.polyfit(le, np.log(E1), 1)[0])
    slope2 = float(np.polyfit(le, np.log(E2), 1)[0]) if np.all(E2 > 0) else float("nan")
    t1, t2 = scaling_targets(p)
    return ScalingReport(eps, E1, E2, slope1, slope2, t1, t2, slope1 >= t1 - slack1,
                         bool(slope2 >= t2 - slack2), n)


# -- positivity and norms -----------------------------------------------------

def probe_mass(field: MalliavinField, i: int, t_index: int, p: float) -> float:
    """sum_{y,s} |D(y, s, x_i, t)|^p dx dt."""
    g = field.grid
    vals = np.abs(field.at_probe(i)[:, :, t_index]) ** p
    return math.fsum(vals.ravel()) * g.dx * g.dt * field.node_weight


def check_heat_precondition(sigma, x: float, T: float, kparams: KernelParams,
                            c_min: float, n_times: int = 64) -> float:
    """min_{t in (0, T]} |G_t sigma (x)|; raises if it drops below c_min."""
    ts = np.linspace(T / n_times, T, n_times)
    vmin = min(abs(smooth_source(sigma, x, t, kparams)) for t in ts)
    if vmin < c_min:
        raise PreconditionError(f"heat flow of sigma at x={x} falls to {vmin:.3e} < {c_min:.1e}")
    return vmin


def positivity_check(fields, i: int, t_index: int, p: float, *, sigma=None,
                     kparams: KernelParams | None = None, T: float | None = None,
                     thresholds=(1e-12,), c_min: float | None = None, override: bool = False):
    """Fraction of paths whose probe mass exceeds threshold * scale, per threshold.

    ``scale`` is the ensemble maximum of max|D|^p * lam * t at the probe.
    Unless ``override`` the heat flow of sigma at the probe must stay above
    ``c_min`` (default 1e-3 max|sigma|) up to T.
    """
    fields = list(fields)
    if not fields:
        raise ValueError("empty ensemble")
    grid = fields[0].grid
    x = float(grid.x[i])
    if not override:
        if sigma is None or T is None:
            raise ValueError("sigma and T are needed for the precondition")
        kp = kparams or KernelParams(fields[0].path.meta.get("alpha", 1.0), grid.lam)
        smax = float(np.max(np.abs(sigma(np.linspace(0, grid.lam, 201)))))
        check_heat_precondition(sigma, x, T, kp, 1e-3 * smax if c_min is None else c_min)
    masses = np.array([probe_mass(f, i, t_index, p) for f in fields])
    peak = max(float(np.nanmax(np.abs(f.at_probe(i)[:, :, t_index]))) for f in fields)
    scale = peak**p * grid.lam * grid.t[t_index]
    return {thr: float(np.mean(masses > thr * scale)) for thr in thresholds}, masses


def l12_norm(field: MalliavinField) -> float:
    """sum |D|^2 over all (y, s, x, t) cells with the product measure."""
    g = field.grid
    d = field._d[: field.valid_steps]
    return float(np.sum(d * d)) * (g.dx * g.dt) ** 2 * field.node_weight
