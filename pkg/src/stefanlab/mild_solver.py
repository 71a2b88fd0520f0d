"""Mild solutions of the transformed problem on a fixed grid.

    u_t = alpha u_xx - u_x(0+, t) u_x + sigma(x) W_dot + eta_dot,   u(0,t) = u(lam,t) = 0

in integral form

    u(t) = G_t u0 + int_0^t u_y(0,s) int G_y(., y, t-s) y T_n(u(y,s)/y) dy ds
                  + int_0^t int G(., y, t-s) sigma(y) W(dy, ds).

Discretisation
--------------
The kernel is represented on the grid by its first nx sine modes.  With the
interior nodes x_i = i dx the sampled sine basis is exactly orthogonal, so
the discrete semigroup satisfies E(t1) E(t2) = E(t1 + t2) to rounding and
every history sum becomes a one-term recursion per mode.

* drift: left-endpoint rule in s, lag >= dt, so no node sits on the
  singular diagonal s = t;
* noise: cell [t_j, t_{j+1}) is propagated from its right end, i.e. with
  E(t_m - t_{j+1}); at zero lag E is the grid identity, which matches the
  Euler-Maruyama increment sigma dW / dx of the finite-difference oracle;
* the drift trace u_y(0, s) and the cut-off argument are both taken from
  the previous Picard iterate.

Because the drift uses strictly past values, the Picard map fixes one more
time level per sweep: the iteration terminates exactly (d_k == 0) after at
most nt + 1 sweeps and usually reaches 1e-8 long before that.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from scipy.signal import lfilter

from .cutoff import CutoffParams, Tn, h_norm_interior, interior_boundary_gradient
from .noise_field import GridSpec, NoiseField


class PicardError(RuntimeError):
    """Picard iteration failed to reach tol within k_max sweeps."""

    def __init__(self, message, d):
        super().__init__(message)
        self.d = list(d)


@dataclass
class PathState:
    values: np.ndarray  # (nx + 2, nt + 1), walls included
    boundary_grad: np.ndarray  # (nt + 1,)
    grid: GridSpec
    meta: dict = field(default_factory=dict)

    @property
    def interior(self) -> np.ndarray:
        return self.values[1:-1]

    def h_norms(self) -> np.ndarray:
        return h_norm_interior(self.interior.T, self.grid.x)

    @classmethod
    def from_interior(cls, u, grid, meta=None):
        nx, ntp = u.shape
        values = np.zeros((nx + 2, ntp))
        values[1:-1] = u
        return cls(values, interior_boundary_gradient(u.T, grid.dx), grid, dict(meta or {}))


@dataclass
class ReflectionMeasure:
    mass: np.ndarray  # (nx, nt): mass deposited at node i at time t_{j+1}

    @property
    def total(self) -> float:
        return float(self.mass.sum())


@dataclass
class IterationReport:
    d: list
    converged: bool
    iterations: int
    tol: float
    start: str
    trace_iterate: str = "previous"

    def ratios(self):
        d = np.asarray(self.d)
        with np.errstate(divide="ignore", invalid="ignore"):
            return d[1:] / d[:-1]


class SpectralOps:
    """Grid representation of the Dirichlet heat semigroup and its y-derivative."""

    def __init__(self, grid: GridSpec, alpha: float = 1.0):
        self.grid, self.alpha = grid, alpha
        lam, nx = grid.lam, grid.nx
        self.dx, self.dt, self.x = grid.dx, grid.dt, grid.x
        q = np.arange(1, nx + 1)
        self.wave = q * np.pi / lam
        arg = np.outer(self.x, self.wave)
        self.phi = np.sqrt(2.0 / lam) * np.sin(arg)  # (nx, K)
        self.dphi = np.sqrt(2.0 / lam) * self.wave * np.cos(arg)  # phi_q'(y_k)
        self.rate = alpha * self.wave**2
        self.r = np.exp(-self.rate * self.dt)
        self.project = self.phi.T * self.dx  # nodal values -> modes
        self.project_dy = self.dphi.T * self.dx  # int phi_q'(y) g(y) dy

    def decay(self, m):
        """exp(-rate * m dt) as (K, len(m))."""
        return np.exp(-np.outer(self.rate, np.asarray(m) * self.dt))

    def kernel_matrix(self, lag_steps: int) -> np.ndarray:
        """G_grid(x_i, y_k, lag dt); lag 0 gives identity / dx."""
        return (self.phi * self.r**lag_steps) @ self.phi.T

    def causal(self, X):
        """Y[:, m] = sum_{j < m} r^(m-1-j) X[:, j]; shape (K, nt + 1)."""
        K, n = X.shape
        Y = np.zeros((K, n + 1))
        for q in range(K):
            Y[q, 1:] = lfilter([1.0], [1.0, -self.r[q]], X[q])
        return Y


def on_grid(f, grid: GridSpec) -> np.ndarray:
    """Sample a callable of x on the interior nodes, or validate an array.

    A scalar is taken as a constant profile.
    """
    if callable(f):
        return np.asarray(f(grid.x), float) * np.ones(grid.nx)
    a = np.asarray(f, float)
    if a.ndim == 0:
        return np.full(grid.nx, float(a))
    if a.shape == (grid.nx + 2,):
        return a[1:-1].copy()
    if a.shape != (grid.nx,):
        raise ValueError(f"profile has shape {a.shape}, expected ({grid.nx},)")
    return a.copy()


def _nonlinearity(u, x, params, use_cutoff):
    # y T_n(u / y); identity when the cut-off is disabled
    if not use_cutoff:
        return u
    return x[:, None] * Tn(u / x[:, None], params)


class _MildMap:
    def __init__(self, noise, u0, sigma, alpha):
        self.grid = noise.grid
        self.ops = SpectralOps(self.grid, alpha)
        ops = self.ops
        self.u0 = on_grid(u0, self.grid)
        self.sig = on_grid(sigma, self.grid)
        c0 = ops.project @ self.u0
        self.heat_modes = c0[:, None] * ops.decay(np.arange(self.grid.nt + 1))
        forcing = ops.phi.T @ (self.sig[:, None] * noise.increments)
        self.noise_modes = ops.causal(forcing)
        self.base = ops.phi @ (self.heat_modes + self.noise_modes)

    def heat_path(self):
        return self.ops.phi @ self.heat_modes

    def drift_modes(self, u, params, use_cutoff):
        ops = self.ops
        b = interior_boundary_gradient(u[:, :-1].T, ops.dx)
        g = _nonlinearity(u[:, :-1], ops.x, params, use_cutoff)
        F = (ops.project_dy @ g) * (ops.dt * b)
        return ops.r[:, None] * ops.causal(F)

    def apply(self, u, params, use_cutoff, drift):
        if not drift:
            return self.base.copy()
        return self.base + self.ops.phi @ self.drift_modes(u, params, use_cutoff)


def picard_solve(noise: NoiseField, u0, sigma, params: CutoffParams, tol: float = 1e-8,
                 k_max: int = 50, *, alpha: float = 1.0, use_cutoff: bool = True,
                 drift: bool = True, start: str = "heat"):
    """Fixed point of the cut-off mild map by Picard iteration.

    Parameters
    ----------
    noise : NoiseField
    u0, sigma : callables of x or arrays on the interior nodes
    params : CutoffParams
    tol : stop once sup_t ||u_{k+1} - u_k||_H < tol; ``tol=0`` iterates to
        an exact (bitwise) fixed point
    k_max : maximum number of sweeps
    use_cutoff : False replaces T_n by the identity
    drift : False drops the nonlocal transport term
    start : "heat" (u_{n,0} = G_t u0) or "zero"

    Returns
    -------
    (PathState, IterationReport)

    Raises
    ------
    PicardError
        if the tolerance is not met after k_max sweeps; the difference
        sequence is attached as ``err.d``.
    """
    mm = _MildMap(noise, u0, sigma, alpha)
    grid = noise.grid
    meta = {"solver": "mild", "seed": noise.seed, "alpha": alpha, "params": params,
            "use_cutoff": use_cutoff, "drift": drift}
    if not np.any(mm.u0) and not np.any(mm.sig):
        u = np.zeros((grid.nx, grid.nt + 1))
        return PathState.from_interior(u, grid, meta), IterationReport([0.0], True, 1, tol, start)
    if start == "heat":
        u = mm.heat_path()
    elif start == "zero":
        u = np.zeros((grid.nx, grid.nt + 1))
    else:
        raise ValueError(f"unknown start {start!r}")
    d = []
    x = grid.x[:, None]
    for k in range(1, k_max + 1):
        new = mm.apply(u, params, use_cutoff, drift)
        dk = float(np.max(np.abs(new - u) / x))
        d.append(dk)
        u = new
        if dk < tol or dk == 0.0:
            return (PathState.from_interior(u, grid, meta),
                    IterationReport(d, True, k, tol, start))
    raise PicardError(f"Picard iteration did not reach tol={tol} in {k_max} sweeps "
                      f"(last d_k={d[-1]:.3e})", d)


def march_solve(noise: NoiseField, u0, sigma, params: CutoffParams, *, alpha: float = 1.0,
                use_cutoff: bool = True, drift: bool = True, reflect: bool = False):
    """Time-marching evaluation of the same discrete mild scheme.

    With ``reflect`` the iterate is projected onto u >= 0 after every step
    and the deficit is booked as reflection mass (deficit * dx per node).
    """
    grid = noise.grid
    ops = SpectralOps(grid, alpha)
    u = on_grid(u0, grid)
    sig = on_grid(sigma, grid)
    out = np.empty((grid.nx, grid.nt + 1))
    out[:, 0] = u
    mass = np.zeros((grid.nx, grid.nt))
    c = ops.project @ u
    x = ops.x
    for j in range(grid.nt):
        inc = np.zeros_like(c)
        if drift:
            b = (4.0 * u[0] - u[1]) / (2.0 * ops.dx)
            g = x * Tn(u / x, params) if use_cutoff else u
            inc = ops.dt * b * (ops.project_dy @ g)
        c = ops.r * (c + inc) + ops.phi.T @ (sig * noise.increments[:, j])
        u = ops.phi @ c
        if reflect:
            deficit = np.maximum(-u, 0.0)
            if deficit.any():
                u = u + deficit
                u[deficit > 0] = 0.0
                mass[:, j] = deficit * ops.dx
                c = ops.project @ u
        out[:, j + 1] = u
    meta = {"solver": "reflected" if reflect else "march", "seed": noise.seed,
            "alpha": alpha, "params": params, "use_cutoff": use_cutoff, "drift": drift}
    return PathState.from_interior(out, grid, meta), ReflectionMeasure(mass)


def reflected_solve(noise: NoiseField, u0, sigma, params: CutoffParams, tol: float = 1e-8, *,
                    alpha: float = 1.0, use_cutoff: bool = True, drift: bool = True):
    """Projection scheme for the reflected problem; returns (PathState, ReflectionMeasure).

    ``tol`` bounds the normalised complementarity residual
    sum u * eta / (total eta * sup u); a violation raises RuntimeError.
    """
    path, eta = march_solve(noise, u0, sigma, params, alpha=alpha, use_cutoff=use_cutoff,
                            drift=drift, reflect=True)
    res = complementarity_residual(path, eta)
    if res > tol:
        raise RuntimeError(f"complementarity residual {res:.3e} exceeds {tol:.1e}")
    path.meta["complementarity"] = res
    return path, eta


def complementarity_residual(path: PathState, eta: ReflectionMeasure) -> float:
    total = eta.total
    if total == 0.0:
        return 0.0
    u_at = path.interior[:, 1:]
    scale = total * max(float(np.max(np.abs(path.interior))), np.finfo(float).tiny)
    return float(np.sum(u_at * eta.mass)) / scale


def stochastic_convolution(noise: NoiseField, sigma, alpha: float = 1.0) -> PathState:
    """Drift-free, zero-initial-data mild path: sum E(t - s) sigma dW."""
    mm = _MildMap(noise, lambda x: np.zeros_like(x), sigma, alpha)
    return PathState.from_interior(mm.base, noise.grid, {"solver": "stoch-conv",
                                                         "seed": noise.seed, "alpha": alpha})


@dataclass
class HolderFit:
    exponent: float
    ci: tuple
    lags: np.ndarray
    increments: np.ndarray


def _fit(lags, incs):
    res = stats.linregress(np.log(lags), np.log(incs))
    q = stats.t.ppf(0.975, max(len(lags) - 2, 1))
    return HolderFit(float(res.slope), (res.slope - q * res.stderr, res.slope + q * res.stderr),
                     np.asarray(lags), np.asarray(incs))


def holder_report(path: PathState, t_stop: int | None = None, time_lags=None, space_lags=None,
                  statistic: str = "rms"):
    """Log-log Hölder exponents in time and space.

    For each lag h the statistic is the root mean square of
    u(x, t + h) - u(x, t) over all grid pairs (and its spatial analogue), so
    the slope estimates the mean-square exponent.  ``statistic="max"`` uses
    the time average of max_x |u(x, t + h) - u(x, t)| instead; its slopes
    carry extreme-value log factors and read low on rough paths.  Default lags
    are dyadic, from max(dt, 2 dx^2 / alpha) to a sixteenth of the span in
    time and from dx to lam / 16 in space.
    """
    g = path.grid
    nt_used = g.nt + 1 if t_stop is None else int(t_stop)
    if nt_used < 9:
        raise ValueError("path shorter than 8 time steps")
    u = path.values[:, :nt_used]
    alpha = path.meta.get("alpha", 1.0)
    if time_lags is None:
        lo = max(1, int(math.ceil(2 * g.dx**2 / alpha / g.dt)))
        time_lags = [m for m in (2**k for k in range(20)) if lo <= m <= (nt_used - 1) // 16 or m == lo]
    if space_lags is None:
        space_lags = [m for m in (2**k for k in range(20)) if m <= (g.nx + 1) // 16] or [1]
    if statistic == "rms":
        tinc = [math.sqrt(np.mean((u[1:-1, m:] - u[1:-1, :-m]) ** 2)) for m in time_lags]
        sinc = [math.sqrt(np.mean((u[m:, 1:] - u[:-m, 1:]) ** 2)) for m in space_lags]
    elif statistic == "max":
        tinc = [np.mean(np.max(np.abs(u[:, m:] - u[:, :-m]), axis=0)) for m in time_lags]
        sinc = [np.mean(np.max(np.abs(u[m:, :] - u[:-m, :]), axis=0)) for m in space_lags]
    else:
        raise ValueError(f"unknown statistic {statistic!r}")
    tf = _fit(np.asarray(time_lags) * g.dt, tinc)
    sf = _fit(np.asarray(space_lags) * g.dx, sinc) if len(space_lags) > 1 else None
    return {"time_exponent_estimate": tf.exponent, "time_ci": tf.ci,
            "space_exponent_estimate": None if sf is None else sf.exponent,
            "space_ci": None if sf is None else sf.ci, "time_fit": tf, "space_fit": sf}
