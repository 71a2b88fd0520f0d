"""Localisation machinery: H_n / T_n cut-offs, the H-norm, stopping times."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class CutoffParams:
    """Localisation level and caps.

    ``abs_gradient`` selects the tau_M convention: True monitors
    |u_x(0+, t)| (unreflected problem), False the one-sided u_x(0+, t).
    """

    n: float = 16.0
    p: float = 2.5
    M: float = 50.0
    M_d: float = 1e6
    T: float = 0.1
    abs_gradient: bool = True

    def __post_init__(self):
        if not 2.0 < self.p < 3.0:
            raise ValueError("p must lie in (2, 3)")
        if self.n <= 0 or self.M <= 0 or self.M_d <= 0 or self.T <= 0:
            raise ValueError("n, M, M_d, T must be positive")

    @property
    def radius(self) -> float:
        """n^(1/p): edge of the flat band where T_n is the identity."""
        return self.n ** (1.0 / self.p)

    @property
    def lipschitz_bound(self) -> float:
        """Analytic bound on |T_n'|: 2 n^(1/p) + 3."""
        return 2.0 * self.radius + 3.0


def _ramp(v, params):
    return np.clip(np.abs(v) - params.radius, 0.0, 1.0)


def Hn(v, params: CutoffParams):
    """C^1 cut-off: 1 on |v| < n^(1/p), 0 on |v| > n^(1/p)+1, cubic smoothstep between."""
    r = _ramp(np.asarray(v, float), params)
    return 1.0 - r * r * (3.0 - 2.0 * r)


def Hn_prime(v, params: CutoffParams):
    v = np.asarray(v, float)
    r = _ramp(v, params)
    return -6.0 * r * (1.0 - r) * np.sign(v)


def Tn(v, params: CutoffParams):
    v = np.asarray(v, float)
    return Hn(v, params) * v


def Tn_prime(v, params: CutoffParams):
    v = np.asarray(v, float)
    return Hn(v, params) + Hn_prime(v, params) * v


def measured_lipschitz(params: CutoffParams, n_points: int = 200_001) -> float:
    """Largest difference quotient of T_n on a lattice covering the transition bands."""
    edge = params.radius + 2.0
    v = np.linspace(-edge, edge, n_points)
    return float(np.max(np.abs(np.diff(Tn(v, params)) / np.diff(v))))


def h_norm(field, x=None, atol: float = 0.0) -> float:
    """Discrete ||f||_H = max_i |f(x_i) / x_i| over interior nodes.

    ``field`` holds values on the full grid x_0 = 0, ..., x_{nx+1} = lam.
    """
    f = np.asarray(field, float)
    if abs(f[0]) > atol or abs(f[-1]) > atol:
        raise ValueError("H-norm needs zero boundary values")
    if x is None:
        x = np.linspace(0.0, 1.0, f.size)
    if f.size <= 2:
        return 0.0
    return float(np.max(np.abs(f[1:-1] / np.asarray(x)[1:-1])))


def h_norm_interior(values, x):
    """Vectorised H-norm over interior rows: values[..., i] at x[i] > 0."""
    return np.max(np.abs(values / x), axis=-1)


def boundary_gradient(field, dx: float) -> float:
    """Second-order one-sided u_x(0+) from full-grid values with field[0] = 0."""
    f = np.asarray(field, float)
    if f.shape[-1] < 3:
        raise ValueError("need at least two interior nodes")
    return (4.0 * f[..., 1] - f[..., 2]) / (2.0 * dx)


def interior_boundary_gradient(values, dx: float):
    """Same stencil on interior-only arrays (values[..., 0] = u(x_1))."""
    return (4.0 * values[..., 0] - values[..., 1]) / (2.0 * dx)


@dataclass
class PathClassification:
    tau_M: float
    tau_tilde_n: float
    tau_Md: float | None
    in_Omega_M: bool
    in_Omega_M_n: bool
    sup_h_norm: float
    sup_gradient: float
    tau_Md_defined: bool = False
    discrete_sup: bool = True

    def as_dict(self):
        def enc(v):
            return "inf" if isinstance(v, float) and math.isinf(v) else v
        return {k: enc(v) for k, v in self.__dict__.items()}


def _first_time(mask, times):
    idx = np.flatnonzero(mask)
    return float(times[idx[0]]) if idx.size else math.inf


def classify_path(path, params: CutoffParams, dpath=None) -> PathClassification:
    """Stopping times and Omega_M / Omega_M^n membership from grid-time suprema.

    Continuous-time suprema over [0, min(T, tau_M)) are replaced by maxima
    over grid times t_j <= T; a path is in Omega_M iff the gradient cap is
    never reached on that set.
    """
    times = path.grid.t
    window = times <= params.T + 1e-12 * params.T
    grad = path.boundary_grad
    mon = np.abs(grad) if params.abs_gradient else grad
    hn = path.h_norms()
    tau_M = _first_time((mon >= params.M) & window, times)
    tau_n = _first_time((hn >= params.n) & window, times)
    in_M = math.isinf(tau_M)
    sup_h = float(np.max(hn[window]))
    in_Mn = in_M and sup_h ** params.p < params.n
    tau_Md, defined = None, False
    if dpath is not None:
        trace_sup = dpath.trace_sup()
        tau_Md = _first_time((trace_sup >= params.M_d) & window[: trace_sup.size], times)
        defined = True
    return PathClassification(tau_M, tau_n, tau_Md, in_M, in_Mn, sup_h,
                              float(np.max(mon[window])), defined)
