"""Dirichlet heat kernel on (0, lam) for v_t = alpha v_xx.

The production formula is the method-of-images series; :func:`eigen_kernel`
evaluates the sine (eigenfunction) expansion and is kept as an independent
check.  The two converge in complementary regimes: images are exact-to-
rounding at small t, the eigen series converges fast at large t.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import simpson


class KernelDomainError(ValueError):
    """Raised for t <= 0 or non-finite kernel arguments."""


@dataclass(frozen=True)
class KernelParams:
    alpha: float = 1.0
    lam: float = 1.0
    image_count: int = 8
    series_tol: float = 1e-12

    def __post_init__(self):
        if not (self.alpha > 0 and self.lam > 0):
            raise ValueError("alpha and lam must be positive")
        if self.image_count < 1:
            raise ValueError("image_count must be >= 1")


def _check(x, y, t, lam):
    x, y, t = np.asarray(x, float), np.asarray(y, float), np.asarray(t, float)
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y)) and np.all(np.isfinite(t))):
        raise KernelDomainError("non-finite kernel argument")
    if np.any(t <= 0):
        raise KernelDomainError("kernel needs t > 0; use the identity at t = 0")
    if np.any((x < 0) | (x > lam) | (y < 0) | (y > lam)):
        raise KernelDomainError("coordinates must lie in [0, lam]")
    return x, y, t


def _gauss(z, t, alpha):
    return np.exp(-z * z / (4.0 * alpha * t)) / np.sqrt(4.0 * np.pi * alpha * t)


def _images(x, y, t, params):
    k = np.arange(-params.image_count, params.image_count + 1, dtype=float)
    shape = np.broadcast(x, y, t).shape
    k = k.reshape((-1,) + (1,) * len(shape))
    two_l = 2.0 * params.lam
    direct = x - y + k * two_l
    mirror = x + y + k * two_l
    return direct, mirror


def kernel_value(x, y, t, params: KernelParams = KernelParams()):
    """G(x, y, t) by the truncated image series.

    Broadcasts over array arguments.  Values on the Dirichlet walls are
    returned as exact zeros.
    """
    x, y, t = _check(x, y, t, params.lam)
    direct, mirror = _images(x, y, t, params)
    a = params.alpha
    g = (_gauss(direct, t, a) - _gauss(mirror, t, a)).sum(axis=0)
    wall = (x == 0) | (x == params.lam) | (y == 0) | (y == params.lam)
    g = np.where(wall, 0.0, g)
    # rounding can leave -1e-17 next to the walls
    g = np.maximum(g, 0.0)
    return g if g.ndim else float(g)


def kernel_dy(x, y, t, params: KernelParams = KernelParams()):
    """dG/dy by term-by-term differentiation of the image series."""
    x, y, t = _check(x, y, t, params.lam)
    direct, mirror = _images(x, y, t, params)
    a = params.alpha
    two_at = 2.0 * a * t
    gy = (direct / two_at * _gauss(direct, t, a)
          + mirror / two_at * _gauss(mirror, t, a)).sum(axis=0)
    return gy if gy.ndim else float(gy)


def eigen_kernel(x, y, t, params: KernelParams = KernelParams(), tol: float = 1e-14,
                 max_terms: int = 100_000):
    """Sine-series G, truncated once the envelope 2/lam exp(-alpha k^2 pi^2 t/lam^2) < tol."""
    x, y, t = _check(x, y, t, params.lam)
    lam, a = params.lam, params.alpha
    tmin = float(np.min(t))
    # envelope bound of term k
    kmax = int(np.ceil(np.sqrt(max(np.log(2.0 / (lam * tol)), 1.0) * lam**2 / (a * np.pi**2 * tmin)))) + 1
    kmax = min(kmax, max_terms)
    shape = np.broadcast(x, y, t).shape
    k = np.arange(1, kmax + 1, dtype=float).reshape((-1,) + (1,) * len(shape))
    w = k * np.pi / lam
    terms = (2.0 / lam) * np.sin(w * x) * np.sin(w * y) * np.exp(-a * w * w * t)
    g = terms.sum(axis=0)
    return g if g.ndim else float(g)


def _window(x, t, params, n=2001, width=12.0):
    """Quadrature nodes covering the support of G(x, ., t) to ~exp(-36)."""
    half = width * np.sqrt(2.0 * params.alpha * t)
    lo, hi = max(0.0, x - half), min(params.lam, x + half)
    return np.linspace(lo, hi, n)


def smooth_source(u0, x, t, params: KernelParams = KernelParams(), n: int = 2001):
    """v(x, t) = int u0(y) G(x, y, t) dy, composite Simpson on a kernel-sized window.

    ``u0`` is a vectorised callable.  At t = 0 the identity branch returns u0(x).
    """
    if t < 0:
        raise KernelDomainError("t must be >= 0")
    if t == 0:
        return float(u0(np.asarray(x, float)))
    if x <= 0 or x >= params.lam:
        return 0.0
    y = _window(x, t, params, n)
    return float(simpson(u0(y) * kernel_value(x, y, t, params), x=y))


def smooth_source_lipschitz(u0, xs, ts, params: KernelParams = KernelParams()):
    """Largest observed |v(x,t2) - v(x,t1)| / |t2 - t1| over consecutive times."""
    ts = np.asarray(ts, float)
    worst = 0.0
    for x in xs:
        v = np.array([smooth_source(u0, x, t, params) for t in ts])
        worst = max(worst, float(np.max(np.abs(np.diff(v)) / np.diff(ts))))
    return worst


@dataclass
class BoundsReport:
    """Measured constants for the Gaussian kernel estimates at each time.

    ``sup_kernel``:  sup_{x,y} G(x,y,t) * t^(1/2)
    ``gauss_integral``: sup_x int exp(-c|x-y|^2/t) dy / t^(1/2)
    ``grad_integral``: sup_x int |G_y(x,y,t)| dy * t^(1/2)
    ``grad_pointwise``: sup_{x,y} |G_y| t / exp(-c|x-y|^2/t)
    """

    t_grid: np.ndarray
    gauss_c: float
    sup_kernel: np.ndarray
    gauss_integral: np.ndarray
    grad_integral: np.ndarray
    grad_pointwise: np.ndarray
    growth_limit: float = 1.10
    passed: bool = field(default=False)

    def rows(self):
        for i, t in enumerate(self.t_grid):
            yield (float(t), float(self.sup_kernel[i]), float(self.gauss_integral[i]),
                   float(self.grad_integral[i]), float(self.grad_pointwise[i]))


def _saturated(values, t_grid, limit):
    """True if the constants are finite and stop growing at the small-t end.

    A blow-up like t^(-e) keeps a fixed ratio between decades; a bounded
    constant approaches a limit, so the ratio across the two smallest times
    must fall under ``limit``.
    """
    if not np.all(np.isfinite(values)):
        return False
    order = np.argsort(t_grid)[::-1]  # decreasing t
    v = np.asarray(values)[order]
    if len(v) < 2:
        return True
    return bool(v[-1] <= limit * v[-2])


def verify_kernel_bounds(t_grid, params: KernelParams = KernelParams(), nx: int = 201,
                         gauss_c: float | None = None, growth_limit: float = 1.10) -> BoundsReport:
    """Measure the constants of the Gaussian kernel bounds on a list of times."""
    t_grid = np.asarray(list(t_grid), float)
    if t_grid.size == 0:
        raise ValueError("t_grid must be nonempty")
    if np.any(t_grid <= 0):
        raise KernelDomainError("times must be positive")
    a, lam = params.alpha, params.lam
    c = 1.0 / (8.0 * a) if gauss_c is None else gauss_c
    xs = np.linspace(0.0, lam, nx)[1:-1]
    sup_k, gint, grad_int, grad_pt = [], [], [], []
    for t in t_grid:
        ks, gi, gr, gp = 0.0, 0.0, 0.0, 0.0
        for x in xs:
            y = _window(x, t, params, n=1201, width=14.0)
            g = kernel_value(x, y, t, params)
            gy = kernel_dy(x, y, t, params)
            ks = max(ks, float(g.max()))
            yy = np.linspace(0.0, lam, 4001) if y[-1] - y[0] >= lam else y
            gi = max(gi, float(simpson(np.exp(-c * (x - yy) ** 2 / t), x=yy)))
            gr = max(gr, float(simpson(np.abs(gy), x=y)))
            env = np.exp(-c * (x - y) ** 2 / t)
            mask = env > 1e-300
            gp = max(gp, float(np.max(np.abs(gy[mask]) * t / env[mask])))
        sup_k.append(ks * np.sqrt(t))
        gint.append(gi / np.sqrt(t))
        grad_int.append(gr * np.sqrt(t))
        grad_pt.append(gp)
    rep = BoundsReport(t_grid, c, np.array(sup_k), np.array(gint), np.array(grad_int),
                       np.array(grad_pt), growth_limit)
    rep.passed = all(_saturated(v, t_grid, growth_limit)
                     for v in (rep.sup_kernel, rep.gauss_integral, rep.grad_integral,
                               rep.grad_pointwise))
    return rep


def kernel_mass(x, t, params: KernelParams = KernelParams()):
    """int_0^lam G(x, y, t) dy."""
    return smooth_source(lambda y: np.ones_like(y), x, t, params)


def chapman_kolmogorov_residual(x, y, t1, t2, params: KernelParams = KernelParams(), n=4001):
    """|int G(x,z,t1) G(z,y,t2) dz - G(x,y,t1+t2)|."""
    z = np.linspace(0.0, params.lam, n)
    lhs = simpson(kernel_value(x, z, t1, params) * kernel_value(z, y, t2, params), x=z)
    return abs(float(lhs) - kernel_value(x, y, t1 + t2, params))


def power_time_integral(x, t, p, sigma, params: KernelParams = KernelParams(),
                        tau_min: float = 1e-8, n_tau: int = 400):
    """int_{tau_min}^t int |G(x,y,tau) sigma(y)|^p dy dtau.

    The tau integral runs on a geometric grid (the integrand behaves like
    tau^((1-p)/2) near zero), so the truncated value converges as tau_min -> 0
    exactly when p < 3.
    """
    if not 0 < tau_min < t:
        raise ValueError("need 0 < tau_min < t")
    taus = np.geomspace(tau_min, t, n_tau)
    inner = np.empty_like(taus)
    for i, tau in enumerate(taus):
        y = _window(x, tau, params, n=801)
        inner[i] = simpson(np.abs(kernel_value(x, y, tau, params) * sigma(y)) ** p, x=y)
    # integrate in log tau: d tau = tau d(log tau)
    return float(simpson(inner * taus, x=np.log(taus)))


def lattice_agreement(params: KernelParams = KernelParams(), n: int = 17, times=None) -> float:
    """Worst image-vs-eigen discrepancy on an n x n node lattice.

    Errors are taken relative to max_{x,y} G(x, y, t) at the same t, since
    both series are ~1e-17 near the walls and a pointwise ratio is noise there.
    Default times are 5 geometric values from 0.01 lam^2/alpha to lam^2/alpha.
    """
    if times is None:
        times = np.geomspace(0.01, 1.0, 5) * params.lam**2 / params.alpha
    g = np.linspace(0.0, params.lam, n)
    X, Y = np.meshgrid(g, g, indexing="ij")
    worst = 0.0
    for t in times:
        img = kernel_value(X, Y, t, params)
        eig = eigen_kernel(X, Y, t, params)
        worst = max(worst, float(np.max(np.abs(img - eig)) / np.max(np.abs(eig))))
    return worst
