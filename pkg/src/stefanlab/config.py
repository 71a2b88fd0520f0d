"""Run configuration: flat INI sections, named profiles, exhaustive validation."""
from __future__ import annotations

import configparser
import hashlib
import io
import math
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .cutoff import CutoffParams
from .noise_field import GridSpec

PROFILES = ("zero", "sine", "bump", "quadratic", "table")
SOLVERS = ("mild", "fd", "reflected")
OUTPUTS = ("report", "path_csv", "path_bin", "noise", "field", "front", "density")


class ConfigError(ValueError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.problems))


@dataclass(frozen=True)
class ProfileSpec:
    name: str = "zero"
    amplitude: float = 1.0
    table: str = ""

    def build(self, lam: float):
        """Callable of x on [0, lam]."""
        A = self.amplitude
        if self.name == "zero":
            return lambda x: np.zeros_like(np.asarray(x, float))
        if self.name == "sine":
            return lambda x: A * np.sin(np.pi * np.asarray(x, float) / lam)
        if self.name == "quadratic":
            return lambda x: A * np.asarray(x, float) * (lam - np.asarray(x, float))
        if self.name == "bump":
            def bump(x):
                z = (np.asarray(x, float) - 0.5 * lam) / (0.25 * lam)
                out = np.zeros_like(z)
                m = np.abs(z) < 1.0
                out[m] = A * np.exp(1.0 - 1.0 / (1.0 - z[m] ** 2))
                return out
            return bump
        if self.name == "table":
            tab = np.loadtxt(self.table, delimiter=",", ndmin=2)
            xs, vs = tab[:, 0], tab[:, 1]
            order = np.argsort(xs)
            xs, vs = xs[order], vs[order]
            return lambda x: A * np.interp(np.asarray(x, float), xs, vs)
        raise ValueError(f"unknown profile {self.name!r}")


@dataclass(frozen=True)
class MalliavinSpec:
    probe: float = 0.5  # fraction of lam
    eps: tuple = (0.0625, 0.125, 0.25, 0.5)  # fractions of b
    b: float = 1.0  # fraction of T
    node_stride: int = 1
    bump_cells: int = 4
    thresholds: tuple = (1e-12, 1e-10)


@dataclass(frozen=True)
class FrontSpec:
    s0_minus: float = -0.05
    s0_plus: float = 0.05
    a: float = math.nan  # NaN: lam beyond the initial front
    b: float = math.nan


def _f(v) -> str:
    return repr(float(v))


def _fl(vs) -> str:
    return ",".join(_f(v) for v in vs)


def _default_tol():
    return {"picard": 1e-8, "complementarity": 1e-8, "moment_drift": 0.10, "bump": 0.01}


@dataclass(frozen=True)
class RunConfig:
    grid: GridSpec = GridSpec(32, 256, 1.0, 0.1)
    cutoff: CutoffParams = CutoffParams()
    sigma: ProfileSpec = ProfileSpec("sine", 0.5)
    u0: ProfileSpec = ProfileSpec("quadratic", 1.0)
    alpha: float = 1.0
    solver: str = "mild"
    drift: bool = True
    use_cutoff: bool = True
    k_max: int = 60
    ensemble_size: int = 1
    base_seed: int = 0
    outputs: tuple = ("report", "path_csv")
    n_sweep: tuple = ()
    tolerances: dict = field(default_factory=_default_tol, hash=False)
    malliavin: MalliavinSpec = MalliavinSpec()
    front: FrontSpec = FrontSpec()

    def with_seed(self, seed: int) -> "RunConfig":
        return replace(self, base_seed=int(seed))

    @property
    def sweep(self) -> tuple:
        """n values for the Omega_M^n sweep (default n0 x {1, 2, 4, 8})."""
        return self.n_sweep or tuple(self.cutoff.n * k for k in (1, 2, 4, 8))

    # -- INI ------------------------------------------------------------------
    def to_ini(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        g, c, m = self.grid, self.cutoff, self.malliavin
        cp["grid"] = {"nx": g.nx, "nt": g.nt, "lam": _f(g.lam), "T": _f(g.horizon)}
        cp["model"] = {"alpha": _f(self.alpha), "solver": self.solver, "drift": str(self.drift),
                       "use_cutoff": str(self.use_cutoff), "k_max": self.k_max}
        cp["cutoff"] = {"n": _f(c.n), "p": _f(c.p), "M": _f(c.M), "M_d": _f(c.M_d),
                        "T": _f(c.T), "abs_gradient": str(c.abs_gradient)}
        for name in ("sigma", "u0"):
            s = getattr(self, name)
            cp[name] = {"profile": s.name, "amplitude": _f(s.amplitude), "table": s.table}
        cp["run"] = {"ensemble_size": self.ensemble_size, "base_seed": self.base_seed,
                     "outputs": ",".join(self.outputs), "n_sweep": _fl(self.n_sweep)}
        cp["tolerances"] = {k: _f(v) for k, v in sorted(self.tolerances.items())}
        cp["malliavin"] = {"probe": _f(m.probe), "eps": _fl(m.eps), "b": _f(m.b),
                           "node_stride": m.node_stride, "bump_cells": m.bump_cells,
                           "thresholds": _fl(m.thresholds)}
        cp["front"] = {k.name: _f(getattr(self.front, k.name)) for k in fields(self.front)}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    def digest(self) -> str:
        return hashlib.sha256(self.to_ini().encode()).hexdigest()

    @classmethod
    def from_ini(cls, text: str) -> "RunConfig":
        """Parse INI text; missing keys take defaults.  Raises ConfigError listing every problem."""
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        cp.read_string(text)
        d = cls()
        problems = []

        def get(sec, key, conv, default):
            if not cp.has_option(sec, key):
                return default
            raw = cp.get(sec, key).strip()
            try:
                return conv(raw)
            except (TypeError, ValueError) as exc:
                problems.append(f"[{sec}] {key} = {raw!r}: {exc}")
                return default

        def floats(raw):
            return tuple(float(v) for v in raw.split(",") if v.strip())

        def strs(raw):
            return tuple(v.strip() for v in raw.split(",") if v.strip())

        def boolean(raw):
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError("not a boolean")

        g = d.grid
        nx, nt = get("grid", "nx", int, g.nx), get("grid", "nt", int, g.nt)
        lam, T = get("grid", "lam", float, g.lam), get("grid", "T", float, g.horizon)
        grid = g
        try:
            grid = GridSpec(nx, nt, lam, T)
        except ValueError as exc:
            problems.append(f"[grid] {exc}")
        c = d.cutoff
        cut = c
        try:
            cut = CutoffParams(get("cutoff", "n", float, c.n), get("cutoff", "p", float, c.p),
                               get("cutoff", "M", float, c.M), get("cutoff", "M_d", float, c.M_d),
                               get("cutoff", "T", float, T),
                               get("cutoff", "abs_gradient", boolean, c.abs_gradient))
        except ValueError as exc:
            problems.append(f"[cutoff] {exc}")
        prof = {}
        for name in ("sigma", "u0"):
            dp = getattr(d, name)
            prof[name] = ProfileSpec(get(name, "profile", str, dp.name),
                                     get(name, "amplitude", float, dp.amplitude),
                                     get(name, "table", str, dp.table))
        m = d.malliavin
        mal = MalliavinSpec(get("malliavin", "probe", float, m.probe),
                            get("malliavin", "eps", floats, m.eps),
                            get("malliavin", "b", float, m.b),
                            get("malliavin", "node_stride", int, m.node_stride),
                            get("malliavin", "bump_cells", int, m.bump_cells),
                            get("malliavin", "thresholds", floats, m.thresholds))
        f = d.front
        fr = FrontSpec(*(get("front", k.name, float, getattr(f, k.name)) for k in fields(f)))
        tol = dict(d.tolerances)
        if cp.has_section("tolerances"):
            for k in cp.options("tolerances"):
                tol[k] = get("tolerances", k, float, tol.get(k))
        cfg = cls(grid, cut, prof["sigma"], prof["u0"],
                  get("model", "alpha", float, d.alpha), get("model", "solver", str, d.solver),
                  get("model", "drift", boolean, d.drift),
                  get("model", "use_cutoff", boolean, d.use_cutoff),
                  get("model", "k_max", int, d.k_max),
                  get("run", "ensemble_size", int, d.ensemble_size),
                  get("run", "base_seed", int, d.base_seed),
                  get("run", "outputs", strs, d.outputs), get("run", "n_sweep", floats, d.n_sweep),
                  tol, mal, fr)
        problems += cfg.problems()
        if problems:
            raise ConfigError(problems)
        return cfg

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        with open(path) as fh:
            return cls.from_ini(fh.read())

    # -- validation -----------------------------------------------------------
    def problems(self) -> list:
        """Every violated requirement, as readable strings (empty if valid)."""
        out = []
        g = self.grid
        if self.alpha <= 0:
            out.append("[model] alpha must be positive")
        if self.solver not in SOLVERS:
            out.append(f"[model] solver must be one of {SOLVERS}")
        if self.solver == "fd" and self.alpha > 0 and g.cfl(self.alpha) > 0.5:
            out.append(f"[model] fd solver needs alpha dt/dx^2 <= 0.5 (got {g.cfl(self.alpha):.3f})")
        if self.cutoff.T > g.horizon * (1 + 1e-12):
            out.append("[cutoff] T may not exceed the grid horizon")
        if self.k_max < 1:
            out.append("[model] k_max must be >= 1")
        if self.ensemble_size < 1:
            out.append("[run] ensemble_size must be >= 1")
        bad = [o for o in self.outputs if o not in OUTPUTS]
        if bad:
            out.append(f"[run] unknown outputs {bad}; choose from {OUTPUTS}")
        if any(n <= 0 for n in self.n_sweep):
            out.append("[run] n_sweep values must be positive")
        xs = np.linspace(0.0, g.lam, 4 * (g.nx + 1) + 1)
        for name in ("sigma", "u0"):
            spec = getattr(self, name)
            if spec.name not in PROFILES:
                out.append(f"[{name}] unknown profile {spec.name!r}; choose from {PROFILES}")
                continue
            if spec.name == "table" and not spec.table:
                out.append(f"[{name}] table profile needs a table path")
                continue
            try:
                v = spec.build(g.lam)(xs)
            except (OSError, ValueError) as exc:
                out.append(f"[{name}] cannot build profile: {exc}")
                continue
            scale = max(float(np.max(np.abs(v))), 1.0)
            if abs(v[0]) > 1e-12 * scale or abs(v[-1]) > 1e-12 * scale:
                out.append(f"[{name}] profile must vanish at 0 and lam")
            if name == "u0" and np.min(v) < 0.0:
                out.append("[u0] initial data must be nonnegative")
        m = self.malliavin
        if not 0.0 < m.probe < 1.0:
            out.append("[malliavin] probe must be a fraction in (0, 1)")
        if len(m.eps) < 4:
            out.append("[malliavin] need at least 4 eps values")
        if any(not 0.0 < e <= 1.0 for e in m.eps):
            out.append("[malliavin] eps fractions must lie in (0, 1]")
        if not 0.0 < m.b <= 1.0:
            out.append("[malliavin] b must be a fraction of T in (0, 1]")
        if m.node_stride < 1 or m.bump_cells < 0:
            out.append("[malliavin] node_stride >= 1 and bump_cells >= 0 required")
        f = self.front
        if not f.s0_minus < f.s0_plus:
            out.append("[front] need s0_minus < s0_plus")
        if not math.isnan(f.a) and not f.a < f.s0_minus:
            out.append("[front] wall a must lie left of s0_minus")
        if not math.isnan(f.b) and not f.s0_plus < f.b:
            out.append("[front] wall b must lie right of s0_plus")
        for k, v in self.tolerances.items():
            if not v > 0:
                out.append(f"[tolerances] {k} must be positive")
        return out

    def validate(self) -> "RunConfig":
        probs = self.problems()
        if probs:
            raise ConfigError(probs)
        return self

    def __eq__(self, other):
        return isinstance(other, RunConfig) and self.to_ini() == other.to_ini()

    def __hash__(self):
        return hash(self.to_ini())
