"""Potentials, perturbations, boundary conditions and grids.

A potential is an immutable rule plus parameters.  Rules evaluate
vectorized over arrays of points; random rules draw from a keyed hash so
any site is reproducible without streaming state.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernels

KINDS = ("continuum", "discrete")
POTENTIAL_RULES = ("zero", "constant", "euler", "linear", "decaying_anderson", "anderson",
                   "tabulated", "power_law", "exp_weighted", "compact_support", "sum")
PERTURBATION_RULES = ("zero", "compact_support", "power_law", "exp_weighted", "tabulated", "sum")
MODULATIONS = ("none", "alternating", "sine")
SQRT3 = math.sqrt(3.0)


class DomainError(ValueError):
    """Point outside the domain of a rule."""


class SpecError(ValueError):
    """Malformed potential or perturbation description."""


def _freeze(value):
    if isinstance(value, np.ndarray):
        return tuple(float(v) for v in value.ravel())
    if isinstance(value, list):
        return tuple(_freeze(v) for v in value)
    return value


@dataclass(frozen=True)
class PotentialSpec:
    """Half-line potential: ``kind`` is continuum or discrete, ``rule`` one of POTENTIAL_RULES."""

    kind: str
    rule: str
    params: tuple = ()
    terms: tuple = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SpecError(f"unknown kind {self.kind!r}")
        if self.rule not in POTENTIAL_RULES:
            raise SpecError(f"unknown rule {self.rule!r}")
        object.__setattr__(self, "params", tuple(sorted((k, _freeze(v)) for k, v in dict(self.params).items())))
        _validate(self)

    def p(self, name, default=None):
        for k, v in self.params:
            if k == name:
                return v
        return default

    @property
    def bound(self):
        """Declared sup |V| over the domain, or None when unbounded."""
        return _bound(self)

    @property
    def bounded(self):
        return self.bound is not None

    def __call__(self, points):
        return evaluate(self, points)

    def to_dict(self):
        d = {"kind": self.kind, "rule": self.rule}
        for k, v in self.params:
            d[k] = list(v) if isinstance(v, tuple) else v
        if self.terms:
            d["terms"] = [t.to_dict() for t in self.terms]
        return d


class PerturbationSpec(PotentialSpec):
    """A potential restricted to the decaying perturbation rules."""

    def __post_init__(self):
        if self.rule not in PERTURBATION_RULES:
            raise SpecError(f"rule {self.rule!r} is not a perturbation rule")
        super().__post_init__()


def make(kind, rule, *, perturbation=False, terms=(), **params):
    cls = PerturbationSpec if perturbation else PotentialSpec
    return cls(kind=kind, rule=rule, params=tuple(params.items()), terms=tuple(terms))


def zero(kind="continuum"):
    return make(kind, "zero")


def constant(c, kind="discrete"):
    return make(kind, "constant", c=float(c))


def euler(c=-3.0 / 16.0, x_cut=1.0, kind="continuum"):
    return make(kind, "euler", c=float(c), x_cut=float(x_cut))


def linear(slope, kind="continuum"):
    return make(kind, "linear", slope=float(slope))


def decaying_anderson(coupling, seed, decay=0.5):
    return make("discrete", "decaying_anderson", coupling=float(coupling), seed=int(seed), decay=float(decay))


def anderson(coupling, seed):
    return make("discrete", "anderson", coupling=float(coupling), seed=int(seed))


def tabulated(points, values, kind="continuum", perturbation=False):
    return make(kind, "tabulated", perturbation=perturbation,
                points=np.asarray(points, float), values=np.asarray(values, float))


def power_law(C, eta, kind="continuum", offset=1.0, modulation="none", freq=1.0, phase=0.0):
    return make(kind, "power_law", perturbation=True, C=float(C), eta=float(eta), offset=float(offset),
                modulation=modulation, freq=float(freq), phase=float(phase))


def exp_weighted(C, rate, kind="continuum"):
    return make(kind, "exp_weighted", perturbation=True, C=float(C), rate=float(rate))


def compact_support(values, support_end, kind="discrete"):
    return make(kind, "compact_support", perturbation=True,
                values=np.asarray(values, float), support_end=float(support_end))


def no_perturbation(kind="continuum"):
    return make(kind, "zero", perturbation=True)


def sum_specs(specs: Sequence[PotentialSpec]):
    specs = tuple(specs)
    kinds = {s.kind for s in specs}
    if len(kinds) != 1:
        raise TypeError(f"cannot add potentials of kinds {sorted(kinds)}")
    return PotentialSpec(kind=specs[0].kind, rule="sum", terms=specs)


def sum_potential(base: PotentialSpec, pert: PotentialSpec) -> PotentialSpec:
    """Pointwise V0 + W; kinds must match."""
    if base.kind != pert.kind:
        raise TypeError(f"kind mismatch: {base.kind} + {pert.kind}")
    return sum_specs((base, pert))


def _validate(spec):
    r = spec.rule
    need = {
        "constant": ("c",), "euler": ("c", "x_cut"), "linear": ("slope",),
        "decaying_anderson": ("coupling", "seed"), "anderson": ("coupling", "seed"),
        "tabulated": ("points", "values"), "power_law": ("C", "eta"),
        "exp_weighted": ("C", "rate"), "compact_support": ("values", "support_end"),
    }.get(r, ())
    for name in need:
        if spec.p(name) is None:
            raise SpecError(f"rule {r!r} needs parameter {name!r}")
    if r in ("decaying_anderson", "anderson") and spec.kind != "discrete":
        raise SpecError(f"rule {r!r} is discrete only")
    if r == "euler" and spec.p("x_cut") <= 0:
        raise SpecError("euler needs x_cut > 0")
    if r == "tabulated":
        pts, vals = spec.p("points"), spec.p("values")
        if len(pts) != len(vals) or len(pts) < 1:
            raise SpecError("tabulated needs equal-length non-empty points and values")
        if any(b <= a for a, b in zip(pts, pts[1:])):
            raise SpecError("tabulated points must be strictly increasing")
    if r == "power_law":
        if spec.p("modulation", "none") not in MODULATIONS:
            raise SpecError(f"unknown modulation {spec.p('modulation')!r}")
        if spec.p("eta") < 0 or spec.p("offset", 1.0) < 0:
            raise SpecError("power_law needs eta >= 0 and offset >= 0")
    if r == "compact_support" and len(spec.p("values")) < 1:
        raise SpecError("compact_support needs at least one value")
    if r == "sum":
        if not spec.terms:
            raise SpecError("sum needs terms")
        if any(t.kind != spec.kind for t in spec.terms):
            raise TypeError("sum terms must share the kind")


def _bound(spec):
    r = spec.rule
    if r == "zero":
        return 0.0
    if r == "constant":
        return abs(spec.p("c"))
    if r == "euler":
        return abs(spec.p("c")) / spec.p("x_cut") ** 2
    if r == "linear":
        return 0.0 if spec.p("slope") == 0 else None
    if r in ("decaying_anderson", "anderson"):
        return abs(spec.p("coupling")) * SQRT3
    if r in ("tabulated", "compact_support"):
        return float(max(abs(v) for v in spec.p("values")))
    if r == "power_law":
        off = spec.p("offset", 1.0)
        lo = off if off > 0 else (1.0 if spec.kind == "discrete" else 0.0)
        if lo == 0.0:
            return None if spec.p("eta") > 0 else abs(spec.p("C"))
        return abs(spec.p("C")) * lo ** (-spec.p("eta"))
    if r == "exp_weighted":
        return abs(spec.p("C")) * (1.0 if spec.p("rate") >= 0 else math.inf)
    if r == "sum":
        bounds = [t.bound for t in spec.terms]
        return None if any(b is None for b in bounds) else float(sum(bounds))
    raise SpecError(r)  # pragma: no cover


def _check_domain(spec, x):
    if np.any(~np.isfinite(x)) or np.any(x < 0):
        raise DomainError(f"points must be finite and >= 0 for a half-line potential")
    if spec.kind == "discrete" and np.any(x != np.round(x)):
        raise DomainError("discrete potentials are evaluated at integer sites")


def anderson_variables(seed, sites):
    """X(n) = sqrt(3)(2U - 1), i.i.d. uniform on [-sqrt3, sqrt3], keyed on (seed, n)."""
    sites = np.asarray(sites, dtype=np.int64)
    if sites.size == 0:
        return np.zeros(0)
    lo, hi = int(sites.min()), int(sites.max())
    u = kernels.hash_uniform(int(seed) & 0xFFFFFFFFFFFFFFFF, lo, hi - lo + 1)
    return SQRT3 * (2.0 * u[sites - lo] - 1.0)


def _eval(spec, x):
    r = spec.rule
    if r == "zero":
        return np.zeros_like(x)
    if r == "constant":
        return np.full_like(x, spec.p("c"))
    if r == "euler":
        xc = spec.p("x_cut")
        return spec.p("c") / np.maximum(x, xc) ** 2
    if r == "linear":
        return spec.p("slope") * x
    if r in ("decaying_anderson", "anderson"):
        if np.any(x < 1):
            raise DomainError("Anderson potentials live on sites n >= 1")
        decay = spec.p("decay", 0.5) if r == "decaying_anderson" else 0.0
        xv = anderson_variables(spec.p("seed"), x)
        return spec.p("coupling") * x ** (-decay) * xv
    if r == "tabulated":
        pts = np.asarray(spec.p("points"))
        vals = np.asarray(spec.p("values"))
        if spec.kind == "discrete":
            idx = np.searchsorted(pts, x)
            ok = (idx < len(pts)) & (pts[np.minimum(idx, len(pts) - 1)] == x)
            if not np.all(ok):
                raise DomainError("site not present in tabulated potential")
            return vals[idx]
        if np.any(x < pts[0]) or np.any(x > pts[-1]):
            raise DomainError("point outside tabulated range")
        return np.interp(x, pts, vals)
    if r == "power_law":
        off = spec.p("offset", 1.0)
        base = off + x
        if np.any(base <= 0):
            raise DomainError("power_law with offset 0 is undefined at the origin")
        env = spec.p("C") * base ** (-spec.p("eta"))
        mod = spec.p("modulation", "none")
        if mod == "alternating":
            env = env * np.where(np.round(x) % 2 == 0, 1.0, -1.0)
        elif mod == "sine":
            env = env * np.sin(spec.p("freq", 1.0) * x + spec.p("phase", 0.0))
        return env
    if r == "exp_weighted":
        return spec.p("C") * np.exp(-spec.p("rate") * x)
    if r == "compact_support":
        vals = np.asarray(spec.p("values"))
        end = spec.p("support_end")
        if spec.kind == "discrete":
            out = np.zeros_like(x)
            idx = x.astype(np.int64) - 1
            ok = (idx >= 0) & (idx < len(vals)) & (x <= end)
            out[ok] = vals[idx[ok]]
            return out
        nodes = np.linspace(0.0, end, len(vals))
        out = np.interp(x, nodes, vals) if len(vals) > 1 else np.full_like(x, vals[0])
        return np.where(x <= end, out, 0.0)
    if r == "sum":
        return sum(_eval(t, x) for t in spec.terms)
    raise SpecError(r)  # pragma: no cover


def evaluate(spec: PotentialSpec, points) -> np.ndarray:
    """Vectorized evaluation at an array of points (sites for discrete kinds)."""
    x = np.atleast_1d(np.asarray(points, dtype=np.float64))
    _check_domain(spec, x)
    out = _eval(spec, x)
    if np.any(np.isnan(out)):
        raise DomainError("potential evaluated to NaN")
    return out


def evaluate_potential(spec: PotentialSpec, point) -> float:
    return float(evaluate(spec, [point])[0])


def derivative(spec: PotentialSpec, points) -> tuple[np.ndarray, bool]:
    """dV/dx for continuum rules; returns (values, exact).

    ``exact`` is False where centered differences were used (tabulated, compact-support).
    """
    if spec.kind != "continuum":
        raise SpecError("derivatives are defined for continuum potentials only")
    x = np.atleast_1d(np.asarray(points, dtype=np.float64))
    _check_domain(spec, x)
    return _deriv(spec, x)


def _deriv(spec, x):
    r = spec.rule
    if r in ("zero", "constant"):
        return np.zeros_like(x), True
    if r == "euler":
        xc = spec.p("x_cut")
        return np.where(x > xc, -2.0 * spec.p("c") / np.maximum(x, xc) ** 3, 0.0), True
    if r == "linear":
        return np.full_like(x, spec.p("slope")), True
    if r == "power_law":
        off, eta, C = spec.p("offset", 1.0), spec.p("eta"), spec.p("C")
        base = off + x
        env = C * base ** (-eta)
        denv = -eta * C * base ** (-eta - 1.0)
        mod = spec.p("modulation", "none")
        if mod == "sine":
            f, ph = spec.p("freq", 1.0), spec.p("phase", 0.0)
            return denv * np.sin(f * x + ph) + env * f * np.cos(f * x + ph), True
        if mod == "alternating":
            raise SpecError("alternating modulation has no continuum derivative")
        return denv, True
    if r == "exp_weighted":
        return -spec.p("rate") * spec.p("C") * np.exp(-spec.p("rate") * x), True
    if r == "sum":
        parts = [_deriv(t, x) for t in spec.terms]
        return sum(p[0] for p in parts), all(p[1] for p in parts)
    # tabulated-like rules: centered differences on a small stencil
    d = 1e-5 * np.maximum(1.0, x)
    lo = np.maximum(x - d, 0.0)
    return (_eval(spec, x + d) - _eval(spec, lo)) / (x + d - lo), False


def load_tabulated(path, kind="continuum", perturbation=False):
    """Two-column text file (point or index, value)."""
    data = np.loadtxt(path, ndmin=2)
    if data.shape[1] != 2:
        raise SpecError(f"{path}: expected two columns, got {data.shape[1]}")
    return tabulated(data[:, 0], data[:, 1], kind=kind, perturbation=perturbation)


@dataclass(frozen=True)
class BoundaryCondition:
    """Boundary angle, normalized into [0, pi)."""

    theta: float

    def __post_init__(self):
        object.__setattr__(self, "theta", float(np.mod(self.theta, math.pi)))

    @staticmethod
    def compose(theta):
        """Normalize an arbitrary angle; returns (bc, sign) with phi_{1,theta} = sign * phi_{1,bc.theta}."""
        k = math.floor(theta / math.pi)
        return BoundaryCondition(theta - k * math.pi), (-1.0) ** (k % 2)

    def shifted(self, delta):
        return BoundaryCondition.compose(self.theta + delta)


@dataclass(frozen=True)
class Grid:
    """Uniform grid from 0 to ``horizon`` (sites 0..N for discrete kinds)."""

    kind: str
    horizon: float
    step: float = 1.0
    n_steps: int = field(init=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SpecError(f"unknown kind {self.kind!r}")
        if not (self.horizon > 0 and math.isfinite(self.horizon)):
            raise SpecError("horizon must be finite and positive")
        if self.kind == "discrete":
            if self.horizon != int(self.horizon):
                raise SpecError("discrete horizon must be an integer")
            object.__setattr__(self, "step", 1.0)
            object.__setattr__(self, "n_steps", int(self.horizon))
        else:
            if not self.step > 0:
                raise SpecError("step must be positive")
            n = max(1, int(math.ceil(self.horizon / self.step - 1e-9)))
            object.__setattr__(self, "n_steps", n)
            object.__setattr__(self, "step", self.horizon / n)

    @property
    def points(self):
        if self.kind == "discrete":
            return np.arange(self.n_steps + 1, dtype=np.float64)
        return np.arange(self.n_steps + 1) * self.step

    @classmethod
    def discrete(cls, n_max):
        return cls("discrete", float(int(n_max)))

    @classmethod
    def continuum(cls, horizon, step):
        return cls("continuum", float(horizon), float(step))

    @classmethod
    def for_problem(cls, spec: PotentialSpec, lam, horizon, step=None, safety=0.05):
        """Grid with h * sqrt(|lambda| + sup|V|) <= safety (continuum) or unit steps."""
        if spec.kind == "discrete":
            return cls.discrete(int(horizon))
        bound = spec.bound
        if bound is None:
            probe = np.linspace(0.0, horizon, 4097)
            bound = float(np.max(np.abs(evaluate(spec, probe))))
        h_max = safety / math.sqrt(abs(lam) + bound) if abs(lam) + bound > 0 else 0.05
        h = h_max if step is None else min(step, h_max)
        return cls.continuum(horizon, h)

    def index(self, point):
        """Grid index of a point (nearest node, must be on the grid within rounding)."""
        k = point / self.step
        i = int(round(k))
        if abs(k - i) > 1e-6 or i < 0 or i > self.n_steps:
            raise IndexError(f"point {point} not on grid")
        return i


def reseed(spec: PotentialSpec, seed) -> PotentialSpec:
    """Copy of ``spec`` with every random rule keyed on ``seed``."""
    if spec.rule == "sum":
        return PotentialSpec(kind=spec.kind, rule="sum", terms=tuple(reseed(t, seed) for t in spec.terms))
    if spec.p("seed") is None:
        return spec
    params = dict(spec.params)
    params["seed"] = int(seed)
    return type(spec)(kind=spec.kind, rule=spec.rule, params=tuple(params.items()), terms=spec.terms)


def is_random(spec: PotentialSpec) -> bool:
    if spec.rule == "sum":
        return any(is_random(t) for t in spec.terms)
    return spec.p("seed") is not None


_SIGN_PARAM = {"constant": "c", "euler": "c", "linear": "slope", "decaying_anderson": "coupling",
               "anderson": "coupling", "tabulated": "values", "power_law": "C",
               "exp_weighted": "C", "compact_support": "values"}


def negate(spec: PotentialSpec) -> PotentialSpec:
    """Pointwise -V with the same rule."""
    if spec.rule == "zero":
        return spec
    if spec.rule == "sum":
        return PotentialSpec(kind=spec.kind, rule="sum", terms=tuple(negate(t) for t in spec.terms))
    name = _SIGN_PARAM[spec.rule]
    params = dict(spec.params)
    v = params[name]
    params[name] = tuple(-a for a in v) if isinstance(v, tuple) else -v
    return type(spec)(kind=spec.kind, rule=spec.rule, params=tuple(params.items()), terms=spec.terms)
