"""Exponential and power-law growth exponents of transfer matrices, and their stability."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .model import Grid, PotentialSpec, is_random, reseed, sum_potential
from .parallel import map_ordered
from .propagate import solve_fundamental
from .subordinacy import extrapolate_theta, search_theta, subordinate_pair


class HypothesisError(ValueError):
    """An integrability witness failed."""


@dataclass
class GrowthReport:
    lam: float
    kind: str  # exp | power
    gamma: float
    half_width: float
    ensemble_size: int
    horizon: float
    window: tuple
    branch_slopes: tuple = (math.nan, math.nan)
    status: str = "ok"
    per_seed: list = field(default_factory=list, repr=False)

    @property
    def gamma_exp(self):
        return self.gamma if self.kind == "exp" else math.nan

    @property
    def gamma_pow(self):
        return self.gamma if self.kind == "power" else math.nan

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["seed", "slope", "intercept", "window_lo", "window_hi", "slope_sub", "slope_dom"])
            for r in self.per_seed:
                w.writerow([r["seed"]] + [f"{r[k]:.17g}" for k in
                                          ("slope", "intercept", "lo", "hi", "slope_sub", "slope_dom")])


def _fit(x, y):
    A = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    return float(coef[0]), float(coef[1])


def _seeds_for(V, ensemble):
    if ensemble is None or not is_random(V):
        return [None]
    if isinstance(ensemble, int):
        return list(range(ensemble))
    return list(ensemble)


def _aggregate(lam, kind, grid, window, rows):
    s = np.array([r["slope"] for r in rows])
    if len(s) > 1:
        hw = 2.0 * float(np.std(s, ddof=1)) / math.sqrt(len(s))
    else:
        hw = rows[0]["fit_spread"]
    return GrowthReport(float(lam), kind, float(s.mean()), hw, len(rows), grid.horizon, window, per_seed=rows)


def _exp_seed(args):
    V, seed, lam, grid = args
    if seed is not None:
        V = reseed(V, seed)
    fund = solve_fundamental(V, lam, grid)
    ln_t = fund.transfer_log_norm()
    n = grid.n_steps
    i = np.arange(n // 2, n + 1)
    x = grid.points[i]
    slope, icpt = _fit(x, ln_t[i])
    q = len(i) // 2
    s1, _ = _fit(x[:q], ln_t[i][:q])
    s2, _ = _fit(x[q:], ln_t[i][q:])
    return {"seed": -1 if seed is None else seed, "slope": slope, "intercept": icpt,
            "lo": float(x[0]), "hi": float(x[-1]), "slope_sub": math.nan, "slope_dom": math.nan,
            "fit_spread": abs(s1 - s2)}


def lyapunov_estimate(V: PotentialSpec, lam, grid: Grid, ensemble=None, workers=1) -> GrowthReport:
    """Slope of ln||T(0, x)|| against x over the trailing half, averaged over seeds.

    A single deterministic run reports the drift between the two halves of the
    window as its half-width.
    """
    seeds = _seeds_for(V, ensemble)
    rows = map_ordered(_exp_seed, [(V, s, lam, grid) for s in seeds], workers)
    return _aggregate(lam, "exp", grid, (grid.horizon / 2, grid.horizon), rows)


def _amplitude_log(pair, which):
    f, df = (pair.phi1, pair.dphi1) if which == 1 else (pair.phi2, pair.dphi2)
    ls = pair.ls1 if which == 1 else pair.ls2
    with np.errstate(divide="ignore"):
        return 0.5 * np.log(f * f + df * df) + ls


def _power_seed(args):
    V, seed, lam, grid, branches = args
    if seed is not None:
        V = reseed(V, seed)
    fund = solve_fundamental(V, lam, grid)
    n = grid.n_steps
    i = np.unique(np.geomspace(max(n // 10, 1), n, 400).astype(np.int64))
    x = np.maximum(grid.points[i], 1.0)
    ln_t = fund.transfer_log_norm()[i]
    slope, icpt = _fit(np.log(x), ln_t)
    q = len(i) // 2
    s1, _ = _fit(np.log(x[:q]), ln_t[:q])
    s2, _ = _fit(np.log(x[q:]), ln_t[q:])
    row = {"seed": -1 if seed is None else seed, "slope": slope, "intercept": icpt,
           "lo": float(x[0]), "hi": float(x[-1]), "slope_sub": math.nan, "slope_dom": math.nan,
           "fit_spread": abs(s1 - s2)}
    if branches:
        res = search_theta(fund)
        if res.theta is not None and res.status == "found":
            theta, _ = extrapolate_theta(fund, res.theta)
            pair = subordinate_pair(fund, theta)
            row["slope_sub"], _ = _fit(np.log(x), _amplitude_log(pair, 1)[i])
            row["slope_dom"], _ = _fit(np.log(x), _amplitude_log(pair, 2)[i])
    return row


def power_lo_estimate(V: PotentialSpec, lam, grid: Grid, ensemble=None, workers=1, branches=True) -> GrowthReport:
    """Power-law exponent gamma: slope of ln||T(0, n)|| against ln n over the trailing decade.

    The norm slope is basis independent.  Branch slopes of
    (|phi|^2 + |phi(n+1)|^2)^(1/2) for the subordinate and dominant solutions
    are reported alongside; the branches count as separated when their mean
    slopes differ by more than twice the combined standard error.
    """
    seeds = _seeds_for(V, ensemble)
    rows = map_ordered(_power_seed, [(V, s, lam, grid, branches) for s in seeds], workers)
    rep = _aggregate(lam, "power", grid, (grid.horizon / 10, grid.horizon), rows)
    if branches:
        sub = np.array([r["slope_sub"] for r in rows if math.isfinite(r["slope_sub"])])
        dom = np.array([r["slope_dom"] for r in rows if math.isfinite(r["slope_dom"])])
        if len(sub) >= 1:
            rep.branch_slopes = (float(sub.mean()), float(dom.mean()))
            se = (math.sqrt((np.var(sub, ddof=1) + np.var(dom, ddof=1)) / len(sub))
                  if len(sub) > 1 else 0.0)
            if rep.branch_slopes[1] - rep.branch_slopes[0] <= max(2 * se, 0.02):
                rep.status = "undecided"
        else:
            rep.status = "undecided"
    return rep


# ---------------------------------------------------------------- witnesses

def integrability_witness(values, x, kind, eps, rel_tail=1e-6, margin=0.05):
    """Numerical witness for int |W| e^(eps x) (kind exp) or int (1+x)^eps |W| (kind power).

    Passes when the second half of the horizon contributes below ``rel_tail``
    of the total, or when the integrand's fitted tail decays faster than
    integrability requires (slope below -margin in x, or below -1 - margin in ln x).
    """
    x = np.asarray(x, dtype=float)
    w = np.abs(np.asarray(values, dtype=float))
    with np.errstate(divide="ignore"):
        lg = np.log(w) + (eps * x if kind == "exp" else eps * np.log1p(x))
    out = {"kind": kind, "eps": eps}
    if not np.any(np.isfinite(lg)):
        out.update(passed=True, reason="W vanishes", tail_fraction=0.0)
        return out
    half = len(lg) // 2
    total = np.logaddexp.reduce(lg)
    tail = np.logaddexp.reduce(lg[half:])
    frac = math.exp(tail - total) if math.isfinite(tail) else 0.0
    out["tail_fraction"] = frac
    if frac <= rel_tail:
        out.update(passed=True, reason="negligible tail")
        return out
    nz = np.isfinite(lg[half:])
    xs = x[half:][nz]
    if len(xs) < 4:
        out.update(passed=True, reason="tail vanishes")
        return out
    if kind == "exp":
        slope, _ = _fit(xs, lg[half:][nz])
        ok = slope < -margin
    else:
        slope, _ = _fit(np.log1p(xs), lg[half:][nz])
        ok = slope < -1.0 - margin
    out.update(passed=bool(ok), tail_slope=slope, reason="fitted tail decay")
    return out


# --------------------------------------------------------------- experiments

@dataclass
class LyapunovStability:
    kind: str
    before: GrowthReport
    after: GrowthReport
    delta: float
    tolerance: float
    witness: dict
    ratio_traces: dict
    verdict: str

    def summary(self):
        return (f"{self.kind}: gamma0={self.before.gamma:.6g} gamma1={self.after.gamma:.6g} "
                f"|dgamma|={self.delta:.3g} verdict={self.verdict}")


def stability_experiment_lyapunov(V0: PotentialSpec, W: PotentialSpec, lam, grid: Grid, kind="exp",
                                  eps=0.5, ensemble=None, tol=None, series_grid: Grid | None = None,
                                  workers=1) -> LyapunovStability:
    """Growth exponents of V0 and V0 + W on the same seeds, with the series ratio traces.

    ``series_grid`` bounds the horizon used for the perturbation series so
    that phi_+^2 stays representable.
    """
    from .perturb import perturbation_values
    wvals = perturbation_values(W, grid)
    witness = integrability_witness(wvals, grid.points, kind, eps)
    if not witness["passed"]:
        raise HypothesisError(f"integrability witness failed: {witness}")
    V1 = sum_potential(V0, W)
    est = lyapunov_estimate if kind == "exp" else power_lo_estimate
    extra = {} if kind == "exp" else {"branches": False}
    before = est(V0, lam, grid, ensemble, workers, **extra)
    after = est(V1, lam, grid, ensemble, workers, **extra)
    delta = abs(before.gamma - after.gamma)
    if tol is None:
        tol = 0.01 if kind == "exp" else 0.02
    traces = {}
    if not is_random(V0):
        traces = lyapunov_ratio_traces(V0, W, lam, series_grid or _series_grid(grid, before.gamma, kind),
                                       before.gamma, kind)
    verdict = "confirmed" if delta <= tol else "violated"
    return LyapunovStability(kind, before, after, delta, tol, witness, traces, verdict)


def _series_grid(grid: Grid, gamma, kind, budget=200.0):
    # phi_+^2 and the weights grow like exp(2.4 gamma x); keep them finite
    if kind != "exp" or gamma * grid.horizon <= budget:
        return grid
    if grid.kind == "discrete":
        return Grid.discrete(max(int(budget / gamma), 8))
    return Grid.continuum(budget / gamma, grid.step)


def lyapunov_ratio_traces(V0, W, lam, grid: Grid, gamma, kind="exp", eps1=None, L_grid=None):
    """||psi_+-||_L / ||phi_+-||_L from the perturbation series with the growth-adapted weights."""
    from . import perturb as pt
    from .subordinacy import geometric_L_grid
    fund = solve_fundamental(V0, lam, grid)
    res = search_theta(fund)
    if res.theta is None:
        raise HypothesisError("no decaying branch located")
    theta, _ = extrapolate_theta(fund, res.theta)
    pair = subordinate_pair(fund, theta)
    A = pt.build_A(W, pair)
    if kind == "exp":
        e = eps1 if eps1 is not None else min(0.1, 0.25 * gamma)
        fp, fm = pt.exponential_weights(grid, gamma, e)
    else:
        e = eps1 if eps1 is not None else 0.1 * gamma
        fp, fm = pt.power_lo_weights(grid, gamma, e)
    wp = pt.build_G(A, fp, fm)
    if L_grid is None:
        L_grid = geometric_L_grid(grid, 0.5, 24)
    out = {"L": np.asarray(L_grid)}
    for branch, which in (("u_minus", 1), ("u_plus", 2)):
        s = pt.series_solve(A, wp, branch)
        rc = pt.reconstruct_psi(s, pair, W)
        table = pair.log_cum1 if which == 1 else pair.log_cum2
        out[branch] = pt.norm_ratio_trace(rc.psi, table, grid, L_grid)
        out[branch + "_checks"] = s.checks
    return out
