"""Stability recipes: point spectrum, the exponent beta on S, and the beta = 0 turnaround.

Every row carries its hypothesis witnesses.  ``undecided`` records a
hypothesis that could not be witnessed at the horizon; ``violated`` is
reserved for a witnessed hypothesis with a failed conclusion.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import perturb as pt
from .lyapunov import integrability_witness, lyapunov_estimate
from .model import Grid, PotentialSpec, is_random, negate, power_law, reseed, sum_potential
from .parallel import map_ordered
from .propagate import solve_fundamental
from .subordinacy import SubordinacyReport, classify_fundamental, subordinate_pair

LOG_SAFE = 600.0


@dataclass
class VerdictRow:
    lam: float
    seed: int | None
    before: SubordinacyReport | None
    after: SubordinacyReport | None
    witnesses: dict
    verdict: str
    reason: str = ""
    detail: dict = field(default_factory=dict)

    def csv_row(self):
        def b(r):
            return "" if r is None or r.beta_hat is None else f"{r.beta_hat:.17g}"
        return [f"{self.lam:.17g}", "" if self.seed is None else self.seed,
                "" if self.before is None else self.before.classification, b(self.before),
                "" if self.after is None else self.after.classification, b(self.after),
                "true" if all(w.get("passed", False) for w in self.witnesses.values()) else "false",
                self.verdict, self.reason]


@dataclass
class StabilityVerdict:
    theorem: str
    rows: list
    tolerances: dict
    summary: dict = field(default_factory=dict)

    CSV_HEADER = ("lambda", "seed", "before", "beta_before", "after", "beta_after",
                  "witnesses_passed", "verdict", "reason")

    @property
    def lambdas(self):
        return sorted({r.lam for r in self.rows})

    @property
    def any_violated(self):
        return any(r.verdict == "violated" for r in self.rows)

    def verdicts(self):
        return [r.verdict for r in self.rows]

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.CSV_HEADER)
            for r in self.rows:
                w.writerow(r.csv_row())

    def detail_json(self):
        out = {"theorem": self.theorem, "tolerances": self.tolerances, "summary": _jsonable(self.summary),
               "rows": []}
        for r in self.rows:
            out["rows"].append({"lambda": r.lam, "seed": r.seed, "verdict": r.verdict, "reason": r.reason,
                                "witnesses": _jsonable(r.witnesses), "detail": _jsonable(r.detail)})
        return out

    def write_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.detail_json(), fh, indent=2, sort_keys=True)


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return [_jsonable(x) for x in v.tolist()]
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        f = float(v)
        return f if math.isfinite(f) else str(f)
    return v


def _report(V, lam, grid):
    return classify_fundamental(solve_fundamental(V, lam, grid), keep_pair=True)


def safe_grid(pair, grid: Grid, budget=LOG_SAFE):
    """Largest prefix of the grid on which phi_2^2 and the weights stay representable."""
    lf = np.log(np.maximum(np.abs(pair.phi2), 1e-300)) + pair.ls2
    bad = np.nonzero(2.0 * np.maximum.accumulate(lf) + np.log1p(pair.x) > budget / 1.5)[0]
    if len(bad) == 0:
        return grid
    n = int(bad[0]) - 1
    if grid.kind == "discrete":
        return Grid.discrete(n)
    return Grid.continuum(n * grid.step, grid.step)


# ----------------------------------------------------------------- point spectrum

def run_point_stability(V0: PotentialSpec, W: PotentialSpec, lambdas, grid: Grid, eps1=None) -> StabilityVerdict:
    """psi built by the series from the L^2 branch; confirmed when it stays square integrable.

    The point weights f+ = (1+x) sup|phi_2| are tried first.  When their
    integrability witness fails and the energy shows exponential growth,
    exponential weights at the measured rate are tried instead.
    """
    rows = []
    for lam in np.atleast_1d(lambdas):
        lam = float(lam)
        before = _report(V0, lam, grid)
        if before.classification != "P":
            rows.append(VerdictRow(lam, None, before, None, {}, "undecided",
                                   f"before-classification {before.classification}, not P"))
            continue
        pair0 = before.pair
        sgrid = safe_grid(pair0, grid)
        fund = solve_fundamental(V0, lam, sgrid)
        pair = subordinate_pair(fund, pair0.theta)
        wvals = pt.perturbation_values(W, sgrid)
        witnesses = {}
        try:
            fp, fm = pt.choose_weights_point(pair)
            w = integrability_witness(np.abs(wvals) * fp, sgrid.points, "power", 0.0)
        except pt.InfeasibleError as exc:
            w = {"passed": False, "reason": str(exc)}
        witnesses["point_weight"] = w
        policy = "point"
        if not w["passed"]:
            gamma = lyapunov_estimate(V0, lam, sgrid).gamma
            e1 = eps1 if eps1 is not None else min(0.1, 0.25 * gamma)
            if gamma > 0.01:
                we = integrability_witness(wvals, sgrid.points, "exp", 4.0 * e1)
                we["gamma"] = gamma
                witnesses["exponential_weight"] = we
                if we["passed"]:
                    fp, fm = pt.exponential_weights(sgrid, gamma, e1)
                    policy = "exponential"
        if not any(x.get("passed") for x in witnesses.values()):
            rows.append(VerdictRow(lam, None, before, None, witnesses, "undecided",
                                   "no weight pair makes G integrable"))
            continue
        after = _report(sum_potential(V0, W), lam, grid)
        try:
            A = pt.build_A(W, pair)
            wp = pt.build_G(A, fp, fm, label=policy)
            s = pt.series_solve(A, wp, "u_minus")
            rc = pt.reconstruct_psi(s, pair, W)
        except (pt.NonConvergenceError, pt.NumericalIntegrityError) as exc:
            rows.append(VerdictRow(lam, None, before, after, witnesses, "undecided", str(exc)))
            continue
        tail = pt.l2_tail_fraction(rc.psi, sgrid)
        ok = tail < 1e-6
        detail = {"policy": policy, "tail_fraction": tail, "series_checks": s.checks,
                  "iterations": s.iterations, "x0": s.x0, "series_horizon": sgrid.horizon,
                  "max_residual": rc.max_residual}
        rows.append(VerdictRow(lam, None, before, after, witnesses, "confirmed" if ok else "violated",
                               "" if ok else "psi not square integrable", detail))
    return StabilityVerdict("point", rows, {"l2_tail": 1e-6})


# --------------------------------------------------------------------- beta on S

def beta_series(V0, W, lam, grid, beta, eta, L_grid=None):
    """Eq.-style norm-ratio traces ||psi_+-||_L / ||phi_+-||_L with power weights."""
    choice = pt.choose_weights_power(beta, eta)
    fund = solve_fundamental(V0, lam, grid)
    rep = classify_fundamental(fund, keep_pair=True)
    if rep.pair is None:
        raise pt.InfeasibleError("no subordinate branch for the series", {"classification": rep.classification})
    pair = rep.pair
    A = pt.build_A(W, pair)
    fp, fm = pt.power_weights(grid, choice.mu_plus)
    wp = pt.build_G(A, fp, fm, label="power")
    if L_grid is None:
        H = grid.horizon
        L_grid = np.geomspace(H / 10.0, H, 24)
    traces = {"L": np.asarray(L_grid), "mu_plus": choice.mu_plus, "checks": choice.checks}
    for branch, which in (("u_minus", 1), ("u_plus", 2)):
        s = pt.series_solve(A, wp, branch)
        rc = pt.reconstruct_psi(s, pair, W)
        table = pair.log_cum1 if which == 1 else pair.log_cum2
        traces[branch] = pt.norm_ratio_trace(rc.psi, table, grid, L_grid)
        traces[branch + "_x0"] = s.x0
        traces[branch + "_checks"] = s.checks
    return traces


def _before_task(args):
    V0, lam, grid, seed = args
    if seed is not None:
        V0 = reseed(V0, seed)
    return _strip(_report(V0, lam, grid))


def _beta_task(args):
    V0, W, lam, grid, eta, seed, before, beta_gate, tol, swap = args
    if seed is not None:
        V0 = reseed(V0, seed)
    V1 = sum_potential(V0, W)
    witnesses = {"regular": {"passed": True, "slope": before.slope}}
    after = _strip(_report(V1, lam, grid))
    detail = {}
    try:
        tr = beta_series(V0, W, lam, grid, beta_gate, eta)
        detail["ratio_minus"] = tr["u_minus"]
        detail["ratio_plus"] = tr["u_plus"]
        detail["L"] = tr["L"]
        detail["mu_plus"] = tr["mu_plus"]
        if swap and after.classification == "S":
            sw = beta_series(V1, negate(W), lam, grid, beta_gate, eta)
            detail["swap_ratio_minus"] = sw["u_minus"]
            detail["swap_ratio_plus"] = sw["u_plus"]
    except (pt.NonConvergenceError, pt.NumericalIntegrityError, pt.InfeasibleError,
            pt.ReconstructionError) as exc:
        return VerdictRow(lam, seed, before, after, witnesses, "undecided", str(exc), detail)
    if after.classification != "S":
        return VerdictRow(lam, seed, before, after, witnesses, "undecided",
                          f"after-classification {after.classification}", detail)
    dev = max(np.max(np.abs(detail["ratio_minus"] - 1)), np.max(np.abs(detail["ratio_plus"] - 1)))
    detail["ratio_deviation"] = float(dev)
    d = abs(before.beta_hat - after.beta_hat)
    if seed is not None:
        # single seeds only feed the ensemble means
        return VerdictRow(lam, seed, before, after, witnesses, "measured", f"|dbeta| = {d:.3g}", detail)
    ok = d <= tol
    return VerdictRow(lam, seed, before, after, witnesses, "confirmed" if ok else "violated",
                      "" if ok else f"|dbeta| = {d:.3g}", detail)


def _strip(rep):
    if rep is not None:
        rep.pair = None
    return rep


def run_beta_stability(V0: PotentialSpec, W: PotentialSpec, lambdas, grid: Grid, eta_declared, seeds=None,
                       tol=0.05, ratio_tol=0.02, swap=True, beta_declared=None, workers=1) -> StabilityVerdict:
    """Compare beta before and after W, with the series ratio traces and the swapped run.

    Feasibility (eta > 1/beta) is decided once per energy, from ``beta_declared``
    when given and otherwise from the ensemble mean of the before-estimates:
    beta is an almost-sure constant, and gating on individual noisy seeds
    would select a biased subsample.
    """
    seeds = list(seeds) if (seeds is not None and is_random(V0)) else [None]
    lambdas = [float(l) for l in np.atleast_1d(lambdas)]
    befores = map_ordered(_before_task, [(V0, lam, grid, s) for lam in lambdas for s in seeds], workers)
    rows, summary = [], {}
    k = 0
    for lam in lambdas:
        bs = befores[k:k + len(seeds)]
        k += len(seeds)
        s_rows = [(s, r) for s, r in zip(seeds, bs) if r.classification == "S"]
        usable = [(s, r) for s, r in s_rows if r.regular]
        for s, r in zip(seeds, bs):
            if r.classification != "S":
                rows.append(VerdictRow(lam, s, r, None, {}, "undecided", f"before-classification {r.classification}"))
            elif not r.regular:
                rows.append(VerdictRow(lam, s, r, None, {"regular": {"passed": False, "slope": r.slope}},
                                       "skipped", f"non-regular energy (slope {r.slope:.3f})"))
        info = {"n_total": len(seeds), "n_S": len(s_rows), "n_regular": len(usable)}
        if not usable:
            summary[lam] = info
            continue
        beta_gate = beta_declared if beta_declared is not None else float(np.mean([r.beta_hat for _, r in usable]))
        info["beta_gate"] = beta_gate
        try:
            choice = pt.choose_weights_power(beta_gate, eta_declared)
            info["feasibility"] = {"passed": True, "mu_plus": choice.mu_plus, **choice.checks}
        except pt.InfeasibleError as exc:
            info["feasibility"] = {"passed": False, **exc.payload}
            for s, r in usable:
                rows.append(VerdictRow(lam, s, r, None, {"feasibility": info["feasibility"]}, "undecided", str(exc)))
            summary[lam] = info
            continue
        info["dimension_units"] = pt.dimension_feasibility(2 * beta_gate / (1 + beta_gate), eta_declared)
        tasks = [(V0, W, lam, grid, float(eta_declared), s, r, beta_gate, tol, swap) for s, r in usable]
        lam_rows = map_ordered(_beta_task, tasks, workers)
        for r in lam_rows:
            r.witnesses["feasibility"] = info["feasibility"]
        rows.extend(lam_rows)
        done = [r for r in lam_rows if r.verdict in ("confirmed", "violated", "measured")]
        dev = [r.detail["ratio_deviation"] for r in done]
        info.update({"n_used": len(done),
                     "beta_before": _mean_hw([r.before.beta_hat for r in done]),
                     "beta_after": _mean_hw([r.after.beta_hat for r in done]),
                     "ratio_deviation_max": max(dev) if dev else math.nan,
                     "ratio_deviation_median": float(np.median(dev)) if dev else math.nan})
        if done and seeds != [None]:
            bb, ba = info["beta_before"][0], info["beta_after"][0]
            ok = abs(bb - ba) <= tol and info["ratio_deviation_max"] <= ratio_tol
            info["verdict"] = "confirmed" if ok else "violated"
            rows.append(VerdictRow(lam, None, None, None, {"feasibility": info["feasibility"]}, info["verdict"],
                                   f"ensemble beta {bb:.4f} -> {ba:.4f}", {"ensemble": True}))
        summary[lam] = info
    return StabilityVerdict("beta", rows, {"beta": tol, "ratio": ratio_tol, "eta": eta_declared}, summary)


def _mean_hw(v):
    if not v:
        return (math.nan, math.nan)
    a = np.asarray(v, dtype=float)
    hw = 2.0 * float(np.std(a, ddof=1)) / math.sqrt(len(a)) if len(a) > 1 else math.nan
    return (float(a.mean()), hw)


# ------------------------------------------------------------------- beta = 0

def _zero_like(rep, tol):
    if rep.classification == "P":
        return True
    return rep.classification == "S" and rep.beta_hat is not None and rep.beta_hat <= tol


def _turnaround_task(args):
    V0, W, lam, grid, tol, seed = args
    if seed is not None:
        V0 = reseed(V0, seed)
    V1 = sum_potential(V0, W)
    before = _strip(_report(V0, lam, grid))
    if before.classification == "undecided" or not _zero_like(before, tol):
        return VerdictRow(lam, seed, before, None, {"beta_zero": {"passed": False}}, "undecided",
                          f"before: {before.classification} beta={before.beta_hat}")
    after = _strip(_report(V1, lam, grid))
    back = _strip(_report(sum_potential(V1, negate(W)), lam, grid))
    wit = {"beta_zero": {"passed": True}, "swap": {"passed": _zero_like(back, tol),
                                                   "classification": back.classification}}
    if after.classification == "undecided":
        return VerdictRow(lam, seed, before, after, wit, "undecided", "after-classification undecided")
    ok = _zero_like(after, tol)
    return VerdictRow(lam, seed, before, after, wit, "confirmed" if ok else "violated",
                      "" if ok else f"after: {after.classification} beta={after.beta_hat}")


def run_beta_zero_turnaround(V0: PotentialSpec, W: PotentialSpec, lambdas, grid: Grid, seeds=None,
                             tol=0.05, workers=1) -> StabilityVerdict:
    """An energy with beta = 0 (or an L^2 subordinate solution) keeps it after W.

    Square-integrable subordinate solutions count as beta = 0 here, since
    ln||phi_1||_L stays bounded while ln||phi_2||_L grows.
    """
    seeds = list(seeds) if (seeds is not None and is_random(V0)) else [None]
    tasks = [(V0, W, float(lam), grid, tol, s) for lam in np.atleast_1d(lambdas) for s in seeds]
    rows = map_ordered(_turnaround_task, tasks, workers)
    return StabilityVerdict("beta_zero", rows, {"beta": tol})


def run_beta_zero_ladder(V0: PotentialSpec, lambdas, grid: Grid, etas, C=1.0, seeds=None, tol=0.05,
                         workers=1) -> StabilityVerdict:
    """The turnaround over W = C (1+x)^-eta for each eta on a finite ladder.

    The hypothesis asks for every eta > 0, which no finite run can witness;
    the summary records the range actually covered.
    """
    rows = []
    for eta in sorted(float(e) for e in etas):
        W = power_law(C, eta, kind=V0.kind, offset=0.0 if V0.kind == "discrete" else 1.0)
        for r in run_beta_zero_turnaround(V0, W, lambdas, grid, seeds, tol, workers).rows:
            r.detail["eta"] = eta
            rows.append(r)
    covered = sorted({r.detail["eta"] for r in rows if r.verdict == "confirmed"})
    summary = {"eta_ladder": sorted(float(e) for e in etas),
               "eta_confirmed_range": (covered[0], covered[-1]) if covered else None}
    return StabilityVerdict("beta_zero", rows, {"beta": tol}, summary)


def lambda_verdicts(verdict: StabilityVerdict):
    """Collapse per-seed rows: violated beats confirmed beats undecided/skipped."""
    out = {}
    for r in verdict.rows:
        cur = out.get(r.lam)
        rank = {"violated": 3, "confirmed": 2, "undecided": 1, "measured": 0, "skipped": 0}
        if cur is None or rank[r.verdict] > rank[cur]:
            out[r.lam] = r.verdict
    return out
