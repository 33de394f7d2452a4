"""Subordinate solutions, the exponent beta, regularity and the P/S/L classification."""
from __future__ import annotations

import csv
import math
from functools import partial
from dataclasses import dataclass, field

import numpy as np

from .model import Grid, PotentialSpec
from .propagate import (Fundamental, SolutionPair, c1_vec, c2_vec, pair_from_fundamental,
                        solve_fundamental, with_stable_phi1)

SUBORDINATE_THRESHOLD = 0.1
UNDECIDED_THRESHOLD = 0.5
CAUCHY_TAIL = 1e-6
TOL_REG = 0.05
TOL_PARTITION = 0.05
STABILIZE_LOG_COND = 20.0
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class MisclassificationError(ValueError):
    """beta requested for an energy whose subordinate solution is square integrable."""


def dimension_maps(value, direction):
    """B(alpha) = alpha/(2-alpha) and A(beta) = 2 beta/(1+beta) on [0, 1]."""
    v = float(value)
    if not (0.0 <= v <= 1.0):
        raise ValueError(f"dimension maps act on [0, 1], got {v}")
    if direction == "B":
        return v / (2.0 - v)
    if direction == "A":
        return 2.0 * v / (1.0 + v)
    raise ValueError(f"direction must be 'A' or 'B', got {direction!r}")


def geometric_L_grid(grid: Grid, lo_power=0.5, n=48):
    """Geometric lengths in [horizon**lo_power, horizon]."""
    H = grid.horizon
    lo = max(H ** lo_power, grid.step * 4, 2.0 if grid.kind == "discrete" else 0.0)
    return np.geomspace(lo, H, n)


# ------------------------------------------------------------------ theta search

@dataclass
class ThetaSearch:
    theta: float | None
    ratio: float
    status: str  # found | absent | undecided
    evaluations: int = 0


def _log_ratio_at(fund: Fundamental, theta, idx=-1):
    G, _ = fund.gram_at(idx)
    c1, c2 = c1_vec(theta), c2_vec(theta)
    q1 = float(c1 @ G @ c1)
    q2 = float(c2 @ G @ c2)
    tiny = 1e-300 * max(q2, 1e-300)
    return 0.5 * (math.log(max(q1, tiny)) - math.log(q2))


def golden_section(f, a, b, tol=1e-10, max_iter=200):
    """Minimize a unimodal f on [a, b]; returns (x, f(x), evaluations)."""
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    n = 2
    while abs(b - a) > tol and n < max_iter:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
        n += 1
    x = 0.5 * (a + b)
    return x, f(x), n + 1


def search_theta(fund: Fundamental, idx=-1, n_scan=16) -> ThetaSearch:
    """Minimize ||phi_1||/||phi_2|| at the horizon over theta in [0, pi)."""
    f = lambda t: _log_ratio_at(fund, t, idx)
    thetas = np.arange(n_scan) * math.pi / n_scan
    vals = [f(t) for t in thetas]
    k = int(np.argmin(vals))
    step = math.pi / n_scan
    t, fv, n = golden_section(f, thetas[k] - step, thetas[k] + step)
    n += n_scan
    if not math.isfinite(fv):
        return ThetaSearch(None, math.nan, "undecided", n)
    r = math.exp(fv)
    theta = float(np.mod(t, math.pi))
    if r >= UNDECIDED_THRESHOLD:
        return ThetaSearch(None, r, "absent", n)
    if r >= SUBORDINATE_THRESHOLD:
        return ThetaSearch(theta, r, "undecided", n)
    return ThetaSearch(theta, r, "found", n)


def gram_min_theta(fund: Fundamental, idx):
    """Closed-form minimizer of the finite-L ratio: the low eigenvector of the Gram matrix."""
    G, _ = fund.gram_at(idx)
    _, v = np.linalg.eigh(G)
    c = v[:, 0]
    return math.atan2(c[1], -c[0]) % math.pi


def extrapolate_theta(fund: Fundamental, theta_h, decades=2.0, n_points=9, max_shift=0.25):
    """Limit of the finite-L minimizers theta_L when they converge geometrically in ln L.

    The minimizer at a finite horizon mixes in a fraction of the dominant
    solution that decays only like a power of L; when the trailing sequence
    theta_L shows a clean geometric tail the Aitken limit removes it.
    Returns (theta, used_extrapolation).
    """
    if theta_h is None:
        return None, False
    n = fund.grid.n_steps
    lo = max(4, int(n / 10 ** decades))
    idx = np.unique(np.geomspace(lo, n, n_points).astype(np.int64))
    if len(idx) < 6:
        return theta_h, False
    th = np.array([gram_min_theta(fund, int(i)) for i in idx])
    th = np.unwrap(2.0 * th) / 2.0
    th += round((theta_h - th[-1]) / math.pi) * math.pi
    d = np.diff(th)[-5:]
    if np.any(d == 0) or not (np.all(d > 0) or np.all(d < 0)):
        return theta_h, False
    rho = d[1:] / d[:-1]
    if np.any(rho <= 0.05) or np.any(rho >= 0.95) or np.ptp(rho) > 0.35:
        return theta_h, False
    r = float(np.exp(np.mean(np.log(rho))))
    shift = d[-1] * r / (1.0 - r)
    if abs(shift) > max_shift:
        return theta_h, False
    return float(np.mod(th[-1] + shift, math.pi)), True


def find_theta_star(V: PotentialSpec, lam, grid: Grid):
    """Boundary angle of the subordinate solution, or None."""
    fund = solve_fundamental(V, lam, grid)
    res = search_theta(fund)
    if res.status != "found":
        return None
    return extrapolate_theta(fund, res.theta)[0]


def _log_cond(fund: Fundamental):
    T, _ = fund.transfer(-1)
    s = np.linalg.svd(T, compute_uv=False)
    return math.log(s[0]) - math.log(max(s[1], 1e-300))


def subordinate_pair(fund: Fundamental, theta) -> SolutionPair:
    """Pair at theta; phi_1 is rebuilt backward when forward growth would swamp it."""
    if _log_cond(fund) > STABILIZE_LOG_COND:
        return with_stable_phi1(pair_from_fundamental(fund, theta), fund)
    return pair_from_fundamental(fund, theta)


# --------------------------------------------------------------------- estimates

def is_square_integrable(pair: SolutionPair, tail=CAUCHY_TAIL):
    """Cauchy tail test: the second half of the horizon adds < tail of the total norm."""
    n = len(pair.log_cum1) - 1
    a, b = pair.log_cum1[n // 2], pair.log_cum1[n]
    if not math.isfinite(b):
        return False
    return (1.0 - math.exp(a - b)) < tail


def log_ratio_trace(pair: SolutionPair, L_grid):
    """ln||phi_1||_L / ln||phi_2||_L along the L grid."""
    l1 = pair.log_norm(L_grid, 1)
    l2 = pair.log_norm(L_grid, 2)
    return l1, l2


def beta_estimate(pair: SolutionPair, L_grid=None):
    """Running minimum of ln||phi_1||_L/ln||phi_2||_L over the trailing window.

    Returns (beta_hat, half_width).  The half-width is the standard deviation
    of the ratio over the window.
    """
    if is_square_integrable(pair):
        raise MisclassificationError("phi_1 is square integrable: this energy belongs to P")
    if L_grid is None:
        L_grid = geometric_L_grid(pair.grid)
    l1, l2 = log_ratio_trace(pair, np.asarray(L_grid))
    ok = l2 > 0
    if not np.any(ok):
        raise ValueError("||phi_2||_L never exceeds 1 on the window; enlarge the horizon")
    r = l1[ok] / l2[ok]
    b = float(np.clip(np.min(r), 0.0, 1.0))
    return b, float(np.std(r))


def loglog_slope(L, logvals):
    A = np.vstack([np.log(L), np.ones_like(L)]).T
    coef, *_ = np.linalg.lstsq(A, logvals, rcond=None)
    return float(coef[0]), float(coef[1])


def regularity_check(pair: SolutionPair, L_grid=None, tol_reg=TOL_REG):
    """Least-squares slope of ln||phi_1||_L against ln L over the trailing decade."""
    H = pair.grid.horizon
    if L_grid is None:
        L_grid = np.geomspace(H / 10.0, H, 32)
    L_grid = np.asarray(L_grid)
    L = L_grid[L_grid >= L_grid[-1] / 10.0]
    slope, _ = loglog_slope(L, pair.log_norm(L, 1))
    return slope <= 0.5 + tol_reg, slope


def partition_S(beta_hat, beta0, ratio_trace, tol=TOL_PARTITION):
    """Place an S-energy in S++, S--, S+ or S- relative to beta0.

    ``ratio_trace`` is ||phi_1||_L/||phi_2||_L**beta0 along an increasing L grid.
    """
    if beta0 > beta_hat + tol:
        return "S++"
    if beta0 < beta_hat - tol:
        return "S--"
    r = np.asarray(ratio_trace, dtype=float)
    m = np.minimum.accumulate(r)
    q = len(m) // 4
    start, end = m[0], m[-1]
    fresh_lows = np.any(r[-q:] <= m[-q - 1]) if q > 0 else False
    if end < 0.1 * start and fresh_lows:
        return "S+"
    if end >= 0.5 * start:
        return "S-"
    return "undecided"


def beta_ratio_trace(pair: SolutionPair, beta0, L_grid):
    return np.exp(pair.log_norm(L_grid, 1) - beta0 * pair.log_norm(L_grid, 2))


def dichotomy_check(pair: SolutionPair, beta_hat, L_grid=None, delta=0.1):
    """Above beta the running infimum keeps dropping; below it the trace grows past its early values."""
    if L_grid is None:
        L_grid = geometric_L_grid(pair.grid)
    up = beta_ratio_trace(pair, beta_hat + delta, L_grid)
    down = beta_ratio_trace(pair, beta_hat - delta, L_grid)
    half = len(L_grid) // 2
    above_ok = bool(np.min(up[half:]) < np.min(up[:half]))
    below_ok = bool(down[-1] > np.max(down[:half]))
    return above_ok, below_ok


# ------------------------------------------------------------------------ report

@dataclass
class SubordinacyReport:
    lam: float
    theta_star: float | None
    beta_hat: float | None
    beta_err: float | None
    regular: bool | None
    slope: float | None
    classification: str
    L_grid: np.ndarray = field(repr=False, default=None)
    ratio_trace: np.ndarray = field(repr=False, default=None)
    ratio_at_horizon: float = math.nan
    trend: float = math.nan
    pair: SolutionPair | None = field(repr=False, default=None)
    theta_extrapolated: bool = False

    CSV_HEADER = ("lambda", "classification", "theta_star", "beta_hat", "beta_err", "regular", "slope")

    def csv_row(self):
        def fmt(v):
            if v is None:
                return ""
            if isinstance(v, bool):
                return "true" if v else "false"
            if isinstance(v, float):
                return f"{v:.17g}"
            return str(v)
        return [fmt(float(self.lam)), self.classification, fmt(self.theta_star), fmt(self.beta_hat),
                fmt(self.beta_err), fmt(self.regular), fmt(self.slope)]


def write_reports_csv(path, reports):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SubordinacyReport.CSV_HEADER)
        for r in reports:
            w.writerow(r.csv_row())


def classify_fundamental(fund: Fundamental, L_grid=None, keep_pair=True, extrapolate=True) -> SubordinacyReport:
    lam = fund.lam
    search = search_theta(fund)
    if L_grid is None:
        L_grid = geometric_L_grid(fund.grid)
    if search.status == "absent" or search.theta is None:
        return SubordinacyReport(lam, None, None, None, None, None,
                                 "L" if search.status == "absent" else "undecided",
                                 L_grid=L_grid, ratio_at_horizon=search.ratio)
    theta, extrapolated = extrapolate_theta(fund, search.theta) if extrapolate else (search.theta, False)
    pair = subordinate_pair(fund, theta)
    trace = pair.ratio(L_grid)
    trend, _ = loglog_slope(L_grid, pair.log_norm(L_grid, 1) - pair.log_norm(L_grid, 2))
    r_h = float(trace[-1])
    common = dict(L_grid=L_grid, ratio_trace=trace, ratio_at_horizon=r_h, trend=trend,
                  pair=pair if keep_pair else None, theta_extrapolated=extrapolated)
    if r_h >= UNDECIDED_THRESHOLD:
        return SubordinacyReport(lam, None, None, None, None, None, "L", **common)
    if r_h >= SUBORDINATE_THRESHOLD or trend >= 0:
        return SubordinacyReport(lam, None, None, None, None, None, "undecided", **common)
    if is_square_integrable(pair):
        return SubordinacyReport(lam, pair.theta, None, None, None, None, "P", **common)
    b, err = beta_estimate(pair, L_grid)
    regular, slope = regularity_check(pair)
    return SubordinacyReport(lam, pair.theta, b, err, regular, slope, "S", **common)


def classify(V: PotentialSpec, lam, grid: Grid, L_grid=None) -> SubordinacyReport:
    """Full subordinacy report for one energy."""
    return classify_fundamental(solve_fundamental(V, lam, grid), L_grid)


@dataclass
class EnsembleBeta:
    beta: float
    half_width: float
    n_used: int
    n_total: int
    per_seed: list
    classifications: dict


def ensemble_beta(make_potential, seeds, lam, grid: Grid, L_grid=None, workers=1) -> EnsembleBeta:
    """Mean of per-seed beta estimates over S-classified seeds; half-width is 2 standard errors.

    ``make_potential`` is a seeded PotentialSpec (re-keyed per seed) or a picklable callable.
    """
    from .parallel import map_ordered

    reports = map_ordered(_seed_report, [(make_potential, s, lam, grid, L_grid) for s in seeds], workers)
    betas = [r.beta_hat for r in reports if r.classification == "S"]
    counts = {}
    for r in reports:
        counts[r.classification] = counts.get(r.classification, 0) + 1
    if not betas:
        return EnsembleBeta(math.nan, math.nan, 0, len(reports), reports, counts)
    b = np.asarray(betas)
    hw = 2.0 * float(np.std(b, ddof=1)) / math.sqrt(len(b)) if len(b) > 1 else math.nan
    return EnsembleBeta(float(b.mean()), hw, len(b), len(reports), reports, counts)


def _seed_report(args):
    make_potential, seed, lam, grid, L_grid = args
    if isinstance(make_potential, PotentialSpec):
        from .model import reseed
        make_potential = partial(reseed, make_potential)
    return classify_fundamental(solve_fundamental(make_potential(seed), lam, grid), L_grid, keep_pair=False)
