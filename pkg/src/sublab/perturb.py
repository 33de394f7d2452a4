"""Variation of parameters, weighted norms and the perturbation series.

A perturbed solution is written psi = u1 phi_- + u2 phi_+ with phi_-/phi_+
the unperturbed pair (phi_1/phi_2 at the subordinate angle, Wronskian 1).
The coefficient vector solves u' = A u (continuum) or
u(n+1) - u(n) = A(n) u(n) (discrete), and the series is anchored at the
finite horizon rather than at infinity.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .model import Grid, PotentialSpec, evaluate, sum_potential
from .propagate import SolutionPair, invert_steps, step_matrices

CONTRACTION = 1.0 / 3.0


class WeightError(ValueError):
    """Weights violate monotonicity or f+ f- >= 1."""


class NonConvergenceError(RuntimeError):
    """The contraction precondition cannot be met inside the horizon."""


class NumericalIntegrityError(RuntimeError):
    """A quantitative bound from the contraction argument failed."""


class ReconstructionError(RuntimeError):
    pass


class InfeasibleError(ValueError):
    def __init__(self, message, payload=None):
        super().__init__(message)
        self.payload = payload or {}


# ------------------------------------------------------------ coefficient matrix

@dataclass(frozen=True, eq=False)
class CoefficientMatrix:
    grid: Grid
    a11: np.ndarray
    a12: np.ndarray
    a21: np.ndarray
    a22: np.ndarray
    tag: str = "schrodinger"

    def at(self, i):
        return np.array([[self.a11[i], self.a12[i]], [self.a21[i], self.a22[i]]])

    def apply(self, v1, v2):
        return self.a11 * v1 + self.a12 * v2, self.a21 * v1 + self.a22 * v2

    @property
    def trace(self):
        return self.a11 + self.a22

    @property
    def det(self):
        return self.a11 * self.a22 - self.a12 * self.a21


def perturbation_values(W: PotentialSpec, grid: Grid):
    """W on the grid; the boundary site 0 carries no potential in the discrete case."""
    if W.kind != grid.kind:
        raise TypeError("perturbation kind does not match the grid")
    if grid.kind == "discrete":
        out = np.zeros(grid.n_steps + 1)
        out[1:] = evaluate(W, np.arange(1, grid.n_steps + 1))
        return out
    return evaluate(W, grid.points)


def _pm(pair: SolutionPair):
    """True values of (phi_-, phi_+) and their derivative/next-site slots."""
    fm, dfm = pair.values(1)
    fp, dfp = pair.values(2)
    if not (np.all(np.isfinite(fp)) and np.all(np.isfinite(dfp))):
        raise OverflowError("phi_+ overflows on this horizon; shorten it")
    return fm, dfm, fp, dfp


def build_A(W: PotentialSpec, pair: SolutionPair, grid: Grid | None = None) -> CoefficientMatrix:
    """Coefficient field from W and the unperturbed pair (phi_- = phi_1, phi_+ = phi_2).

    continuum: A = -W [[p m, p^2], [-m^2, -p m]]
    discrete:  A(n) = +W(n) [[p m, p^2], [-m^2, -p m]]  at site n
    """
    if grid is not None and grid != pair.grid:
        raise ValueError("grid mismatch between pair and requested grid")
    w = perturbation_values(W, pair.grid)
    fm, _, fp, _ = _pm(pair)
    s = -1.0 if pair.grid.kind == "continuum" else 1.0
    pm = fp * fm
    return CoefficientMatrix(pair.grid, s * w * pm, s * w * fp * fp, -s * w * fm * fm, -s * w * pm)


# ------------------------------------------------------------------------ weights

def tail_integral(g, grid: Grid):
    """Right tails of a grid function: trapezoid (continuum) or inclusive suffix sums (discrete)."""
    if grid.kind == "discrete":
        return np.cumsum(g[::-1])[::-1]
    seg = 0.5 * grid.step * (g[:-1] + g[1:])
    out = np.zeros_like(g)
    out[:-1] = np.cumsum(seg[::-1])[::-1]
    return out


def _suffix(F, grid):
    return tail_integral(F, grid)


def _prefix(F, grid, i0):
    """Integral from x_{i0} to x_k (continuum) or sum over i0 <= j < k (discrete), zero below i0."""
    out = np.zeros_like(F)
    if grid.kind == "discrete":
        out[i0 + 1:] = np.cumsum(F[i0:-1])
    else:
        seg = 0.5 * grid.step * (F[i0:-1] + F[i0 + 1:])
        out[i0 + 1:] = np.cumsum(seg)
    return out


@dataclass(frozen=True, eq=False)
class WeightPair:
    grid: Grid
    f_plus: np.ndarray
    f_minus: np.ndarray
    G: np.ndarray | None = None
    tail: np.ndarray | None = None
    label: str = ""

    @property
    def minus_decays(self):
        """f- tends to zero along the horizon (ratio below 1e-3)."""
        return bool(self.f_minus[-1] < 1e-3 * self.f_minus[0])


def check_weights(f_plus, f_minus, rtol=1e-12):
    fp, fm = np.asarray(f_plus), np.asarray(f_minus)
    if np.any(fp < 0) or np.any(fm < 0):
        raise WeightError("weights must be nonnegative")
    if np.any(np.diff(fp) < -rtol * np.abs(fp[1:])):
        raise WeightError("f+ must be nondecreasing")
    if np.any(np.diff(fm) > rtol * np.abs(fm[:-1])):
        raise WeightError("f- must be nonincreasing")
    if np.any(fp * fm < 1.0 - 1e-12):
        raise WeightError("f+ f- >= 1 violated")


def build_G(A: CoefficientMatrix, f_plus, f_minus, label="") -> WeightPair:
    """G = max(|a11| + |a12| f-, |a21| f+ + |a22|) and its right tails."""
    f_plus = np.asarray(f_plus, dtype=float)
    f_minus = np.asarray(f_minus, dtype=float)
    check_weights(f_plus, f_minus)
    G = np.maximum(np.abs(A.a11) + np.abs(A.a12) * f_minus, np.abs(A.a21) * f_plus + np.abs(A.a22))
    if not np.all(np.isfinite(G)):
        raise OverflowError("G is not finite on this horizon")
    return WeightPair(A.grid, f_plus, f_minus, G, tail_integral(G, A.grid), label)


def weighted_norm(omega, i, weights: WeightPair, sign):
    """||w||+_x = max(|w1|, |w2| f+(x));  ||w||-_x = max(f-(x)|w1|, |w2|)."""
    w1, w2 = abs(omega[0]), abs(omega[1])
    if sign == "+":
        return max(w1, w2 * weights.f_plus[i])
    if sign == "-":
        return max(weights.f_minus[i] * w1, w2)
    raise ValueError("sign must be '+' or '-'")


def _norm_arrays(v1, v2, weights, sign):
    if sign == "+":
        return np.maximum(np.abs(v1), np.abs(v2) * weights.f_plus)
    return np.maximum(weights.f_minus * np.abs(v1), np.abs(v2))


def power_weights(grid: Grid, mu_plus):
    """f+ = max(x, 1)^mu, f- = 1."""
    x = np.maximum(grid.points, 1.0)
    return x ** mu_plus, np.ones_like(x)


def point_weights(pair: SolutionPair):
    """f+ = (1 + x) sup_{y <= x} |phi_2(y)|, f- = 1/f+."""
    f2, _ = pair.values(2)
    if not np.all(np.isfinite(f2)):
        raise OverflowError("phi_2 overflows on this horizon")
    fp = (1.0 + pair.x) * np.maximum.accumulate(np.abs(f2))
    return fp, 1.0 / fp


def choose_weights_point(pair: SolutionPair, bound_factor=1e3):
    """Point-spectrum weights; the L^2 solution phi_1 must stay bounded."""
    f1, _ = pair.values(1)
    a = np.abs(f1)
    if a.max() > bound_factor * max(a[0], 1.0):
        raise InfeasibleError("L2 solution is not bounded on the horizon", {"sup_phi1": float(a.max())})
    return point_weights(pair)


def exponential_weights(grid: Grid, gamma, eps1):
    """f+- = exp((+-2 gamma + 2 eps1) x) with 0 < eps1 < gamma."""
    if not (0 < eps1 < gamma):
        raise WeightError("need 0 < eps1 < gamma")
    x = grid.points
    return np.exp((2 * gamma + 2 * eps1) * x), np.exp((-2 * gamma + 2 * eps1) * x)


def power_lo_weights(grid: Grid, gamma, eps):
    """f+- = (1 + x)^(2(+-gamma + eps)) with 0 < eps < gamma."""
    if not (0 < eps < gamma):
        raise WeightError("need 0 < eps < gamma")
    x = 1.0 + grid.points
    return x ** (2 * (gamma + eps)), x ** (2 * (-gamma + eps))


@dataclass
class PowerWeightChoice:
    mu_plus: float
    window: tuple
    feasible: bool
    checks: dict


def choose_weights_power(beta_hat, eta) -> PowerWeightChoice:
    """mu+ at the midpoint of (1/beta - 1, eta - 1); feasible iff eta > 1/beta."""
    b = float(beta_hat)
    if not (0 < b <= 1) or eta <= 0:
        raise ValueError("need beta in (0, 1] and eta > 0")
    lo, hi = 1.0 / b - 1.0, eta - 1.0
    checks = {
        "diag_terms": 0.5 + 0.5 / b < eta,
        "a21_terms": lo < hi,
        "a12_terms": 1.0 / b < eta,
    }
    if not eta > 1.0 / b:
        raise InfeasibleError(f"eta = {eta} does not exceed 1/beta = {1.0 / b:.6g}",
                              {"beta": b, "eta": eta, "needed": 1.0 / b, "checks": checks})
    return PowerWeightChoice(0.5 * (lo + hi), (lo, hi), True, checks)


def dimension_feasibility(alpha, eta):
    """The same bound in Hausdorff-dimension units: eta > 2/alpha - 1."""
    return {"alpha": alpha, "needed": 2.0 / alpha - 1.0, "feasible": eta > 2.0 / alpha - 1.0}


# ------------------------------------------------------------------------ series

@dataclass
class SeriesSolution:
    branch: str
    grid: Grid
    i0: int
    u1: np.ndarray
    u2: np.ndarray
    u_end: tuple
    iterations: int
    bounds: list
    ratios: list
    tail_x0: float
    alpha: float = 1.0
    route: str = ""
    checks: dict = field(default_factory=dict)

    @property
    def x0(self):
        return float(self.grid.points[self.i0])


def anchor_index(weights: WeightPair, contraction=CONTRACTION, max_anchor_fraction=0.5):
    """First grid index where the tail of G is at most the contraction constant."""
    ok = np.nonzero(weights.tail <= contraction)[0]
    if len(ok) == 0:
        raise NonConvergenceError("tail of G never drops below the contraction constant")
    i0 = int(ok[0])
    if i0 > max_anchor_fraction * (len(weights.tail) - 1):
        raise NonConvergenceError(
            f"tail of G drops below {contraction:.3g} only at x = {weights.grid.points[i0]:.6g}; "
            "G may not be integrable at this horizon")
    return i0


def series_solve(A: CoefficientMatrix, weights: WeightPair, branch="u_minus", x0=None,
                 tol=1e-12, max_iter=60, contraction=CONTRACTION, max_anchor_fraction=0.5) -> SeriesSolution:
    """Sum the successive-approximation series for u- (seed (1,0)) or u+ (seed (0,1))."""
    grid = A.grid
    if weights.G is None:
        raise ValueError("weights need G; use build_G")
    if x0 is None:
        i0 = anchor_index(weights, contraction, max_anchor_fraction)
    else:
        i0 = grid.index(x0) if grid.kind == "continuum" else int(x0)
        if weights.tail[i0] > contraction + 1e-15:
            raise NonConvergenceError(f"tail of G at x0 is {weights.tail[i0]:.6g} > {contraction:.3g}")
    T0 = float(weights.tail[i0])
    K = grid.n_steps
    mask = np.zeros(K + 1, dtype=bool)
    mask[i0:] = True

    if branch == "u_minus":
        seed, sign, route = (1.0, 0.0), "+", "from_horizon"
    elif branch == "u_plus":
        seed, sign = (0.0, 1.0), "-"
        route = "forward" if weights.minus_decays else "from_horizon"
    else:
        raise ValueError("branch must be u_minus or u_plus")

    dt = np.result_type(A.a11, A.a12, A.a21, A.a22, float)
    v1 = np.where(mask, seed[0], 0.0).astype(dt)
    v2 = np.where(mask, seed[1], 0.0).astype(dt)
    u1, u2 = v1.copy(), v2.copy()
    # discrete terms also carry the value one site past the horizon
    e1, e2 = seed
    bounds, ratios = [1.0], []
    n_it = 0
    for n_it in range(1, max_iter + 1):
        F1, F2 = A.apply(v1, v2)
        F1 = np.where(mask, F1, 0.0)
        F2 = np.where(mask, F2, 0.0)
        if route == "from_horizon":
            n1, n2 = -_suffix(F1, grid), -_suffix(F2, grid)
            d1 = d2 = 0.0
        else:
            n1, n2 = _prefix(F1, grid, i0), _prefix(F2, grid, i0)
            if grid.kind == "discrete":
                d1, d2 = np.sum(F1[i0:]), np.sum(F2[i0:])
            else:
                d1, d2 = n1[-1], n2[-1]
        n1 = np.where(mask, n1, 0.0)
        n2 = np.where(mask, n2, 0.0)
        b = float(np.max(_norm_arrays(n1[mask], n2[mask], _slice_weights(weights, mask), sign)))
        u1 += n1
        u2 += n2
        e1 += d1
        e2 += d2
        ratios.append(b / bounds[-1] if bounds[-1] > 0 else 0.0)
        bounds.append(b)
        v1, v2 = n1, n2
        if b < tol:
            break
    if grid.kind == "continuum":
        e1, e2 = u1[-1], u2[-1]

    checks = {"converged": bounds[-1] < tol, "contraction": T0 <= contraction + 1e-15}
    alpha = 1.0
    if route == "forward":
        alpha = complex(e2) if np.iscomplexobj(u2) else float(e2)
        if abs(alpha - 1.0) > 0.5:
            raise NumericalIntegrityError(f"|alpha - 1| = {abs(alpha - 1.0):.3g} exceeds 1/2")
        u1, u2 = u1 / alpha, u2 / alpha
        e1, e2 = e1 / alpha, e2 / alpha
        fm_u1 = weights.f_minus * np.abs(u1)
        n_tail = max(4, (K - i0) // 10)
        checks["f_minus_u1_to_zero"] = bool(
            np.max(fm_u1[-n_tail:]) <= np.max(fm_u1[-2 * n_tail:-n_tail]) * (1 + 1e-9) + 1e-14)
    # geometric bound sup ||term_n|| <= (C T0)^n, C accounts for the norm transport
    C = 1.0
    if route == "from_horizon" and sign == "-":
        C = float(weights.f_minus[i0] / weights.f_minus[-1])
    checks["per_iteration_bound"] = all(bv <= (C * T0) ** k * (1 + 1e-9) + 1e-300
                                        for k, bv in enumerate(bounds))
    checks["ratio_bound"] = all(r <= C * T0 + 1e-10 for r in ratios[:-1]) if len(ratios) > 1 else True
    if branch == "u_minus":
        half = i0 + (K - i0) // 2
        dev = np.maximum(np.abs(u1[half:] - 1.0), np.abs(u2[half:]) * weights.f_plus[half:])
        allowed = weights.tail[half:] / (1.0 - T0)
        checks["u1_to_1_fplus_u2_to_0"] = bool(np.all(dev <= allowed * (1 + 1e-8) + 1e-13))
    u1[~mask] = np.nan
    u2[~mask] = np.nan
    return SeriesSolution(branch, grid, i0, u1, u2, (e1.item() if hasattr(e1, "item") else e1,
                                                      e2.item() if hasattr(e2, "item") else e2),
                          n_it, bounds, ratios,
                          T0, alpha, route, checks)


def _slice_weights(weights, mask):
    return WeightPair(weights.grid, weights.f_plus[mask], weights.f_minus[mask])


def write_bounds_csv(path, series: SeriesSolution):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "sup_norm", "bound", "ratio"])
        for k, b in enumerate(series.bounds):
            r = series.ratios[k - 1] if k > 0 else float("nan")
            w.writerow([k, f"{b:.17g}", f"{series.tail_x0 ** k:.17g}", f"{r:.17g}"])


# ----------------------------------------------------------------- reconstruction

@dataclass
class Reconstruction:
    psi: np.ndarray
    dpsi: np.ndarray
    residual: np.ndarray
    max_residual: float


def reconstruct_psi(series: SeriesSolution, pair: SolutionPair, W: PotentialSpec | None = None,
                    V0: PotentialSpec | None = None, tol=1e-6, extend=True) -> Reconstruction:
    """psi = u1 phi_- + u2 phi_+ on [x0, horizon], extended to the origin by the perturbed equation.

    The residual is the one-step defect of the perturbed propagator
    (continuum) or of the perturbed recursion (discrete), relative to 1+|psi|.
    """
    grid = series.grid
    fm, dfm, fp, dfp = _pm(pair)
    i0 = series.i0
    K = grid.n_steps
    psi = np.full(K + 1, np.nan)
    dpsi = np.full(K + 1, np.nan)
    u1, u2 = series.u1, series.u2
    psi[i0:] = u1[i0:] * fm[i0:] + u2[i0:] * fp[i0:]
    if grid.kind == "discrete":
        nxt1 = np.append(u1[i0 + 1:], series.u_end[0])
        nxt2 = np.append(u2[i0 + 1:], series.u_end[1])
        dpsi[i0:] = nxt1 * dfm[i0:] + nxt2 * dfp[i0:]
    else:
        dpsi[i0:] = u1[i0:] * dfm[i0:] + u2[i0:] * dfp[i0:]
    V0 = V0 if V0 is not None else pair.potential
    if V0 is None:
        raise ValueError("the unperturbed potential is needed to extend and check psi")
    V = sum_potential(V0, W) if W is not None else V0
    steps = step_matrices(V, pair.lam, grid)
    if grid.kind == "discrete" and i0 > 0:
        # row two of the variation-of-parameters identity gives psi(i0 - 1)
        psi[i0 - 1] = u1[i0] * fm[i0 - 1] + u2[i0] * fp[i0 - 1]
        dpsi[i0 - 1] = psi[i0]
        if extend:
            for m in range(i0 - 1, 0, -1):
                psi[m - 1] = steps[m - 1, 0] * psi[m] - psi[m + 1]
                dpsi[m - 1] = psi[m]
    elif grid.kind == "continuum" and i0 > 0 and extend:
        inv = invert_steps(steps[:i0])
        y = np.array([dpsi[i0], psi[i0]])
        for k in range(i0 - 1, -1, -1):
            m = inv[k]
            y = np.array([m[0] * y[0] + m[1] * y[1], m[2] * y[0] + m[3] * y[1]])
            dpsi[k], psi[k] = y
    residual = np.full(K + 1, np.nan)
    ok = np.isfinite(psi[:-1]) & np.isfinite(psi[1:])
    p0, q0, p1, q1 = dpsi[:-1], psi[:-1], dpsi[1:], psi[1:]
    if grid.kind == "discrete":
        # psi(n+2) = (lam - V(n+1)) psi(n+1) - psi(n)
        r = np.abs(p1 - (steps[:, 0] * p0 - q0)) + np.abs(q1 - p0)
    else:
        r = np.abs(p1 - (steps[:, 0] * p0 + steps[:, 1] * q0)) + np.abs(q1 - (steps[:, 2] * p0 + steps[:, 3] * q0))
    residual[:-1] = np.where(ok, r / (1.0 + np.abs(q0)), np.nan)
    max_res = float(np.nanmax(residual)) if np.any(ok) else math.nan
    if max_res > 10 * tol:
        raise ReconstructionError(f"perturbed-equation residual {max_res:.3g} exceeds 10x tolerance {tol:.3g}")
    return Reconstruction(psi, dpsi, residual, max_res)


def log_cum_sq(psi, grid: Grid):
    """ln ||psi||^2_L tables (NaN-free input expected)."""
    from .propagate import _log_abs, log_cumulative_sq
    return log_cumulative_sq(_log_abs(psi), grid)


def norm_ratio_trace(psi, phi_log_cum, grid: Grid, L_grid):
    """||psi||_L / ||phi||_L along L_grid."""
    from .propagate import interpolate_log_table
    lp = interpolate_log_table(log_cum_sq(psi, grid), grid, L_grid)
    lf = interpolate_log_table(phi_log_cum, grid, L_grid)
    return np.exp(0.5 * (lp - lf))


def l2_tail_fraction(psi, grid: Grid):
    """Share of ||psi||^2 contributed by the second half of the horizon."""
    lc = log_cum_sq(psi, grid)
    n = len(lc) - 1
    return float(1.0 - math.exp(lc[n // 2] - lc[n]))


# ------------------------------------------------------------------------ Levinson

@dataclass
class LevinsonSystem:
    a11: np.ndarray
    a12: np.ndarray
    a21: np.ndarray
    a22: np.ndarray
    alpha2: np.ndarray
    bounded_flag: bool


def levinson_reduce(A: CoefficientMatrix, f_plus) -> LevinsonSystem:
    """Rescale u2 = y2 / f+: A1 = [[a11, a12/f+], [a21 f+, a22]], alpha2 = f+'/f+."""
    f = np.asarray(f_plus, dtype=float)
    if np.any(f <= 0):
        raise WeightError("f+ must be positive")
    if A.grid.kind == "discrete":
        alpha2 = np.append(f[1:] / f[:-1] - 1.0, 0.0)
    else:
        alpha2 = np.gradient(np.log(f), A.grid.step)
    bounded = bool(np.all(np.diff(f) >= -1e-12 * f[1:]))
    return LevinsonSystem(A.a11, A.a12 / f, A.a21 * f, A.a22, alpha2, bounded)


def levinson_solve(A: CoefficientMatrix, f_plus, i0, tol=1e-13, max_iter=80):
    """Decaying Levinson solution y = (u1, f+ u2) by direct iteration of the reduced system."""
    f = np.asarray(f_plus, dtype=float)
    red = levinson_reduce(A, f)
    grid = A.grid
    mask = np.arange(grid.n_steps + 1) >= i0
    y1 = np.where(mask, 1.0, 0.0)
    y2 = np.zeros_like(y1)
    t1, t2 = y1.copy(), y2.copy()
    for _ in range(max_iter):
        g1 = np.where(mask, red.a11 * t1 + red.a12 * t2, 0.0)
        g2 = np.where(mask, (red.a21 * t1 + red.a22 * t2) / f, 0.0)
        n1 = -tail_integral(g1, grid)
        n2 = -f * tail_integral(g2, grid)
        n1[~mask] = 0.0
        n2[~mask] = 0.0
        y1, y2 = y1 + n1, y2 + n2
        t1, t2 = n1, n2
        if max(np.max(np.abs(n1)), np.max(np.abs(n2))) < tol:
            break
    y1[~mask] = np.nan
    y2[~mask] = np.nan
    return y1, y2


# ------------------------------------------------------------- growth diagnostics

def phi_product_diagnostic(Q, pair: SolutionPair, L_grid=None):
    """Integration-by-parts control of int |Q phi+ phi-|.

    Fits |Q| <= C1 (1+x)^-a and ||phi+||_L ||phi-||_L <= C2 (1+L)^b, tracks
    g(x) = int_0^x |phi+ phi-| against its Schwarz bound, and reports the
    resulting bound C1 (C2 a/(a-b) + C2) when a > b.
    """
    grid = pair.grid
    x = grid.points
    q = np.abs(Q if isinstance(Q, np.ndarray) else perturbation_values(Q, grid))
    fm, _, fp, _ = _pm(pair)
    prod = np.abs(fp * fm)
    if grid.kind == "discrete":
        g = np.concatenate([[0.0], np.cumsum(prod[1:])])
    else:
        g = np.concatenate([[0.0], np.cumsum(0.5 * grid.step * (prod[:-1] + prod[1:]))])
    if L_grid is None:
        from .subordinacy import geometric_L_grid
        L_grid = geometric_L_grid(grid, 0.3)
    idx = np.clip(np.round(np.asarray(L_grid) / grid.step).astype(int), 1, grid.n_steps)
    norms = np.exp(pair.log_norm(x[idx], 1) + pair.log_norm(x[idx], 2))
    schwarz_ok = bool(np.all(g[idx] <= norms * (1 + 1e-9)))
    from .subordinacy import loglog_slope
    b, lnC2 = loglog_slope(1.0 + x[idx], np.log(norms))
    nz = q[idx] > 0
    if np.count_nonzero(nz) >= 2:
        slope_q, _ = loglog_slope(1.0 + x[idx][nz], np.log(q[idx][nz]))
        a = -slope_q
    else:
        a = math.inf
    C1 = float(np.max(q * (1.0 + x) ** a)) if math.isfinite(a) else 0.0
    C2 = float(np.max(norms / (1.0 + x[idx]) ** b))
    integral = float(np.sum(q * prod) if grid.kind == "discrete" else np.trapezoid(q * prod, x))
    bound = C1 * C2 * (a / (a - b) + 1.0) if a > b and math.isfinite(a) else math.inf
    return {"a": a, "b": b, "C1": C1, "C2": C2, "integral": integral, "bound": bound,
            "integrable": a > b, "schwarz_ok": schwarz_ok}


def norm_growth_windows(pair: SolutionPair, beta, eps=0.05, L_grid=None):
    """Fitted slopes of ||phi-||_L, ||phi+||_L against the windows of the power bounds."""
    from .subordinacy import loglog_slope
    if L_grid is None:
        H = pair.grid.horizon
        L_grid = np.geomspace(H / 10.0, H, 24)
    s_minus, _ = loglog_slope(L_grid, pair.log_norm(L_grid, 1))
    s_plus, _ = loglog_slope(L_grid, pair.log_norm(L_grid, 2))
    wm = (1.0 - 1.0 / (2 * beta) - eps, 0.5 + eps)
    wp = (0.5 - eps, 1.0 / (2 * beta) + eps)
    return {"slope_minus": s_minus, "window_minus": wm, "minus_ok": wm[0] <= s_minus <= wm[1],
            "slope_plus": s_plus, "window_plus": wp, "plus_ok": wp[0] <= s_plus <= wp[1]}
