"""Boundary-condition solutions, transfer matrices, Wronskians and truncated norms.

Everything is built from one fundamental system started from identity data
at the origin.  State rows are ``(p_a, p_b, q_a, q_b)`` where ``q`` holds the
solution value and ``p`` its derivative (continuum) or next-site value
(discrete), so the 2x2 state is the transfer matrix itself.  Mantissas come
with a running log-scale so long horizons never overflow.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .model import BoundaryCondition, Grid, PotentialSpec, evaluate


class PropagationError(RuntimeError):
    pass


def c1_vec(theta):
    """Coefficients of phi_{1,theta} in the identity-data fundamental system."""
    return np.array([-math.cos(theta), math.sin(theta)])


def c2_vec(theta):
    """phi_2 = phi_{1,theta+pi/2}, so the Wronskian is +1."""
    return np.array([math.sin(theta), math.cos(theta)])


# ---------------------------------------------------------------- step matrices

def rk4_step_matrices(V: PotentialSpec, lam, grid: Grid) -> np.ndarray:
    """Per-step RK4 propagators for y = (phi', phi) with phi'' = (V - lam) phi.

    Returns an (N, 4) array of row-major 2x2 matrices.
    """
    x = grid.points
    h = grid.step
    a0 = evaluate(V, x[:-1]) - lam
    am = evaluate(V, x[:-1] + 0.5 * h) - lam
    a1 = evaluate(V, x[1:]) - lam
    n = len(a0)

    def m(a):
        out = np.zeros((n, 2, 2))
        out[:, 0, 1] = a
        out[:, 1, 0] = 1.0
        return out

    eye = np.broadcast_to(np.eye(2), (n, 2, 2))
    M0, Mm, M1 = m(a0), m(am), m(a1)
    K1 = M0
    K2 = Mm @ (eye + 0.5 * h * K1)
    K3 = Mm @ (eye + 0.5 * h * K2)
    K4 = M1 @ (eye + h * K3)
    P = eye + (h / 6.0) * (K1 + 2.0 * K2 + 2.0 * K3 + K4)
    if not np.all(np.isfinite(P)):
        raise PropagationError("non-finite step matrix (NaN in potential?)")
    return P.reshape(n, 4)


def discrete_coefficients(V: PotentialSpec, lam, grid: Grid) -> np.ndarray:
    """coef[n] = lam - V(n+1), driving u(n+2) = coef[n] u(n+1) - u(n)."""
    sites = np.arange(1, grid.n_steps + 1, dtype=np.float64)
    c = lam - evaluate(V, sites)
    if not np.all(np.isfinite(c)):
        raise PropagationError("non-finite potential values")
    return c


def step_matrices(V, lam, grid):
    if grid.kind == "discrete":
        c = discrete_coefficients(V, lam, grid)
        out = np.zeros((len(c), 4))
        out[:, 0] = c
        out[:, 1] = -1.0
        out[:, 2] = 1.0
        return out
    return rk4_step_matrices(V, lam, grid)


def invert_steps(steps):
    """Exact inverses of 2x2 row-major step matrices."""
    a, b, c, d = steps[:, 0], steps[:, 1], steps[:, 2], steps[:, 3]
    det = a * d - b * c
    return np.stack([d / det, -b / det, -c / det, a / det], axis=1)


# ------------------------------------------------------------------ fundamental

@dataclass(frozen=True, eq=False)
class Fundamental:
    """Fundamental system with identity data at 0 and its cumulative Gram table."""

    V: PotentialSpec
    lam: float
    grid: Grid
    state: np.ndarray
    log_scale: np.ndarray
    gram: np.ndarray

    def transfer(self, i):
        """Mantissa of T(0, x_i) and its log-scale."""
        s = self.state[i]
        return np.array([[s[0], s[1]], [s[2], s[3]]]), self.log_scale[i]

    def gram_at(self, i):
        g = self.gram[i]
        return np.array([[g[0], g[1]], [g[1], g[2]]]), 2.0 * self.log_scale[i]

    def log_norm_sq(self, c, idx=None):
        """ln ||phi_c||^2_{x_i} for coefficient vector c, at all (or given) indices."""
        g = self.gram if idx is None else self.gram[idx]
        ls = self.log_scale if idx is None else self.log_scale[idx]
        q = c[0] ** 2 * g[..., 0] + 2 * c[0] * c[1] * g[..., 1] + c[1] ** 2 * g[..., 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.log(q) + 2.0 * ls

    def transfer_log_norm(self):
        return transfer_log_norm_from_state(self.state, self.log_scale)


def transfer_log_norm_from_state(state, log_scale):
    """ln of the spectral norm of each 2x2 state matrix, including the log-scale."""
    a, b, c, d = state[:, 0], state[:, 1], state[:, 2], state[:, 3]
    s = a * a + b * b + c * c + d * d
    det = a * d - b * c
    r = 2.0 * det / s  # scaled first so s*s cannot overflow near the rescale threshold
    sig2 = 0.5 * s * (1.0 + np.sqrt(np.maximum(1.0 - r * r, 0.0)))
    return 0.5 * np.log(sig2) + log_scale


def solve_fundamental(V: PotentialSpec, lam, grid: Grid) -> Fundamental:
    if V.kind != grid.kind:
        raise TypeError(f"potential kind {V.kind} does not match grid kind {grid.kind}")
    init = np.array([1.0, 0.0, 0.0, 1.0])
    if grid.kind == "discrete":
        coef = discrete_coefficients(V, lam, grid)
        state, ls, gram = kernels.discrete_chain(coef, init)
    else:
        steps = rk4_step_matrices(V, lam, grid)
        state, ls, gram = kernels.matrix_chain(steps, init, grid.step)
    if not np.all(np.isfinite(state)):
        raise PropagationError("propagation produced non-finite values")
    return Fundamental(V, float(lam), grid, state, ls, gram)


def backward_solution(V: PotentialSpec, lam, grid: Grid, end_vec, steps=None):
    """Propagate a single solution backward from the horizon.

    ``end_vec`` is (p, q) at the last grid point.  Returns (p, q, log_scale)
    mantissa arrays indexed forward in x.  Backward propagation is stable for
    the solution that decays in the forward direction.
    """
    if steps is None:
        steps = step_matrices(V, lam, grid)
    inv = invert_steps(steps)[::-1]
    init = np.array([end_vec[0], 0.0, end_vec[1], 0.0])
    state, ls, _ = kernels.matrix_chain(inv, init, 0.0)
    state = state[::-1]
    return state[:, 0].copy(), state[:, 2].copy(), ls[::-1].copy()


# ---------------------------------------------------------------- solution pair

def _log_abs(x):
    with np.errstate(divide="ignore"):
        return np.log(np.abs(x))


def log_cumulative_sq(values_log, grid: Grid):
    """ln of cumulative ||f||^2 tables from ln|f| on the grid (discrete sums from n=1, trapezoid otherwise)."""
    lf2 = 2.0 * values_log
    out = np.full(len(lf2), -np.inf)
    with np.errstate(invalid="ignore"):
        if grid.kind == "discrete":
            out[1:] = np.logaddexp.accumulate(lf2[1:])
        else:
            seg = np.log(0.5 * grid.step) + np.logaddexp(lf2[:-1], lf2[1:])
            out[1:] = np.logaddexp.accumulate(seg)
    return out


@dataclass(frozen=True, eq=False)
class SolutionPair:
    """phi_1 and phi_2 at one boundary angle, sampled on the grid.

    ``phi1``/``dphi1`` etc. are mantissas; the true values are mantissa times
    ``exp(ls1)`` (``exp(ls2)``).  ``dphi`` is the derivative (continuum) or
    the next-site value (discrete).  ``log_cum1``/``log_cum2`` hold
    ln ||phi||^2_L at the grid points.
    """

    grid: Grid
    theta: float
    lam: float
    phi1: np.ndarray
    dphi1: np.ndarray
    ls1: np.ndarray
    phi2: np.ndarray
    dphi2: np.ndarray
    ls2: np.ndarray
    log_cum1: np.ndarray
    log_cum2: np.ndarray
    stabilized: bool = False
    potential: PotentialSpec | None = None

    @property
    def x(self):
        return self.grid.points

    def values(self, which=1):
        """True (unscaled) values and derivatives; may overflow for growing solutions."""
        if which == 1:
            f, df, ls = self.phi1, self.dphi1, self.ls1
        else:
            f, df, ls = self.phi2, self.dphi2, self.ls2
        e = np.exp(ls)
        with np.errstate(over="ignore", invalid="ignore"):
            return f * e, df * e

    @property
    def cum_norm1_sq(self):
        with np.errstate(over="ignore"):
            return np.exp(self.log_cum1)

    @property
    def cum_norm2_sq(self):
        with np.errstate(over="ignore"):
            return np.exp(self.log_cum2)

    def log_norm(self, L, which=1):
        """ln ||phi||_L for scalar or array L."""
        table = self.log_cum1 if which == 1 else self.log_cum2
        return 0.5 * interpolate_log_table(table, self.grid, L)

    def ratio(self, L):
        return np.exp(self.log_norm(L, 1) - self.log_norm(L, 2))

    def to_csv(self, path):
        f1, d1 = self.values(1)
        f2, d2 = self.values(2)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "phi1", "dphi1", "phi2", "dphi2", "cum_norm1_sq", "cum_norm2_sq"])
            for row in zip(self.x, f1, d1, f2, d2, self.cum_norm1_sq, self.cum_norm2_sq):
                w.writerow([f"{v:.17g}" for v in row])


def pair_from_fundamental(fund: Fundamental, theta) -> SolutionPair:
    bc = BoundaryCondition(theta)
    c1, c2 = c1_vec(bc.theta), c2_vec(bc.theta)
    s = fund.state
    p1 = c1[0] * s[:, 0] + c1[1] * s[:, 1]
    q1 = c1[0] * s[:, 2] + c1[1] * s[:, 3]
    p2 = c2[0] * s[:, 0] + c2[1] * s[:, 1]
    q2 = c2[0] * s[:, 2] + c2[1] * s[:, 3]
    ls = fund.log_scale
    return SolutionPair(
        grid=fund.grid, theta=bc.theta, lam=fund.lam,
        phi1=q1, dphi1=p1, ls1=ls.copy(), phi2=q2, dphi2=p2, ls2=ls.copy(),
        log_cum1=fund.log_norm_sq(c1), log_cum2=fund.log_norm_sq(c2), potential=fund.V,
    )


def with_stable_phi1(pair: SolutionPair, fund: Fundamental, steps=None):
    """Replace phi_1 by a backward-propagated copy (for exponentially decaying solutions).

    The terminal direction is the contracting left-singular vector of
    T(0, horizon); the boundary angle is re-read from the recovered data at 0.
    """
    T, _ = fund.transfer(-1)
    U, _, _ = np.linalg.svd(T)
    end = U[:, 1]
    p, q, ls = backward_solution(fund.V, fund.lam, fund.grid, end, steps)
    # normalize so that (p, q)(0) = (-cos theta, sin theta)
    theta = math.atan2(q[0], -p[0])
    bc, _ = BoundaryCondition.compose(theta)
    c1 = c1_vec(bc.theta)
    j = int(np.argmax(np.abs(c1)))
    scale = c1[j] / (p[0] if j == 0 else q[0])
    sgn = math.copysign(1.0, scale)
    ls = ls - ls[0] + math.log(abs(scale))
    p, q = p * sgn, q * sgn
    c2 = c2_vec(bc.theta)
    s = fund.state
    p2 = c2[0] * s[:, 0] + c2[1] * s[:, 1]
    q2 = c2[0] * s[:, 2] + c2[1] * s[:, 3]
    return SolutionPair(
        grid=fund.grid, theta=bc.theta, lam=fund.lam,
        phi1=q, dphi1=p, ls1=ls, phi2=q2, dphi2=p2, ls2=fund.log_scale.copy(),
        log_cum1=log_cumulative_sq(_log_abs(q) + ls, fund.grid),
        log_cum2=fund.log_norm_sq(c2), stabilized=True, potential=fund.V,
    )


def solve_pair(V: PotentialSpec, theta, lam, grid: Grid) -> SolutionPair:
    """phi_{1,theta} and phi_{2,theta} = phi_{1,theta+pi/2} on the grid."""
    return pair_from_fundamental(solve_fundamental(V, lam, grid), theta)


def interpolate_log_table(table, grid: Grid, L):
    """ln of the linearly interpolated cumulative table at length(s) L."""
    L = np.asarray(L, dtype=np.float64)
    if np.any(L > grid.horizon * (1 + 1e-12)) or np.any(L < 0):
        raise ValueError(f"length outside [0, {grid.horizon}]")
    k = np.clip(np.floor(L / grid.step).astype(np.int64), 0, len(table) - 1)
    t = L / grid.step - k
    k1 = np.minimum(k + 1, len(table) - 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        lo = table[k] + np.log1p(-t)
        hi = table[k1] + np.log(t)
        out = np.where(t <= 0, table[k], np.logaddexp(lo, hi))
    return out


def jl_norm(f, L, grid: Grid) -> float:
    """Truncated L^2 norm ||f||_L of a grid function (trapezoid or interpolated sum)."""
    f = np.asarray(f, dtype=np.float64)
    if L > grid.horizon * (1 + 1e-12):
        raise ValueError(f"L = {L} exceeds the horizon {grid.horizon}")
    if grid.kind == "discrete":
        n = int(math.floor(L))
        t = L - n
        total = float(np.sum(f[1:n + 1] ** 2))
        if t > 0:
            total += t * float(f[n + 1] ** 2)
        return math.sqrt(total)
    f2 = f ** 2
    cum = np.concatenate([[0.0], np.cumsum(0.5 * grid.step * (f2[:-1] + f2[1:]))])
    return math.sqrt(float(np.interp(L, grid.points, cum)))


def wronskian_array(pair: SolutionPair):
    """phi1 phi2' - phi1' phi2 (continuum) or phi1(n)phi2(n+1) - phi1(n+1)phi2(n) at every grid point."""
    w = pair.phi1 * pair.dphi2 - pair.dphi1 * pair.phi2
    with np.errstate(over="ignore"):
        return w * np.exp(pair.ls1 + pair.ls2)


def wronskian(pair: SolutionPair, point) -> float:
    return float(wronskian_array(pair)[pair.grid.index(point)])


@dataclass(frozen=True)
class TransferMatrix:
    """T(0, x) with columns (phi1', phi1) and (phi2', phi2); ``matrix`` is the mantissa."""

    matrix: np.ndarray
    log_scale: float

    @property
    def det(self):
        return float(np.linalg.det(self.matrix) * math.exp(2 * self.log_scale))

    @property
    def log_norm(self):
        return float(math.log(np.linalg.norm(self.matrix, 2)) + self.log_scale)


def transfer_matrix(pair: SolutionPair, point) -> TransferMatrix:
    i = pair.grid.index(point)
    if pair.stabilized:
        raise ValueError("transfer matrices need the forward pair")
    m = np.array([[pair.dphi1[i], pair.dphi2[i]], [pair.phi1[i], pair.phi2[i]]])
    return TransferMatrix(m, float(pair.ls1[i]))


def transfer_norm_log(pair: SolutionPair, point) -> float:
    """ln ||T(0, point)|| from the running rescaled columns."""
    return transfer_matrix(pair, point).log_norm
