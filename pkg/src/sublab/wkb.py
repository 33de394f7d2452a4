"""WKB frames for V = V1 + V2 and the corrected asymptotics for square-integrable V1.

For lambda < 0 the frame is phi_+- = exp(+-eta) with eta' = sqrt(-lambda + V2);
for lambda > 0 it is exp(+-i eta) with eta' = sqrt(lambda - V2).  The
frame functions satisfy (-d^2/dx^2 + V - lambda) phi_+- = Q_+- phi_+- with
Q_+- = V1 -+ V2'/(2 eta'), which is substituted directly into the
coefficient matrix; no second derivative is ever taken numerically.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import perturb as pt
from .model import DomainError, Grid, PotentialSpec, derivative, evaluate, sum_potential
from .propagate import invert_steps, rk4_step_matrices


class FrameError(ValueError):
    """The frame hypotheses fail on this grid."""


class ScopeError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class WkbFrame:
    lam: float
    grid: Grid
    s0: float
    eta: np.ndarray
    eta_prime: np.ndarray
    phi_plus: np.ndarray
    phi_minus: np.ndarray
    dphi_plus: np.ndarray
    dphi_minus: np.ndarray
    Q_plus: np.ndarray
    Q_minus: np.ndarray
    w: np.ndarray
    V1: PotentialSpec
    V2: PotentialSpec
    l1_witness: dict = field(default_factory=dict)

    @property
    def oscillatory(self):
        return self.lam > 0

    @property
    def V(self):
        return sum_potential(self.V1, self.V2)


def _cumulative_simpson(f, fm, h):
    """Running integral from per-interval Simpson rules with midpoint samples."""
    seg = (h / 6.0) * (f[:-1] + 4.0 * fm + f[1:])
    return np.concatenate([[0.0], np.cumsum(seg)])


def build_wkb_frame(V1: PotentialSpec, V2: PotentialSpec, lam, grid: Grid) -> WkbFrame:
    if lam == 0:
        raise DomainError("WKB frames need lambda != 0")
    if grid.kind != "continuum":
        raise TypeError("WKB frames are continuum objects")
    x = grid.points
    h = grid.step
    v2 = evaluate(V2, x)
    outside = np.nonzero(np.abs(v2) >= abs(lam))[0]
    if len(outside) == 0:
        s0_idx = 0
    elif outside[-1] == len(x) - 1:
        raise FrameError("|V2| stays above |lambda| up to the horizon; no anchor s0")
    else:
        s0_idx = int(outside[-1]) + 1
    s0 = float(x[s0_idx])
    sgn = -1.0 if lam < 0 else 1.0
    arg = sgn * (lam - v2)
    argm = sgn * (lam - evaluate(V2, x[:-1] + 0.5 * h))
    if np.any(arg <= 0) or np.any(argm <= 0):
        raise FrameError("the phase speed vanishes before the anchor; move the grid origin past s0")
    ep = np.sqrt(arg)
    eta = _cumulative_simpson(ep, np.sqrt(argm), h)
    eta = eta - eta[s0_idx]
    dv2, exact = derivative(V2, x)
    if not exact:
        warnings.warn("V2' from centered differences; Q accuracy limited by the grid", stacklevel=2)
    v1 = evaluate(V1, x)
    corr = dv2 / (2.0 * ep)
    Qp, Qm = v1 - corr, v1 + corr
    if lam < 0:
        pp, pm = np.exp(eta), np.exp(-eta)
        dpp, dpm = ep * pp, -ep * pm
        w = 2.0 * ep
    else:
        pp, pm = np.exp(1j * eta), np.exp(-1j * eta)
        dpp, dpm = 1j * ep * pp, -1j * ep * pm
        w = 2j * ep
    witness = {}
    for name, q in (("Q_plus", Qp), ("Q_minus", Qm)):
        aq = np.abs(q)
        seg = 0.5 * h * (aq[:-1] + aq[1:])
        total = float(seg.sum())
        tail = float(seg[len(seg) // 2:].sum())
        witness[name] = {"l1": total, "tail_fraction": tail / total if total > 0 else 0.0}
    return WkbFrame(float(lam), grid, s0, eta, ep, pp, pm, dpp, dpm, Qp, Qm, w, V1, V2, witness)


def build_general_A(frame: WkbFrame) -> pt.CoefficientMatrix:
    """A = w^-1 [[-phi+ Q- phi-, -Q+ phi+^2], [Q- phi-^2, phi- Q+ phi+]]."""
    if np.min(np.abs(frame.w)) <= 1e-12:
        raise FrameError("the frame Wronskian vanishes")
    p, m, w = frame.phi_plus, frame.phi_minus, frame.w
    Qp, Qm = frame.Q_plus, frame.Q_minus
    return pt.CoefficientMatrix(frame.grid, -p * Qm * m / w, -Qp * p * p / w,
                                Qm * m * m / w, m * Qp * p / w, tag="general")


def frame_weights(frame: WkbFrame):
    """f+- = phi+-^2 (lambda < 0) or 1 (lambda > 0)."""
    if frame.oscillatory:
        one = np.ones(frame.grid.n_steps + 1)
        return one, one.copy()
    return frame.phi_plus ** 2, frame.phi_minus ** 2


def _extend(frame: WkbFrame, psi, dpsi, i0, lam, steps=None):
    """Backward RK4 continuation of the full equation below the anchor."""
    if i0 == 0:
        return psi, dpsi
    if steps is None:
        steps = rk4_step_matrices(frame.V, lam, frame.grid)
    inv = invert_steps(steps[:i0])
    y0, y1 = dpsi[i0], psi[i0]
    for k in range(i0 - 1, -1, -1):
        mk = inv[k]
        y0, y1 = mk[0] * y0 + mk[1] * y1, mk[2] * y0 + mk[3] * y1
        dpsi[k], psi[k] = y0, y1
    return psi, dpsi


@dataclass
class WkbSolution:
    frame: WkbFrame
    psi_plus: np.ndarray
    dpsi_plus: np.ndarray
    psi_minus: np.ndarray
    dpsi_minus: np.ndarray
    series: dict = field(repr=False, default_factory=dict)

    @property
    def ratio_plus(self):
        return self.psi_plus / self.frame.phi_plus

    @property
    def ratio_minus(self):
        return self.psi_minus / self.frame.phi_minus

    @property
    def dratio_plus(self):
        return self.dpsi_plus / self.frame.dphi_plus

    @property
    def dratio_minus(self):
        return self.dpsi_minus / self.frame.dphi_minus

    def to_csv(self, path, eta_corrected=None):
        x = self.frame.grid.points
        cols = {"x": x, "phi_plus": self.frame.phi_plus, "phi_minus": self.frame.phi_minus,
                "psi_plus": self.psi_plus, "psi_minus": self.psi_minus,
                "ratio_plus": self.ratio_plus, "ratio_minus": self.ratio_minus}
        if eta_corrected is not None:
            cols["eta_corrected_plus"], cols["eta_corrected_minus"] = eta_corrected
        _write_cols(path, cols)


def _write_cols(path, cols):
    keys = list(cols)
    complex_cols = {k for k in keys if np.iscomplexobj(cols[k])}
    header = []
    for k in keys:
        header += [k + "_re", k + "_im"] if k in complex_cols else [k]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i in range(len(cols["x"])):
            row = []
            for k in keys:
                v = cols[k][i]
                row += [f"{v.real:.17g}", f"{v.imag:.17g}"] if k in complex_cols else [f"{v:.17g}"]
            w.writerow(row)


def wkb_solve(frame: WkbFrame, tol=1e-12, max_iter=60) -> WkbSolution:
    """psi_+- through the perturbation series with frame weights."""
    A = build_general_A(frame)
    fp, fm = frame_weights(frame)
    wp = pt.build_G(A, fp, fm, label="wkb")
    steps = rk4_step_matrices(frame.V, frame.lam, frame.grid)
    out = {}
    series = {}
    for branch in ("u_minus", "u_plus"):
        s = pt.series_solve(A, wp, branch, tol=tol, max_iter=max_iter)
        i0 = s.i0
        psi = np.full(len(fp), np.nan, dtype=A.a11.dtype)
        dpsi = psi.copy()
        psi[i0:] = s.u1[i0:] * frame.phi_minus[i0:] + s.u2[i0:] * frame.phi_plus[i0:]
        dpsi[i0:] = s.u1[i0:] * frame.dphi_minus[i0:] + s.u2[i0:] * frame.dphi_plus[i0:]
        out[branch] = _extend(frame, psi, dpsi, i0, frame.lam, steps)
        series[branch] = s
    (pm, dpm), (pp, dpp) = out["u_minus"], out["u_plus"]
    return WkbSolution(frame, pp, dpp, pm, dpm, series)


# ------------------------------------------------------- corrected asymptotics

@dataclass
class CorrectedFrame:
    frame: WkbFrame
    U_plus: np.ndarray
    U_minus: np.ndarray
    exponent: np.ndarray  # int_0^x (U- + U+) phi+ phi- / w
    eta_plus: np.ndarray
    eta_minus: np.ndarray
    bigger: dict
    kercon: dict
    envelope: dict


def _cumtrapz(f, h):
    return np.concatenate([[0.0], np.cumsum(0.5 * h * (f[:-1] + f[1:]))])


def corrected_frame(frame: WkbFrame, max_lag=None, n_lags=240) -> CorrectedFrame:
    if frame.lam >= 0:
        raise ScopeError("corrected asymptotics are only available for lambda < 0")
    h = frame.grid.step
    x = frame.grid.points
    p, m, w = frame.phi_plus, frame.phi_minus, frame.w
    Up, Um = frame.Q_plus, frame.Q_minus
    pm = p * m
    Ip = _cumtrapz(Up * pm / w, h)
    Im = _cumtrapz(Um * pm / w, h)
    eta_plus = p * np.exp(Ip)
    eta_minus = m * np.exp(-Im)
    D = Ip + Im
    inf_pm = float(np.min(np.abs(pm)))
    bigger = {"inf_phi_product": inf_pm, "passed": inf_pm > 0}
    # K(x, x + y) = phi+^2(x) phi-^2(x + y) exp(-(D(x + y) - D(x)))
    n = frame.grid.n_steps
    if max_lag is None:
        max_lag = min(x[-1] / 2.0, 40.0)
    lags = np.unique(np.linspace(0, int(round(max_lag / h)), n_lags).astype(np.int64))
    lnK_base = 2.0 * frame.eta - D
    sup_k = np.empty(len(lags))
    for j, d in enumerate(lags):
        sup_k[j] = float(np.exp(np.max(lnK_base[:n + 1 - d] - (2.0 * frame.eta[d:] - D[d:]))))
    y = lags * h
    integral = float(np.trapezoid(sup_k, y))
    tail = sup_k[-5:]
    if np.all(tail > 0):
        rate = -np.polyfit(y[-5:], np.log(tail), 1)[0]
        remainder = float(sup_k[-1] / rate) if rate > 0 else math.inf
    else:
        rate, remainder = math.inf, 0.0
    sup_all = float(np.max(sup_k))
    kercon = {"integral": integral, "remainder": remainder, "decay_rate": float(rate),
              "sup": sup_all, "passed": bool(math.isfinite(integral + remainder) and math.isfinite(sup_all))}
    # |int U phi+ phi- / w| <= ||U||_2 sqrt(x) sup|phi+ phi- / w|
    ratio_sup = float(np.max(np.abs(pm / w)))
    env = {}
    for name, I, U in (("plus", Ip, Up), ("minus", Im, Um)):
        l2 = np.sqrt(_cumtrapz(np.abs(U) ** 2, h))
        bound = l2 * np.sqrt(x) * ratio_sup
        env[name] = {"C": float(l2[-1] * ratio_sup), "passed": bool(np.all(np.abs(I) <= bound * (1 + 1e-9) + 1e-12))}
    return CorrectedFrame(frame, Up, Um, D, eta_plus, eta_minus, bigger, kercon, env)


@dataclass
class CorrectedSolution:
    corrected: CorrectedFrame
    psi_minus: np.ndarray
    dpsi_minus: np.ndarray
    psi_plus: np.ndarray
    dpsi_plus: np.ndarray
    z_minus: tuple
    z_plus: tuple
    i0: int
    bounds: dict

    @property
    def ratio_minus(self):
        return self.psi_minus / self.corrected.eta_minus

    @property
    def ratio_plus(self):
        return self.psi_plus / self.corrected.eta_plus


def _suffix(F, h):
    seg = 0.5 * h * (F[:-1] + F[1:])
    out = np.zeros_like(F)
    out[:-1] = np.cumsum(seg[::-1])[::-1]
    return out


def _prefix(F, h, i0):
    out = np.zeros_like(F)
    out[i0 + 1:] = np.cumsum(0.5 * h * (F[i0:-1] + F[i0 + 1:]))
    return out


def kernel_bound(cf: CorrectedFrame):
    """Right-tail contraction estimate for the two-step z iteration."""
    aw = np.abs(cf.frame.w)
    tp = pt.tail_integral(np.abs(cf.U_plus) ** 2 / aw, cf.frame.grid)
    tm = pt.tail_integral(np.abs(cf.U_minus) ** 2 / aw, cf.frame.grid)
    kap = cf.kercon["integral"] + cf.kercon["remainder"]
    return np.sqrt(tp * tm) * kap


def corrected_asymptotics(V1: PotentialSpec, V2: PotentialSpec, lam, grid: Grid, tol=1e-12, max_iter=80,
                          contraction=pt.CONTRACTION) -> CorrectedSolution:
    """Iterate the diagonalized z-system.

    With u1 = exp(-int U- phi+ phi-/w) z1 and u2 = exp(int U+ phi+ phi-/w) z2
    the system becomes z' = [[0, b12], [b21, 0]] z with
    b12 = -(U+ phi+^2/w) e^D and b21 = +(U- phi-^2/w) e^-D, D = int (U- + U+) phi+ phi-/w.
    psi_- starts from (1, 0) anchored at the horizon; psi_+ takes z2 anchored
    at the horizon and z1 accumulated forward from the anchor.
    """
    if lam >= 0:
        raise ScopeError("the corrected asymptotics are stated for lambda < 0 only")
    frame = build_wkb_frame(V1, V2, lam, grid)
    cf = corrected_frame(frame)
    if not cf.kercon["passed"]:
        raise FrameError(f"kernel diagnostic diverges: {cf.kercon}")
    if not cf.bigger["passed"]:
        raise FrameError("inf |phi+ phi-| is not positive")
    h = grid.step
    p, m, w = frame.phi_plus, frame.phi_minus, frame.w
    D = cf.exponent
    b12 = -(cf.U_plus * p * p / w) * np.exp(D)
    b21 = (cf.U_minus * m * m / w) * np.exp(-D)
    kb = kernel_bound(cf)
    ok = np.nonzero(kb <= contraction)[0]
    i0 = int(ok[0])
    if i0 > grid.n_steps // 2:
        raise pt.NonConvergenceError("kernel bound does not reach the contraction level inside the horizon")
    n = grid.n_steps + 1
    mask = np.arange(n) >= i0
    fp = p * p
    results = {}
    bounds = {}
    for branch in ("minus", "plus"):
        z1 = np.where(mask, 1.0 if branch == "minus" else 0.0, 0.0)
        z2 = np.where(mask, 0.0 if branch == "minus" else 1.0, 0.0)
        t1, t2 = z1.copy(), z2.copy()
        bl = [1.0]
        for _ in range(max_iter):
            g1 = np.where(mask, b12 * t2, 0.0)
            g2 = np.where(mask, b21 * t1, 0.0)
            n2 = -_suffix(g2, h)
            n1 = -_suffix(g1, h) if branch == "minus" else _prefix(g1, h, i0)
            n1[~mask] = 0.0
            n2[~mask] = 0.0
            z1, z2 = z1 + n1, z2 + n2
            t1, t2 = n1, n2
            if branch == "minus":
                b = float(np.max(np.maximum(np.abs(n1), np.abs(n2) * fp * np.exp(D))[mask]))
            else:
                b = float(np.max(np.maximum(np.abs(n1) / (fp * np.exp(D)), np.abs(n2))[mask]))
            bl.append(b)
            if b < tol:
                break
        bounds[branch] = bl
        u1 = np.exp(-cf_int(cf, "minus")) * z1
        u2 = np.exp(cf_int(cf, "plus")) * z2
        psi = np.full(n, np.nan)
        dpsi = np.full(n, np.nan)
        psi[i0:] = u1[i0:] * m[i0:] + u2[i0:] * p[i0:]
        dpsi[i0:] = u1[i0:] * frame.dphi_minus[i0:] + u2[i0:] * frame.dphi_plus[i0:]
        psi, dpsi = _extend(frame, psi, dpsi, i0, lam)
        results[branch] = (psi, dpsi, z1, z2)
    pm_, dpm_, z1m, z2m = results["minus"]
    pp_, dpp_, z1p, z2p = results["plus"]
    return CorrectedSolution(cf, pm_, dpm_, pp_, dpp_, (z1m, z2m), (z1p, z2p), i0, bounds)


def cf_int(cf: CorrectedFrame, which):
    """int_0^x U phi+ phi- / w for U = U+ or U-."""
    f = cf.frame
    U = cf.U_plus if which == "plus" else cf.U_minus
    return _cumtrapz(U * f.phi_plus * f.phi_minus / f.w, f.grid.step)
