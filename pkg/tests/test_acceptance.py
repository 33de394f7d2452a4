"""Acceptance criteria, each at its stated tolerance and runtime limit.

Every test prints one PASS/FAIL line (collected again in the terminal summary).
"""
import math
import time

import numpy as np
import pytest
from scipy.integrate import solve_ivp

import conftest
from sublab import experiments as ex
from sublab import lyapunov as ly
from sublab import model
from sublab import perturb as pt
from sublab import subordinacy as sb
from sublab import wkb
from sublab.propagate import solve_pair, wronskian_array


def verdict(n, ok, text):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {n}: {text}"
    print(line)
    conftest.ACCEPTANCE.append(line)
    return ok


class Clock:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.t0


# ---------------------------------------------------------------- 1

def test_c01_wronskian():
    with Clock() as c:
        V = model.power_law(1.0, 0.5, modulation="sine")
        p = solve_pair(V, 0.7, 0.5, model.Grid.continuum(100.0, 1e-3))
        err = float(np.max(np.abs(wronskian_array(p) - 1.0)))
    ok = err <= 1e-6 and c.elapsed < 5
    verdict(1, ok, f"max|W-1| = {err:.2e} (<= 1e-6), {c.elapsed:.2f} s (< 5 s)")
    assert ok


# ---------------------------------------------------------------- 2

def test_c02_discrete_norm_product():
    rng = np.random.default_rng(20240601)
    bad = 0
    with Clock() as c:
        for _ in range(1000):
            kind = rng.integers(3)
            if kind == 0:
                V = model.decaying_anderson(float(rng.uniform(0, 4)), int(rng.integers(2**31)))
            elif kind == 1:
                V = model.anderson(float(rng.uniform(0, 4)), int(rng.integers(2**31)))
            else:
                V = model.constant(float(rng.uniform(-4, 4)))
            L = int(rng.integers(2, 1001))
            p = solve_pair(V, float(rng.uniform(0, math.pi)), float(rng.uniform(-4, 4)), model.Grid.discrete(L))
            log_prod = float(p.log_norm(float(L), 1) + p.log_norm(float(L), 2))
            bad += not (log_prod >= math.log((L - 1) / 2))
    ok = bad == 0 and c.elapsed < 10
    verdict(2, ok, f"{bad} violations of ||phi1||_L ||phi2||_L >= (L-1)/2 in 1000 draws, {c.elapsed:.2f} s (< 10 s)")
    assert ok


# ---------------------------------------------------------------- 3

def test_c03_euler():
    with Clock() as c:
        r = sb.classify(model.euler(), 0.0, model.Grid.continuum(1e4, 0.05))
    ok = (r.classification == "S" and r.theta_star is not None and abs(r.beta_hat - 0.6) <= 0.05
          and abs(r.slope - 0.75) <= 0.03 and r.regular is False and c.elapsed < 30)
    verdict(3, ok, f"theta*={r.theta_star:.4f}, beta={r.beta_hat:.4f} (0.60 +- 0.05), slope={r.slope:.4f} "
                   f"(0.75 +- 0.03), regular={r.regular}, {c.elapsed:.2f} s (< 30 s)")
    assert ok


# ---------------------------------------------------------------- 4

def test_c04_airy():
    with Clock() as c:
        g = model.Grid.continuum(200.0, 1e-3)
        p = solve_pair(model.linear(-1.0), 0.3, 0.0, g)
        L = np.geomspace(20.0, 200.0, 40)
        slope, _ = sb.loglog_slope(L, p.log_norm(L, 1) + p.log_norm(L, 2))
    ok = abs(slope - 0.5) <= 0.05 and c.elapsed < 10
    verdict(4, ok, f"growth exponent of ||phi1|| ||phi2|| = {slope:.4f} (0.5 +- 0.05), {c.elapsed:.2f} s (< 10 s)")
    assert ok


# ---------------------------------------------------------------- 5 and 6

ANDERSON = model.decaying_anderson(1.0, 0)
N_ANDERSON = 100_000
SEEDS = range(1000)


@pytest.fixture(scope="module")
def power_runs():
    g = model.Grid.discrete(N_ANDERSON)
    out = {}
    t0 = time.perf_counter()
    for E in (0.0, 1.0):
        out[E] = ly.power_lo_estimate(ANDERSON, E, g, ensemble=SEEDS, branches=False)
    out["elapsed"] = time.perf_counter() - t0
    return out


def test_c05_power_exponent(power_runs):
    g0, g1 = power_runs[0.0], power_runs[1.0]
    ok = abs(g0.gamma - 0.125) <= 0.02 and abs(g1.gamma - 1 / 6) <= 0.02 and power_runs["elapsed"] < 300
    verdict(5, ok, f"gamma(E=0) = {g0.gamma:.4f} +- {g0.half_width:.4f} (0.125 +- 0.02), gamma(E=1) = "
                   f"{g1.gamma:.4f} +- {g1.half_width:.4f} (0.167 +- 0.02), {len(SEEDS)} seeds, N=1e5, "
                   f"{power_runs['elapsed']:.1f} s (< 300 s)")
    assert ok


def test_c06_dimension_consistency(power_runs):
    with Clock() as c:
        e = sb.ensemble_beta(ANDERSON, SEEDS, 0.0, model.Grid.discrete(N_ANDERSON))
    gamma = power_runs[0.0].gamma
    b_from_gamma = sb.dimension_maps(1.0 - 2.0 * gamma, "B")
    gap = abs(b_from_gamma - e.beta)
    ok = abs(e.beta - 0.6) <= 0.05 and gap <= 0.05 and c.elapsed + power_runs["elapsed"] < 300
    verdict(6, ok, f"subordinacy beta = {e.beta:.4f} +- {e.half_width:.4f} over {e.n_used}/{e.n_total} S seeds "
                   f"(0.60 +- 0.05); B(1-2 gamma) = {b_from_gamma:.4f}, gap {gap:.4f} (<= 0.05), "
                   f"{c.elapsed:.1f} s")
    assert ok


# ---------------------------------------------------------------- 7

def test_c07_series_vs_oracle():
    with Clock() as c:
        H = 10.0
        g = model.Grid.continuum(H, 1e-3)
        xs = np.linspace(0, 5, 401)
        vals = 0.1 * np.sin(np.pi * xs / 5) ** 2
        W = model.compact_support(tuple(vals), 5.0, kind="continuum")
        pair = sb.classify(model.zero(), -1.0, g).pair
        A = pt.build_A(W, pair)
        wp = pt.build_G(A, *pt.exponential_weights(g, 1.0, 0.05))
        Wf = lambda x: np.interp(x, xs, vals, right=0.0)
        rhs = lambda x, y: [y[1], (Wf(x) + 1.0) * y[0]]
        errs, checks = [], []
        for branch in ("u_minus", "u_plus"):
            s = pt.series_solve(A, wp, branch)
            rc = pt.reconstruct_psi(s, pair, W)
            span, y0 = ((H, 0.0), [rc.psi[-1], rc.dpsi[-1]]) if branch == "u_minus" else \
                ((0.0, H), [rc.psi[0], rc.dpsi[0]])
            o = solve_ivp(rhs, span, y0, method="DOP853", rtol=1e-13, atol=1e-300, dense_output=True,
                          max_step=1e-2).sol(g.points)[0]
            errs.append(float(np.max(np.abs(rc.psi - o) / np.abs(o))))
            checks.append(s.checks["per_iteration_bound"] and s.checks["contraction"])
        intG = float(wp.tail[s.i0])
    ok = max(errs) <= 1e-6 and all(checks) and intG <= 1 / 3 and c.elapsed < 10
    verdict(7, ok, f"max rel err {max(errs):.2e} (<= 1e-6), int G = {intG:.4f} (<= 1/3), "
                   f"per-iteration bounds {all(checks)}, {c.elapsed:.2f} s (< 10 s)")
    assert ok


# ---------------------------------------------------------------- 8

def test_c08_barrier():
    with Clock() as c:
        res = ly.stability_experiment_lyapunov(model.constant(5.0), model.exp_weighted(1.0, 1.0, kind="discrete"),
                                               0.0, model.Grid.discrete(2000), "exp", eps=0.5)
    exact = math.log((5 + math.sqrt(21)) / 2)
    d = abs(res.before.gamma - res.after.gamma)
    ok = d <= 0.01 and abs(res.before.gamma - exact) <= 0.01 and c.elapsed < 10
    verdict(8, ok, f"gamma0 = {res.before.gamma:.6f}, gamma1 = {res.after.gamma:.6f}, exact {exact:.6f}, "
                   f"|dgamma| = {d:.1e} (<= 0.01), {c.elapsed:.2f} s (< 10 s)")
    assert ok


# ---------------------------------------------------------------- 9

def test_c09_beta_stability():
    with Clock() as c:
        W = model.power_law(1.0, 2.0, kind="discrete", offset=0.0)
        v = ex.run_beta_stability(ANDERSON, W, [0.0], model.Grid.discrete(N_ANDERSON), 2.0,
                                  seeds=range(200), beta_declared=0.6)
    s = v.summary[0.0]
    b_after, hw = s["beta_after"]
    dev = s["ratio_deviation_max"]
    ok = abs(b_after - 0.6) <= 0.05 and dev <= 0.02 and c.elapsed < 600
    verdict(9, ok, f"beta after = {b_after:.4f} +- {hw:.4f} (0.60 +- 0.05), before = {s['beta_before'][0]:.4f}, "
                   f"max ratio-trace deviation {dev:.4f} (<= 0.02), {s['n_used']} seeds used, "
                   f"{c.elapsed:.1f} s (< 600 s)")
    assert ok


# ---------------------------------------------------------------- 10

def test_c10_wkb():
    with Clock() as c:
        H = 100.0
        g = model.Grid.continuum(H, 0.01)
        fr = wkb.build_wkb_frame(model.exp_weighted(1.0, 1.0), model.power_law(1.0, 0.5), -1.0, g)
        sol = wkb.wkb_solve(fr)
        rhs = lambda x, y: [y[1], (math.exp(-x) + (1 + x) ** -0.5 + 1.0) * y[0]]
        i50 = g.index(50.0)
        om = solve_ivp(rhs, (H, 0), [sol.psi_minus[-1], sol.dpsi_minus[-1]], method="DOP853", rtol=1e-13,
                       atol=1e-300, dense_output=True).sol(g.points)[0]
        i0 = sol.series["u_plus"].i0
        op = solve_ivp(rhs, (g.points[i0], H), [sol.psi_plus[i0], sol.dpsi_plus[i0]], method="DOP853",
                       rtol=1e-13, atol=1e-300, dense_output=True).sol(g.points[i0:])[0]
        err_m = abs(sol.ratio_minus[i50] - om[i50] / fr.phi_minus[i50])
        err_p = abs(sol.ratio_plus[i50] - op[i50 - i0] / fr.phi_plus[i50])

        g2 = model.Grid.continuum(200.0, 0.01)
        cs = wkb.corrected_asymptotics(model.power_law(1.0, 0.6, modulation="sine"), model.zero(), -1.0, g2)
        r = np.abs(cs.ratio_minus)
        tail = r[g2.index(100.0):]
        dev_b = float(np.max(np.abs(tail - 1.0)))
    ok_a = err_m <= 1e-3 and err_p <= 1e-3
    ok_b = dev_b <= 5e-3
    ok = ok_a and ok_b and c.elapsed < 30
    verdict(10, ok, f"(a) psi-/phi- at 50: {sol.ratio_minus[i50]:.7f} vs oracle {om[i50] / fr.phi_minus[i50]:.7f}, "
                    f"psi+/phi+ err {err_p:.1e} (<= 1e-3); (b) max |psi-/eta- - 1| on [100, 200] = {dev_b:.4f} "
                    f"(<= 5e-3), at 200: {r[-1]:.5f}; {c.elapsed:.2f} s (< 30 s)")
    assert ok


# ---------------------------------------------------------------- 11

def test_c11_property_suite():
    rng = np.random.default_rng(11)
    with Clock() as c:
        g = model.Grid.discrete(2000)
        pair = solve_pair(model.decaying_anderson(1.0, 5), 0.4, 0.2, g)
        A = pt.build_A(model.power_law(1.0, 1.5, kind="discrete", modulation="alternating"), pair)
        wp = pt.build_G(A, *pt.power_lo_weights(g, 0.15, 0.02))
        n = 100_000
        idx = rng.integers(0, g.n_steps + 1, n)
        om = rng.normal(size=(n, 2)) * rng.lognormal(0, 4, size=(n, 2))
        a11, a12, a21, a22 = A.a11[idx], A.a12[idx], A.a21[idx], A.a22[idx]
        y1 = a11 * om[:, 0] + a12 * om[:, 1]
        y2 = a21 * om[:, 0] + a22 * om[:, 1]
        fp, fm, G = wp.f_plus[idx], wp.f_minus[idx], wp.G[idx]
        viol = 0
        for sign in "+-":
            if sign == "+":
                lhs = np.maximum(np.abs(y1), np.abs(y2) * fp)
                rhs = np.maximum(np.abs(om[:, 0]), np.abs(om[:, 1]) * fp)
            else:
                lhs = np.maximum(fm * np.abs(y1), np.abs(y2))
                rhs = np.maximum(fm * np.abs(om[:, 0]), np.abs(om[:, 1]))
            viol += int(np.sum(lhs > G * rhs * (1 + 1e-12)))
        a = rng.uniform(0, 1, 10_000)
        inv = max(max(abs(sb.dimension_maps(sb.dimension_maps(t, "B"), "A") - t),
                      abs(sb.dimension_maps(sb.dimension_maps(t, "A"), "B") - t)) for t in a)
        scale = np.abs(A.a12 * A.a21) + 1e-300
        tr = float(np.max(np.abs(A.trace) / np.sqrt(scale)))
        det = float(np.max(np.abs(A.det) / scale))
    ok = viol == 0 and inv <= 1e-12 and tr <= 1e-12 and det <= 1e-12 and c.elapsed < 10
    verdict(11, ok, f"{viol} weighted-norm violations in 1e5 samples, A/B identity err {inv:.1e}, trace {tr:.1e}, "
                    f"det {det:.1e} (<= 1e-12), {c.elapsed:.2f} s (< 10 s)")
    assert ok
