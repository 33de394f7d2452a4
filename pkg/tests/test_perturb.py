import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from sublab import model
from sublab import perturb as pt
from sublab.propagate import solve_pair
from sublab.subordinacy import classify

H = 10.0
GRID = model.Grid.continuum(H, 1e-3)
BUMP_X = np.linspace(0.0, 5.0, 401)
BUMP = 0.1 * np.sin(np.pi * BUMP_X / 5.0) ** 2


def bump():
    return model.compact_support(tuple(BUMP), 5.0, kind="continuum")


@pytest.fixture(scope="module")
def free_pair():
    return classify(model.zero(), -1.0, GRID).pair


@pytest.fixture(scope="module")
def bump_weights(free_pair):
    A = pt.build_A(bump(), free_pair)
    fp, fm = pt.exponential_weights(GRID, 1.0, 0.05)
    return A, pt.build_G(A, fp, fm)


def oracle(psi0, dpsi0, x_start, x_end):
    Wf = lambda x: np.interp(x, BUMP_X, BUMP, right=0.0)
    sol = solve_ivp(lambda x, y: [y[1], (Wf(x) + 1.0) * y[0]], (x_start, x_end), [psi0, dpsi0],
                    method="DOP853", rtol=1e-13, atol=1e-300, dense_output=True, max_step=1e-2)
    return sol.sol(GRID.points)[0]


def test_free_frame_is_exact(free_pair):
    f1, _ = free_pair.values(1)
    f2, _ = free_pair.values(2)
    x = GRID.points
    # phi_- is the decaying exponential; the Wronskian fixes phi_+
    assert np.max(np.abs(f1 / f1[0] - np.exp(-x))) < 1e-9
    w = f1 * np.gradient(f2, x) - np.gradient(f1, x) * f2
    assert np.median(np.abs(w - 1.0)) < 1e-5


def test_A_invariants(bump_weights):
    A, _ = bump_weights
    assert np.max(np.abs(A.trace)) < 1e-12 * np.max(np.abs(A.a12))
    assert np.max(np.abs(A.det)) < 1e-12 * np.max(np.abs(A.a12 * A.a21)) + 1e-300
    zero = pt.build_A(model.zero(), classify(model.zero(), -1.0, GRID).pair)
    assert not np.any([zero.a11, zero.a12, zero.a21, zero.a22])


def test_weights_shape(bump_weights):
    _, wp = bump_weights
    assert np.all(np.diff(wp.f_plus) >= 0) and np.all(np.diff(wp.f_minus) <= 1e-300)
    assert np.all(wp.f_plus * wp.f_minus >= 1.0)
    assert np.all(wp.G >= 0)
    assert wp.tail[0] == pytest.approx(0.2862, abs=5e-4)


def test_bad_weights_rejected():
    g = model.Grid.discrete(10)
    with pytest.raises(pt.WeightError):
        pt.check_weights(np.ones(11), 0.5 * np.ones(11))
    with pytest.raises(pt.WeightError):
        pt.check_weights(np.linspace(2, 1, 11), np.ones(11))
    with pytest.raises(pt.WeightError):
        pt.exponential_weights(g, 0.1, 0.2)


@pytest.mark.parametrize("branch", ["u_minus", "u_plus"])
def test_series_matches_oracle(free_pair, bump_weights, branch):
    A, wp = bump_weights
    s = pt.series_solve(A, wp, branch)
    assert all(s.checks.values()), s.checks
    rc = pt.reconstruct_psi(s, free_pair, bump())
    if branch == "u_minus":
        ref = oracle(rc.psi[-1], rc.dpsi[-1], H, 0.0)
    else:
        ref = oracle(rc.psi[0], rc.dpsi[0], 0.0, H)
    assert np.max(np.abs(rc.psi - ref) / np.abs(ref)) < 1e-6
    assert s.tail_x0 <= 1 / 3


def test_series_ratios_bounded_by_tail(bump_weights):
    A, wp = bump_weights
    s = pt.series_solve(A, wp, "u_minus")
    assert np.all(np.asarray(s.ratios) <= s.tail_x0 + 1e-10)


def test_minus_branch_limits(bump_weights):
    A, wp = bump_weights
    s = pt.series_solve(A, wp, "u_minus")
    assert abs(s.u1[-1] - 1.0) < 1e-12
    assert abs(s.u2[-1] * wp.f_plus[-1]) < 1e-12


def test_horizon_doubling(free_pair):
    vals = []
    for h in (H, 2 * H):
        g = model.Grid.continuum(h, 1e-3)
        pair = classify(model.zero(), -1.0, g).pair
        A = pt.build_A(bump(), pair)
        wp = pt.build_G(A, *pt.exponential_weights(g, 1.0, 0.05))
        s = pt.series_solve(A, wp, "u_minus")
        vals.append(s.u1[g.index(4.0)])
    assert abs(vals[0] - vals[1]) < 1e-6


def test_anchor_past_half_horizon_is_an_error():
    g = model.Grid.continuum(4.0, 0.01)
    pair = classify(model.zero(), -1.0, g).pair
    W = model.power_law(50.0, 0.0)
    A = pt.build_A(W, pair)
    wp = pt.build_G(A, *pt.exponential_weights(g, 1.0, 0.05))
    with pytest.raises(pt.NonConvergenceError):
        pt.series_solve(A, wp, "u_minus")


def test_discrete_reconstruction_is_exact():
    g = model.Grid.discrete(60)
    V0 = model.constant(5.0)
    W = model.exp_weighted(1.0, 1.0, kind="discrete")
    pair = classify(V0, 0.0, g).pair
    A = pt.build_A(W, pair)
    gamma = math.log((5 + math.sqrt(21)) / 2)
    wp = pt.build_G(A, *pt.exponential_weights(g, gamma, 0.1))
    s = pt.series_solve(A, wp, "u_minus")
    rc = pt.reconstruct_psi(s, pair, W)
    psi = rc.psi
    n = np.arange(1, 60, dtype=float)
    v = 5.0 + np.exp(-n)
    res = psi[2:] + psi[:-2] + v * psi[1:-1]
    assert np.max(np.abs(res) / (1 + np.abs(psi[1:-1]))) < 1e-10


def test_power_weight_choice():
    c = pt.choose_weights_power(0.6, 2.0)
    assert c.feasible and c.mu_plus == pytest.approx(5 / 6)
    assert c.window == pytest.approx((2 / 3, 1.0))
    with pytest.raises(pt.InfeasibleError) as exc:
        pt.choose_weights_power(0.6, 1.5)
    assert exc.value.payload["needed"] == pytest.approx(5 / 3)


def test_dimension_units_bound():
    d = pt.dimension_feasibility(0.75, 2.0)
    assert d["needed"] == pytest.approx(5 / 3) and d["feasible"]


def test_weighted_norm_bound_samples(bump_weights):
    A, wp = bump_weights
    rng = np.random.default_rng(1)
    for i in rng.integers(0, GRID.n_steps, 100):
        a = A.at(i)
        for om in rng.normal(size=(30, 2)) * rng.lognormal(0, 3, size=(30, 1)):
            Aw = a @ om
            for sgn in "+-":
                assert pt.weighted_norm(Aw, i, wp, sgn) <= wp.G[i] * pt.weighted_norm(om, i, wp, sgn) * (1 + 1e-12)


def test_levinson_bounded_rescaling(free_pair, bump_weights):
    A, wp = bump_weights
    red = pt.levinson_reduce(A, wp.f_plus)
    assert red.bounded_flag
    y1, y2 = pt.levinson_solve(A, wp.f_plus, 0)
    s = pt.series_solve(A, wp, "u_minus")
    assert np.max(np.abs(y1 - s.u1)) < 1e-9


def test_phi_product_and_growth_windows():
    grid = model.Grid.continuum(200.0, 0.01)
    pair = solve_pair(model.zero(), 0.0, 1.0, grid)
    Q = (1.0 + grid.points) ** -2.0
    d = pt.phi_product_diagnostic(Q, pair)
    assert d["schwarz_ok"] and d["integrable"]
    assert d["a"] == pytest.approx(2.0, abs=1e-6) and d["b"] == pytest.approx(1.0, abs=0.05)
    assert d["integral"] <= d["bound"]
    w = pt.norm_growth_windows(pair, 1.0)
    assert w["minus_ok"] and w["plus_ok"]
