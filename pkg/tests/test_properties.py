import math

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from sublab import kernels, model
from sublab import perturb as pt
from sublab import subordinacy as sb
from sublab.propagate import solve_pair

FAST = settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])
SLOW = settings(max_examples=10, deadline=None, suppress_health_check=[HealthCheck.too_slow])

unit = st.floats(0.0, 1.0)
angle = st.floats(0.0, math.pi, exclude_max=True)
seed = st.integers(0, 2**31 - 1)


def random_A(sd, n=200):
    V = model.decaying_anderson(1.0, sd)
    g = model.Grid.discrete(n)
    pair = solve_pair(V, 0.7, 0.3, g)
    W = model.power_law(1.0, 1.5, kind="discrete", modulation="alternating")
    return pt.build_A(W, pair), g


@FAST
@given(unit)
def test_dimension_maps_inverse(a):
    assert abs(sb.dimension_maps(sb.dimension_maps(a, "B"), "A") - a) <= 1e-12
    assert abs(sb.dimension_maps(sb.dimension_maps(a, "A"), "B") - a) <= 1e-12


@FAST
@given(unit, unit)
def test_dimension_maps_monotone(a, b):
    if a < b:
        assert sb.dimension_maps(a, "A") < sb.dimension_maps(b, "A")
        assert sb.dimension_maps(a, "B") < sb.dimension_maps(b, "B")


@FAST
@given(seed)
def test_A_trace_det(sd):
    A, _ = random_A(sd)
    scale = np.abs(A.a12 * A.a21) + 1e-300
    assert np.max(np.abs(A.trace) / np.sqrt(scale)) <= 1e-12
    assert np.max(np.abs(A.det) / scale) <= 1e-12


@FAST
@given(seed, st.floats(0.05, 2.0), st.floats(0.01, 0.9))
def test_weighted_norm_bound(sd, gamma, frac):
    A, g = random_A(sd)
    fp, fm = pt.power_lo_weights(g, gamma, frac * gamma)
    wp = pt.build_G(A, fp, fm)
    rng = np.random.default_rng(sd)
    for i in rng.integers(0, g.n_steps + 1, 25):
        a = A.at(i)
        for om in rng.normal(size=(40, 2)) * rng.lognormal(0, 4, size=(40, 2)):
            for sgn in "+-":
                lhs = pt.weighted_norm(a @ om, i, wp, sgn)
                assert lhs <= wp.G[i] * pt.weighted_norm(om, i, wp, sgn) * (1 + 1e-12)


@FAST
@given(st.floats(0.01, 3.0), st.floats(0.001, 0.99), st.sampled_from(["exp", "power_lo", "power"]))
def test_weight_generators(gamma, frac, which):
    g = model.Grid.continuum(50.0, 0.1) if which != "power" else model.Grid.discrete(500)
    if which == "exp":
        fp, fm = pt.exponential_weights(g, gamma, frac * gamma)
    elif which == "power_lo":
        fp, fm = pt.power_lo_weights(g, gamma, frac * gamma)
    else:
        fp, fm = pt.power_weights(g, gamma)
    assert np.all(np.diff(fp) >= 0) and np.all(np.diff(fm) <= 0)
    assert np.all(fp * fm >= 1.0 - 1e-12)
    pt.check_weights(fp, fm)


@SLOW
@given(seed, angle, st.floats(-3.0, 3.0), st.integers(2, 600), st.floats(0.0, 3.0))
def test_discrete_norm_product(sd, theta, lam, L, coupling):
    V = model.decaying_anderson(coupling, sd)
    p = solve_pair(V, theta, lam, model.Grid.discrete(600))
    assert math.exp(float(p.log_norm(float(L), 1) + p.log_norm(float(L), 2))) >= (L - 1) / 2 * (1 - 1e-12)


@FAST
@given(seed, st.integers(1, 10**6), st.integers(1, 500))
def test_random_draws_are_counter_based(sd, start, count):
    whole = kernels.hash_uniform(sd, 1, start + count - 1)
    part = kernels.hash_uniform(sd, start, count)
    assert np.array_equal(whole[start - 1:], part)


@FAST
@given(seed)
def test_backends_agree_on_random_chains(sd):
    rng = np.random.default_rng(sd)
    coef = rng.uniform(-6, 6, 3000)
    init = np.array([1.0, 0.0, 0.0, 1.0])
    prev = kernels.use_backend("python")
    try:
        a = kernels.discrete_chain(coef, init)
        kernels.use_backend("compiled")
        b = kernels.discrete_chain(coef, init)
    finally:
        kernels.use_backend(prev)
    for x, y in zip(a, b):
        assert np.allclose(x, y, rtol=1e-12, atol=0)


@FAST
@given(st.floats(0.01, 5.0), st.floats(0.1, 3.0), st.sampled_from(["none", "alternating", "sine"]))
def test_power_law_envelope(C, eta, mod):
    W = model.power_law(C, eta, modulation=mod)
    x = np.linspace(0, 1000, 2001)
    assert np.all(np.abs(model.evaluate(W, x)) * (1 + x) ** eta <= C * (1 + 1e-12))


@SLOW
@given(seed, angle, st.floats(-2.0, 2.0))
def test_wronskian_discrete(sd, theta, lam):
    from sublab.propagate import wronskian_array
    p = solve_pair(model.decaying_anderson(1.0, sd), theta, lam, model.Grid.discrete(3000))
    # W is a difference of products; near the band edges both solutions grow and the
    # floating-point error scales with |phi1||phi2|, so measure it against that scale
    scale = (np.abs(p.phi1) + np.abs(p.dphi1)) * (np.abs(p.phi2) + np.abs(p.dphi2)) * np.exp(p.ls1 + p.ls2)
    err = np.abs(wronskian_array(p) - 1.0) / np.maximum(scale, 1.0)
    assert np.max(err) < 1e-10


@pytest.mark.xfail(strict=True, reason=(
    "adding 1/(1+x)^2 to -3/(16 x^2) changes the inverse-square coefficient to 13/16, so the indicial "
    "exponents and hence beta change; the claimed invariance cannot hold for this pair"))
def test_euler_beta_invariance():
    from sublab.experiments import beta_series
    g = model.Grid.continuum(1e4, 0.05)
    V0, W = model.euler(), model.power_law(1.0, 2.0)
    before = sb.classify(V0, 0.0, g)
    after = sb.classify(model.sum_potential(V0, W), 0.0, g)
    assert before.beta_hat == pytest.approx(0.6, abs=0.05)
    assert after.classification == "S"
    assert abs(after.beta_hat - before.beta_hat) <= 0.05
    tr = beta_series(V0, W, 0.0, g, before.beta_hat, 2.0)
    for branch in ("u_minus", "u_plus"):
        dev = np.abs(tr[branch] - 1.0)
        assert np.all(np.diff(dev) <= 1e-12)
