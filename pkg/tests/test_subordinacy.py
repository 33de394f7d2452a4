import math

import numpy as np
import pytest

from sublab import model
from sublab import subordinacy as sb
from sublab.propagate import solve_fundamental


def euler_theta():
    # match the x^(1/4) branch at x = 1 to the constant region below it
    k = math.sqrt(3.0) / 4.0
    f0 = math.cos(k) - math.sin(k) / (4 * k)
    d0 = k * math.sin(k) + 0.25 * math.cos(k)
    return math.atan2(f0, -d0) % math.pi


EULER_GRID = model.Grid.continuum(1e4, 0.05)


@pytest.fixture(scope="module")
def euler_report():
    return sb.classify(model.euler(), 0.0, EULER_GRID)


def test_free_discrete_interior_is_L():
    r = sb.classify(model.zero("discrete"), 0.0, model.Grid.discrete(2000))
    assert r.classification == "L"
    assert r.theta_star is None and r.beta_hat is None


def test_free_discrete_outside_spectrum_is_P():
    r = sb.classify(model.zero("discrete"), 3.0, model.Grid.discrete(400))
    rr = (3 - math.sqrt(5)) / 2
    assert r.classification == "P"
    assert r.theta_star == pytest.approx(math.atan2(1.0, -rr) % math.pi, abs=1e-8)
    assert r.beta_hat is None


def test_euler_subordinate(euler_report):
    r = euler_report
    assert r.classification == "S"
    assert r.theta_star == pytest.approx(euler_theta(), abs=2e-3)
    assert r.beta_hat == pytest.approx(0.6, abs=0.05)
    assert not r.regular
    assert r.slope == pytest.approx(0.75, abs=0.03)


def test_euler_dichotomy(euler_report):
    above, below = sb.dichotomy_check(euler_report.pair, euler_report.beta_hat)
    assert above and below


def test_euler_partition(euler_report):
    r = euler_report
    L = r.L_grid
    assert sb.partition_S(r.beta_hat, r.beta_hat + 0.2, sb.beta_ratio_trace(r.pair, 0.8, L)) == "S++"
    assert sb.partition_S(r.beta_hat, r.beta_hat - 0.2, sb.beta_ratio_trace(r.pair, 0.4, L)) == "S--"


def test_beta_refinement_invariance(euler_report):
    fine = sb.classify(model.euler(), 0.0, model.Grid.continuum(1e4, 0.025))
    long = sb.classify(model.euler(), 0.0, model.Grid.continuum(2e4, 0.05))
    assert abs(fine.beta_hat - euler_report.beta_hat) < 0.05
    assert abs(long.beta_hat - euler_report.beta_hat) < 0.05


def test_free_regular_slope():
    fund = solve_fundamental(model.zero(), 1.0, model.Grid.continuum(2000.0, 0.02))
    from sublab.propagate import pair_from_fundamental
    ok, slope = sb.regularity_check(pair_from_fundamental(fund, 0.7))
    assert ok and slope == pytest.approx(0.5, abs=0.01)


def test_misclassification_on_L2_branch():
    r = sb.classify(model.constant(5.0, "discrete"), 0.0, model.Grid.discrete(200))
    with pytest.raises(sb.MisclassificationError):
        sb.beta_estimate(r.pair)


def test_identical_growth_gives_beta_one():
    # two solutions of the free problem with the same L^(1/2) growth
    fund = solve_fundamental(model.zero(), 1.0, model.Grid.continuum(5000.0, 0.02))
    from sublab.propagate import pair_from_fundamental
    b, _ = sb.beta_estimate(pair_from_fundamental(fund, 0.3))
    assert b == pytest.approx(1.0, abs=0.1)


def test_dimension_maps():
    assert sb.dimension_maps(1.0, "A") == 1.0 and sb.dimension_maps(1.0, "B") == 1.0
    assert sb.dimension_maps(0.75, "B") == pytest.approx(0.6)
    with pytest.raises(ValueError):
        sb.dimension_maps(1.5, "A")


def test_csv_row(euler_report, tmp_path):
    p = tmp_path / "r.csv"
    sb.write_reports_csv(p, [euler_report])
    head, row = p.read_text().splitlines()
    assert head == "lambda,classification,theta_star,beta_hat,beta_err,regular,slope"
    assert row.split(",")[1] == "S" and row.split(",")[5] == "false"


def test_ensemble_is_deterministic():
    V = model.decaying_anderson(1.0, 0)
    g = model.Grid.discrete(20000)
    a = sb.ensemble_beta(V, range(6), 0.0, g)
    b = sb.ensemble_beta(V, range(6), 0.0, g, workers=2)
    assert a.beta == b.beta and a.classifications == b.classifications
