import csv
import json
import math
import os

import numpy as np
import pytest

from conftest import CONFIGS
from sublab import cli, config


def cfg(name):
    return os.path.join(CONFIGS, name)


def run(tmp_path, *argv):
    out = tmp_path / "out"
    code = cli.dispatch([*argv, "--out", str(out)])
    return code, out


def write(tmp_path, text, name="c.toml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_solve_free(tmp_path, capsys):
    code, out = run(tmp_path, "solve", "--potential", cfg("free.toml"), "--lambda", "1.0",
                    "--theta", "1.5708", "--horizon", "20")
    assert code == 0
    rows = list(csv.DictReader(open(out / "solution.csv")))
    x = np.array([float(r["x"]) for r in rows])
    p1 = np.array([float(r["phi1"]) for r in rows])
    p2 = np.array([float(r["phi2"]) for r in rows])
    d = 1.5708 - math.pi / 2
    assert np.max(np.abs(p1 - np.cos(x - d))) < 1e-8
    assert np.max(np.abs(p2 - np.sin(x - d))) < 1e-8
    assert "wronskian_err" in capsys.readouterr().out
    m = json.load(open(out / "manifest.json"))
    assert m["subcommand"] == "solve" and m["seed"] == 0
    assert m["outputs"] == ["solution.csv"] and m["backend"] in ("compiled", "python")
    assert m["config_sha256"] and "numpy" in m["versions"]


def test_full_precision_csv(tmp_path):
    code, out = run(tmp_path, "solve", "--potential", cfg("free.toml"), "--lambda", "2.0",
                    "--theta", "0.3", "--horizon", "1")
    row = open(out / "solution.csv").read().splitlines()[5].split(",")
    assert any(len(v.replace("-", "").replace(".", "").lstrip("0").split("e")[0]) >= 15 for v in row[1:])


def test_byte_identical_reruns(tmp_path):
    args = ["experiment", "--recipe", cfg("point.toml")]
    a = tmp_path / "a"
    b = tmp_path / "b"
    assert cli.dispatch(args + ["--out", str(a)]) == 0
    assert cli.dispatch(args + ["--out", str(b)]) == 0
    for name in os.listdir(a):
        if name == "manifest.json":
            ma, mb = json.load(open(a / name)), json.load(open(b / name))
            ma.pop("argv"), mb.pop("argv")
            assert ma == mb
        else:
            assert (a / name).read_bytes() == (b / name).read_bytes()


def test_malformed_toml_exit_2(tmp_path, capsys):
    p = write(tmp_path, '[potential]\nrule = "zero"\nkind = continuum\n')
    code, _ = run(tmp_path, "classify", "--potential", p, "--lambda", "1")
    assert code == 2
    err = capsys.readouterr().err
    assert ":3:" in err


def test_unknown_rule_points_at_key(tmp_path, capsys):
    p = write(tmp_path, '[grid]\nhorizon = 5\n\n[potential]\nkind = "discrete"\nrule = "quartic"\n')
    code, _ = run(tmp_path, "classify", "--potential", p, "--lambda", "1")
    assert code == 2
    assert ":6:1:" in capsys.readouterr().err


def test_stray_parameter_points_at_key(tmp_path, capsys):
    p = write(tmp_path, '[grid]\nhorizon = 5\n\n[potential]\nkind = "discrete"\nrule = "constant"\n  c = 1.0\n'
                        '  cc = 2.0\n')
    assert run(tmp_path, "classify", "--potential", p, "--lambda", "1")[0] == 2
    assert ":8:3:" in capsys.readouterr().err


def test_missing_config_exit_2(tmp_path):
    assert run(tmp_path, "classify", "--potential", str(tmp_path / "nope.toml"), "--lambda", "1")[0] == 2


def test_hypothesis_failure_exit_3(tmp_path):
    p = write(tmp_path, '[scenario]\nlambda = 0.0\n[V1]\nrule = "zero"\n[V2]\nrule = "zero"\n'
                        '[grid]\nhorizon = 10.0\nstep = 0.01\n')
    code, out = run(tmp_path, "wkb", "--config", p)
    assert code == 3
    assert json.load(open(out / "manifest.json"))["exit_code"] == 3


def test_violated_exit_4(tmp_path):
    code, out = run(tmp_path, "experiment", "--recipe", cfg("barrier.toml"), "--tol", "gamma=1e-300")
    assert code == 4
    assert "violated" in (out / "verdicts.csv").read_text()


def test_experiment_beta_stability_exit_0(tmp_path, capsys):
    code, out = run(tmp_path, "experiment", "--recipe", cfg("beta_stability.toml"), "--horizon", "20000")
    assert code == 0
    assert "verdict=confirmed" in capsys.readouterr().out
    m = json.load(open(out / "manifest.json"))
    assert m["defaults"]["tol.beta"] == 0.05
    assert m["config"]["grid"]["horizon"] == 100000
    assert os.path.exists(out / "detail.json")


def test_beta_summary_line(tmp_path, capsys):
    code, _ = run(tmp_path, "beta", "--potential", cfg("anderson.toml"), "--energy", "0", "--ensemble", "8",
                  "--horizon", "20000")
    assert code == 0
    line = capsys.readouterr().out.strip().splitlines()[-1]
    assert line.startswith("beta=") and "±" in line


def test_beta_at_deterministic_euler(tmp_path, capsys):
    p = write(tmp_path, '[potential]\nrule = "euler"\nc = -0.1875\nx_cut = 1.0\n[grid]\nhorizon = 10000.0\n'
                        'step = 0.05\n')
    assert run(tmp_path, "beta", "--potential", p, "--energy", "0")[0] == 0
    assert capsys.readouterr().out.startswith("beta=0.60±")


def test_lyapunov_and_series_and_wkb(tmp_path, capsys):
    assert run(tmp_path, "lyapunov", "--potential", cfg("anderson.toml"), "--energy", "0", "--mode", "power",
               "--ensemble", "4", "--horizon", "5000")[0] == 0
    assert run(tmp_path, "series", "--config", cfg("series.toml"))[0] == 0
    assert run(tmp_path, "wkb", "--config", cfg("wkb.toml"))[0] == 0
    assert run(tmp_path, "wkb", "--config", cfg("wkb_corrected.toml"))[0] == 0
    out = capsys.readouterr().out
    assert "gamma=" in out and "checks=ok" in out and "wkb corrected" in out


def test_backend_flag(tmp_path):
    from sublab import kernels
    prev = kernels.backend_name()
    try:
        code, out = run(tmp_path, "solve", "--potential", cfg("free.toml"), "--lambda", "1", "--theta", "0",
                        "--horizon", "2", "--backend", "python")
        assert code == 0 and json.load(open(out / "manifest.json"))["backend"] == "python"
    finally:
        kernels.use_backend(prev)


def test_bad_tol_syntax():
    with pytest.raises(SystemExit):
        cli.dispatch(["experiment", "--recipe", cfg("point.toml"), "--tol", "beta"])


def test_config_locate():
    text = "a = 1\n[grid]\n  horizon = 3\n[x]\nhorizon = 4\n"
    assert config.locate(text, "horizon", "grid") == (3, 3)
    assert config.locate(text, "horizon", "x") == (5, 1)
    assert config.locate(text, "a") == (1, 1)


def test_every_shipped_config_parses():
    for name in os.listdir(CONFIGS):
        data, _ = config.load(cfg(name))
        for key in ("potential", "perturbation", "V1", "V2"):
            if key in data:
                config.potential_from(data[key], name=key, perturbation=key == "perturbation")


def test_turnaround_ladder_recipe(tmp_path):
    code, out = run(tmp_path, "experiment", "--recipe", cfg("turnaround.toml"))
    assert code == 0
    d = json.load(open(out / "detail.json"))
    assert d["summary"]["eta_confirmed_range"] == [0.5, 4.0]
