"""Command-line front end.

Every run writes ``manifest.json`` (inputs, versions, seed, defaults) next to
its CSV outputs and prints one summary line per task.  Exit codes: 0 ok,
2 malformed config, 3 numerical hypothesis failure, 4 violated verdict.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import platform
import sys

import numpy as np

from . import __version__, config, kernels, model

EXIT_OK, EXIT_CONFIG, EXIT_HYPOTHESIS, EXIT_VIOLATED = 0, 2, 3, 4


class _Run:
    def __init__(self, args, cfg_path=None):
        self.args = args
        self.out = args.out
        self.outputs = []
        self.cfg_path = cfg_path
        self.data, self.text = ({}, "") if cfg_path is None else config.load(cfg_path)
        self.defaults = {}

    def path(self, name):
        os.makedirs(self.out, exist_ok=True)
        p = os.path.join(self.out, name)
        self.outputs.append(name)
        return p

    def default(self, key, value):
        self.defaults[key] = value
        return value

    def manifest(self, extra=None):
        m = {
            "subcommand": self.args.command,
            "argv": sys.argv[1:] if self.args.argv is None else self.args.argv,
            "config_path": self.cfg_path,
            "config": self.data,
            "config_sha256": config.RunConfig(self.args.command, self.cfg_path, self.data, self.text).sha256
            if self.cfg_path else None,
            "seed": self.args.seed,
            "workers": self.args.workers,
            "defaults": self.defaults,
            "tolerances": dict(self.args.tol or []),
            "versions": {"sublab": __version__, "numpy": np.__version__,
                         "python": platform.python_version()},
            "backend": kernels.backend_name(),
            "outputs": sorted(self.outputs),
        }
        if extra:
            m.update(extra)
        os.makedirs(self.out, exist_ok=True)
        with open(os.path.join(self.out, "manifest.json"), "w") as fh:
            json.dump(_clean(m), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _clean(v):
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return v.item()
    return v


def _tol_pair(s):
    if "=" not in s:
        raise argparse.ArgumentTypeError("tolerance overrides look like NAME=VALUE")
    k, v = s.split("=", 1)
    return k.strip(), float(v)


def _potential(run, key="potential", perturbation=False, required=True):
    if key not in run.data:
        if not required:
            return None
        raise config.ConfigError(f"missing [{key}] table", run.cfg_path)
    return config.potential_from(run.data[key], run.text, run.cfg_path, key, perturbation)


def _grid(run, V, horizon=None, step=None):
    ov = {"horizon": horizon if horizon is not None else run.args.horizon,
          "step": step if step is not None else run.args.step}
    if "grid" not in run.data and ov["horizon"] is None:
        raise config.ConfigError("no horizon: give [grid] horizon or --horizon", run.cfg_path)
    if "step" not in run.data.get("grid", {}) and ov["step"] is None and V.kind == "continuum":
        run.default("step", 0.01)
    return config.grid_from(run.data, V.kind, run.text, run.cfg_path, ov)


def _seeds(run, n):
    return list(range(run.args.seed, run.args.seed + int(n)))


def _fmt(v, nd=6):
    return "nan" if v is None or (isinstance(v, float) and not math.isfinite(v)) else f"{v:.{nd}g}"


# --------------------------------------------------------------------- commands

def cmd_solve(run):
    from .propagate import solve_pair, wronskian_array
    V = _potential(run)
    grid = _grid(run, V)
    pair = solve_pair(V, run.args.theta, run.args.lam, grid)
    pair.to_csv(run.path("solution.csv"))
    werr = float(np.max(np.abs(wronskian_array(pair) - 1.0)))
    print(f"solve lambda={run.args.lam} theta={run.args.theta} horizon={grid.horizon} wronskian_err={werr:.3g}")
    return EXIT_OK, {"wronskian_error": werr}


def cmd_classify(run):
    from .subordinacy import classify, write_reports_csv
    V = _potential(run)
    grid = _grid(run, V)
    lams = run.args.lam if run.args.lam else run.data.get("run", {}).get("lambdas")
    if not lams:
        raise config.ConfigError("no energies: give --lambda or [run] lambdas", run.cfg_path)
    reports = [classify(V, float(l), grid) for l in lams]
    write_reports_csv(run.path("classify.csv"), reports)
    for r in reports:
        print(f"lambda={r.lam:g} class={r.classification} beta={_fmt(r.beta_hat, 4)} regular={r.regular}")
    return EXIT_OK, {}


def cmd_beta(run):
    from .model import is_random
    from .subordinacy import classify_fundamental, ensemble_beta, write_reports_csv
    from .propagate import solve_fundamental
    V = _potential(run)
    grid = _grid(run, V)
    E = run.args.energy
    if is_random(V):
        n = run.args.ensemble or run.default("ensemble", 200)
        res = ensemble_beta(V, _seeds(run, n), E, grid, workers=run.args.workers)
        write_reports_csv(run.path("beta_seeds.csv"), res.per_seed)
        print(f"beta={res.beta:.2f}±{res.half_width:.2f} (S seeds {res.n_used}/{res.n_total})")
        return EXIT_OK, {"beta": res.beta, "half_width": res.half_width, "counts": res.classifications}
    r = classify_fundamental(solve_fundamental(V, E, grid))
    write_reports_csv(run.path("beta.csv"), [r])
    if r.beta_hat is None:
        print(f"beta=undefined class={r.classification}")
        return EXIT_HYPOTHESIS, {"classification": r.classification}
    print(f"beta={r.beta_hat:.2f}±{r.beta_err:.2f} class={r.classification}")
    return EXIT_OK, {"beta": r.beta_hat}


def cmd_lyapunov(run):
    from .lyapunov import lyapunov_estimate, power_lo_estimate
    V = _potential(run)
    grid = _grid(run, V)
    n = run.args.ensemble or run.default("ensemble", 1 if not model.is_random(V) else 200)
    seeds = _seeds(run, n)
    f = lyapunov_estimate if run.args.mode == "exp" else power_lo_estimate
    rep = f(V, run.args.energy, grid, seeds, run.args.workers)
    rep.write_csv(run.path("lyapunov.csv"))
    print(f"gamma={rep.gamma:.4f}±{rep.half_width:.4f} mode={run.args.mode} n={rep.ensemble_size} status={rep.status}")
    return EXIT_OK, {"gamma": rep.gamma, "half_width": rep.half_width, "window": list(rep.window)}


def cmd_series(run):
    import csv
    from . import perturb as pt
    from .lyapunov import lyapunov_estimate
    from .subordinacy import classify
    V0 = _potential(run)
    W = _potential(run, "perturbation", perturbation=True)
    sc = run.data.get("scenario", {})
    lam = float(run.args.lam[0]) if run.args.lam else float(config.require(run.data, "lambda", run.text,
                                                                            run.cfg_path, "scenario"))
    grid = _grid(run, V0)
    rep = classify(V0, lam, grid)
    if rep.pair is None:
        raise pt.InfeasibleError(f"no subordinate branch at lambda={lam} ({rep.classification})")
    pair = rep.pair
    policy = sc.get("weights", run.default("weights", "point"))
    if policy == "point":
        fp, fm = pt.choose_weights_point(pair)
    elif policy == "exponential":
        g = sc.get("gamma") or lyapunov_estimate(V0, lam, grid).gamma
        fp, fm = pt.exponential_weights(grid, g, sc.get("eps1", min(0.1, 0.25 * g)))
    elif policy == "power":
        ch = pt.choose_weights_power(rep.beta_hat if rep.beta_hat else 1.0, float(sc["eta"]))
        fp, fm = pt.power_weights(grid, ch.mu_plus)
    elif policy == "power_lo":
        fp, fm = pt.power_lo_weights(grid, float(sc["gamma"]), float(sc.get("eps", 0.01)))
    else:
        raise config.ConfigError(f"unknown weight policy {policy!r}", run.cfg_path,
                                 *config.locate(run.text, "weights", "scenario"))
    A = pt.build_A(W, pair)
    wp = pt.build_G(A, fp, fm, label=policy)
    branch = sc.get("branch", run.default("branch", "u_minus"))
    s = pt.series_solve(A, wp, branch)
    rc = pt.reconstruct_psi(s, pair, W)
    pt.write_bounds_csv(run.path("series_bounds.csv"), s)
    with open(run.path("psi.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "psi", "dpsi", "u1", "u2"])
        for row in zip(grid.points, rc.psi, rc.dpsi, s.u1, s.u2):
            w.writerow([f"{v:.17g}" for v in row])
    print(f"series branch={branch} x0={s.x0:g} iterations={s.iterations} tail={s.tail_x0:.3g} "
          f"residual={rc.max_residual:.3g} checks={'ok' if all(s.checks.values()) else 'FAILED'}")
    code = EXIT_OK if all(s.checks.values()) else EXIT_HYPOTHESIS
    return code, {"checks": s.checks, "x0": s.x0}


def cmd_wkb(run):
    from . import wkb
    V1 = _potential(run, "V1")
    V2 = _potential(run, "V2")
    lam = float(run.args.lam[0]) if run.args.lam else float(config.require(run.data, "lambda", run.text,
                                                                            run.cfg_path, "scenario"))
    grid = _grid(run, V1)
    corrected = run.data.get("scenario", {}).get("corrected", False)
    if corrected:
        cs = wkb.corrected_asymptotics(V1, V2, lam, grid)
        cols = {"x": grid.points, "psi_minus": cs.psi_minus, "psi_plus": cs.psi_plus,
                "eta_corrected_minus": cs.corrected.eta_minus, "eta_corrected_plus": cs.corrected.eta_plus,
                "ratio_minus": cs.ratio_minus, "ratio_plus": cs.ratio_plus}
        wkb._write_cols(run.path("wkb_corrected.csv"), cols)
        print(f"wkb corrected lambda={lam} ratio_minus(H)={abs(cs.ratio_minus[-1]):.6g} "
              f"kercon={cs.corrected.kercon['integral']:.4g}")
        return EXIT_OK, {"kercon": cs.corrected.kercon}
    frame = wkb.build_wkb_frame(V1, V2, lam, grid)
    sol = wkb.wkb_solve(frame)
    sol.to_csv(run.path("wkb.csv"))
    print(f"wkb lambda={lam} ratio_minus(H)={abs(sol.ratio_minus[-1]):.6g} ratio_plus(H)={abs(sol.ratio_plus[-1]):.6g}")
    return EXIT_OK, {}


RECIPES = ("point_stability", "beta_stability", "beta_zero_turnaround", "lyapunov_stability")


def cmd_experiment(run):
    from . import experiments as ex
    from .lyapunov import stability_experiment_lyapunov
    d = run.data
    recipe = config.require(d, "recipe", run.text, run.cfg_path, types=str)
    if recipe not in RECIPES:
        raise config.ConfigError(f"unknown recipe {recipe!r}; choose from {RECIPES}", run.cfg_path,
                                 *config.locate(run.text, "recipe"))
    V0 = _potential(run)
    ladder = recipe == "beta_zero_turnaround" and "etas" in d
    W = None if ladder else _potential(run, "perturbation", perturbation=True)
    grid = _grid(run, V0)
    lams = d.get("lambdas", [d.get("lambda", 0.0)])
    given = {**d.get("tolerances", {}), **dict(run.args.tol or [])}

    def tol(name, value):
        return given[name] if name in given else run.default(f"tol.{name}", value)

    n = d.get("ensemble", run.args.ensemble)
    seeds = _seeds(run, n) if n else None
    if recipe == "point_stability":
        v = ex.run_point_stability(V0, W, lams, grid)
    elif recipe == "beta_stability":
        eta = float(config.require(d, "eta", run.text, run.cfg_path))
        v = ex.run_beta_stability(V0, W, lams, grid, eta, seeds=seeds, tol=tol("beta", 0.05),
                                  ratio_tol=tol("ratio", 0.02), beta_declared=d.get("beta_declared"),
                                  workers=run.args.workers)
    elif ladder:
        v = ex.run_beta_zero_ladder(V0, lams, grid, d["etas"], C=float(d.get("C", 1.0)), seeds=seeds,
                                    tol=tol("beta", 0.05), workers=run.args.workers)
    elif recipe == "beta_zero_turnaround":
        v = ex.run_beta_zero_turnaround(V0, W, lams, grid, seeds=seeds, tol=tol("beta", 0.05),
                                        workers=run.args.workers)
    else:
        kind = d.get("kind", "exp")
        gtol = tol("gamma", 0.01 if kind == "exp" else 0.02)
        res = stability_experiment_lyapunov(V0, W, float(lams[0]), grid, kind, eps=float(d.get("eps", 0.5)),
                                            ensemble=seeds, tol=gtol, workers=run.args.workers)
        print(res.summary())
        with open(run.path("verdicts.csv"), "w") as fh:
            fh.write("lambda,gamma_before,gamma_after,delta,verdict\n")
            fh.write(f"{float(lams[0]):.17g},{res.before.gamma:.17g},{res.after.gamma:.17g},"
                     f"{res.delta:.17g},{res.verdict}\n")
        return (EXIT_VIOLATED if res.verdict == "violated" else EXIT_OK), {"verdict": res.verdict}
    v.write_csv(run.path("verdicts.csv"))
    v.write_json(run.path("detail.json"))
    for lam, verdict in sorted(ex.lambda_verdicts(v).items()):
        print(f"{recipe} lambda={lam:g} verdict={verdict}")
    return (EXIT_VIOLATED if v.any_violated else EXIT_OK), {"verdicts": ex.lambda_verdicts(v)}


COMMANDS = {"solve": cmd_solve, "beta": cmd_beta, "classify": cmd_classify, "lyapunov": cmd_lyapunov,
            "series": cmd_series, "wkb": cmd_wkb, "experiment": cmd_experiment}


def build_parser():
    p = argparse.ArgumentParser(prog="sublab", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"sublab {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default="out", help="output directory (default: out)")
    common.add_argument("--seed", type=int, default=0, help="first ensemble seed")
    common.add_argument("--workers", type=int, default=1, help="process-pool size")
    common.add_argument("--horizon", type=float, default=None)
    common.add_argument("--step", type=float, default=None)
    common.add_argument("--tol", type=_tol_pair, action="append", metavar="NAME=VALUE",
                        help="tolerance override, repeatable")
    common.add_argument("--backend", choices=("compiled", "python"), default=None)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", parents=[common], help="phi_1/phi_2 at one angle and energy")
    s.add_argument("--potential", required=True)
    s.add_argument("--lambda", dest="lam", type=float, required=True)
    s.add_argument("--theta", type=float, required=True)

    s = sub.add_parser("classify", parents=[common], help="P/S/L classification over energies")
    s.add_argument("--potential", required=True)
    s.add_argument("--lambda", dest="lam", type=float, action="append")

    s = sub.add_parser("beta", parents=[common], help="subordinacy exponent (ensemble for random V)")
    s.add_argument("--potential", required=True)
    s.add_argument("--energy", type=float, required=True)
    s.add_argument("--ensemble", type=int, default=None)

    s = sub.add_parser("lyapunov", parents=[common], help="exponential or power-law growth exponent")
    s.add_argument("--potential", required=True)
    s.add_argument("--energy", type=float, required=True)
    s.add_argument("--mode", choices=("exp", "power"), default="exp")
    s.add_argument("--ensemble", type=int, default=None)

    s = sub.add_parser("series", parents=[common], help="perturbation series for one scenario")
    s.add_argument("--config", required=True)
    s.add_argument("--lambda", dest="lam", type=float, action="append")

    s = sub.add_parser("wkb", parents=[common], help="WKB and corrected asymptotics")
    s.add_argument("--config", required=True)
    s.add_argument("--lambda", dest="lam", type=float, action="append")

    s = sub.add_parser("experiment", parents=[common], help="stability recipe from a config")
    s.add_argument("--recipe", required=True)
    s.add_argument("--ensemble", type=int, default=None)
    return p


def dispatch(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    args.argv = list(argv) if argv is not None else None
    from . import experiments, lyapunov, perturb, propagate, subordinacy, wkb
    hypothesis_errors = (perturb.NonConvergenceError, perturb.NumericalIntegrityError, perturb.InfeasibleError,
                         perturb.WeightError, perturb.ReconstructionError, lyapunov.HypothesisError,
                         wkb.FrameError, wkb.ScopeError, subordinacy.MisclassificationError,
                         propagate.PropagationError, model.DomainError)
    del experiments
    if args.backend:
        kernels.use_backend(args.backend)
    cfg = getattr(args, "potential", None) or getattr(args, "config", None) or getattr(args, "recipe", None)
    try:
        run = _Run(args, cfg)
        code, extra = COMMANDS[args.command](run)
    except config.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except hypothesis_errors as exc:
        print(f"hypothesis failure: {exc}", file=sys.stderr)
        try:
            run.manifest({"error": str(exc), "exit_code": EXIT_HYPOTHESIS})
        except (NameError, OSError):
            pass
        return EXIT_HYPOTHESIS
    run.manifest({"exit_code": code, "result": extra})
    return code


def main():
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
