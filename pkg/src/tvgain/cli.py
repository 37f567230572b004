"""Command-line harness: ``tvgain simulate|detect|tune|verify|compare``."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import excitation as exc
from .estimator import TheoremBounds, verify_decay
from .experiment import (
    ConfigError,
    ExperimentConfig,
    compare,
    dump_json,
    excitation_report,
    format_table,
    read_regressors,
    read_trace,
    regressors_csv,
    run_experiment,
    simulate_plant,
    trace_csv,
    tune,
)
from .gain import InfeasibleError, select_hyperparameters
from .plant import PlantError

EXIT_OK = 0
EXIT_INFEASIBLE = 2
EXIT_VIOLATIONS = 3
EXIT_CONFIG = 4


def _load_config(args):
    if not args.config:
        raise ConfigError("--config is required")
    try:
        with open(args.config) as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as err:
        raise ConfigError(f"cannot read config: {err}") from err
    if args.seed is not None:
        raw["seed"] = args.seed
    return ExperimentConfig.from_dict(raw)


def _out_dir(args, cfg=None):
    out = args.out
    if out is None and cfg is not None:
        out = cfg.output.get("dir")
    if out is None:
        return None
    p = Path(out)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _infeasible(err: InfeasibleError):
    print(f"infeasible: {err}", file=sys.stderr)
    print(json.dumps(err.report, indent=2, sort_keys=True, default=str))
    return EXIT_INFEASIBLE


# -- subcommands -------------------------------------------------------------------


def cmd_simulate(args):
    cfg = _load_config(args)
    ex = run_experiment(cfg)
    trace = trace_csv(ex.result)
    out = _out_dir(args, cfg)
    if out is not None:
        (out / cfg.output.get("trace", "trace.csv")).write_text(trace)
        dump_json(ex.run_report, out / cfg.output.get("report", "report.json"))
        if cfg.output.get("regressors"):
            (out / cfg.output["regressors"]).write_text(regressors_csv(ex.sim))
    if args.format == "csv":
        sys.stdout.write(trace)
    elif args.format == "json":
        print(dump_json(ex.run_report))
    else:
        r = ex.run_report
        print(f"excitation: {ex.report.mode} alpha={ex.report.alpha:.6g} window={ex.report.window}")
        print(f"final |theta error| = {r['final_theta_err']:.6g}")
        if ex.decay is not None:
            print(ex.decay.summary())
    if ex.decay is not None and not ex.decay.ok:
        return EXIT_VIOLATIONS
    return EXIT_OK


def cmd_detect(args):
    if args.regressors:
        _, phis = read_regressors(args.regressors)
        windows = tuple(args.window) if args.window else (1, 2, 3, 4, 5, 6, 8, 10)
        rep = exc.detect(phis, windows=windows, lambda_omega=args.lambda_omega, alpha_grid=args.alpha_grid)
    else:
        cfg = _load_config(args)
        if args.window:
            cfg.tuning["windows"] = list(args.window)
        cfg.tuning["lambda_omega_ref"] = args.lambda_omega
        sim = simulate_plant(cfg)
        rep = excitation_report(sim, cfg)
        if rep.mode != "none":
            if rep.mode == "FE" and rep.k3 is None:
                rep = replace(rep, k3=rep.interval[1] + 1)
            rep = rep.at(args.lambda_omega)
    d = rep.to_dict()
    if args.format == "json" or args.format is None:
        print(dump_json(d))
    else:
        print("mode,alpha,alpha_raw,window,k1,k2,k3,omega_lower,omega_upper")
        print(",".join(str(x) for x in (rep.mode, rep.alpha, rep.alpha_raw, rep.window, *rep.interval, rep.k3,
                                          rep.omega_lower, rep.omega_upper)))
    out = _out_dir(args)
    if out is not None:
        dump_json(d, out / "excitation.json")
    return EXIT_OK


def cmd_tune(args):
    tuning = {"gamma_max": args.gamma_max, "safety": args.safety, "level": args.level}
    for key in ("lambda_omega", "lambda_gamma", "kappa"):
        if getattr(args, key) is not None:
            tuning[key] = getattr(args, key)
    if args.report:
        with open(args.report) as fh:
            raw = json.load(fh)
        rep = exc.ExcitationReport.from_dict(raw.get("excitation", raw))
        if rep.mode == "none":
            raise InfeasibleError(
                "regressor is not exciting; estimation without excitation needs a projection "
                "operator, which is out of scope", details={"mode": "none"})
        if args.lambda_omega is not None:
            hp, k3 = select_hyperparameters(rep, args.gamma_max, args.safety, args.level,
                                            lambda_omega=args.lambda_omega, lambda_gamma=args.lambda_gamma,
                                            kappa=args.kappa)
            rep = rep.at(hp.lambda_omega, k3) if rep.mode == "FE" else rep.at(hp.lambda_omega)
        else:
            hp, rep = tune(rep, tuning)
    else:
        cfg = _load_config(args)
        tuning = {**cfg.tuning, **tuning}
        sim = simulate_plant(cfg)
        hp, rep = tune(excitation_report(sim, cfg), tuning, sim.phis)
    print(hp.report(), file=sys.stderr)
    payload = {"hyperparameters": hp.to_dict(), "excitation": rep.to_dict(), "feasible": hp.feasible}
    print(dump_json(payload))
    out = _out_dir(args)
    if out is not None:
        dump_json(payload, out / "hyperparameters.json")
    return EXIT_OK


def cmd_verify(args):
    if args.trace:
        cols = read_trace(args.trace)
        src = args.bounds or args.report
        if not src:
            raise ConfigError("verify needs --bounds or --report alongside --trace")
        with open(src) as fh:
            raw = json.load(fh)
        b = raw.get("theorem_bounds", raw)
        if b is None:
            raise InfeasibleError("report carries no theorem bounds", details={"source": src})
        bounds = TheoremBounds(**b)
        decay = verify_decay(cols["k"], cols["V"], cols["certified"], bounds)
    else:
        cfg = _load_config(args)
        ex = run_experiment(cfg)
        if ex.decay is None:
            raise InfeasibleError(ex.run_report["theorem_bounds_error"] or "no theorem bounds")
        decay = ex.decay
    if args.format == "json":
        print(dump_json(decay.to_dict()))
    else:
        print(decay.summary())
    out = _out_dir(args)
    if out is not None:
        dump_json(decay.to_dict(), out / "decay.json")
    return EXIT_OK if decay.ok else EXIT_VIOLATIONS


def cmd_compare(args):
    cfg = _load_config(args)
    rows = compare(cfg, args.tail_fraction)
    if args.format == "json":
        print(dump_json(rows))
    elif args.format == "csv":
        keys = list(rows[0])
        print(",".join(keys))
        for r in rows:
            print(",".join(str(r.get(k, "")) for k in keys))
    else:
        print(format_table(rows))
    out = _out_dir(args, cfg)
    if out is not None:
        dump_json(rows, out / "compare.json")
    return EXIT_OK


# -- entry point -------------------------------------------------------------------


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config (JSON)")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--out", help="output directory")
    common.add_argument("--format", choices=("csv", "json"), help="stdout format")

    p = argparse.ArgumentParser(prog="tvgain", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="simulate, estimate and write trace + report")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("detect", parents=[common], help="measure PE/FE excitation of a regressor stream")
    s.add_argument("--regressors", help="regressor CSV written by simulate")
    s.add_argument("--window", type=int, nargs="+", help="candidate PE window lengths")
    s.add_argument("--alpha-grid", type=float, nargs="+", help="snap alpha down to this grid")
    s.add_argument("--lambda-omega", type=float, default=0.5, help="forgetting factor for the Omega bounds")
    s.set_defaults(func=cmd_detect)

    s = sub.add_parser("tune", parents=[common], help="select hyperparameters from measured excitation")
    s.add_argument("--report", help="excitation report JSON (instead of --config)")
    s.add_argument("--gamma-max", type=float, default=1.0)
    s.add_argument("--safety", type=float, default=0.5)
    s.add_argument("--level", choices=("theorem", "gain"), default="theorem")
    s.add_argument("--lambda-omega", type=float, help="fix lambda_omega instead of scanning")
    s.add_argument("--lambda-gamma", type=float, help="fix lambda_gamma instead of the safety placement")
    s.add_argument("--kappa", type=float, help="fix kappa instead of the safety placement")
    s.set_defaults(func=cmd_tune)

    s = sub.add_parser("verify", parents=[common], help="check Lyapunov decay on a trace")
    s.add_argument("--trace", help="trace CSV")
    s.add_argument("--bounds", help="theorem bounds JSON")
    s.add_argument("--report", help="run report JSON (its theorem_bounds are used)")
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("compare", parents=[common], help="side-by-side estimator metrics")
    s.add_argument("--tail-fraction", type=float, default=0.2)
    s.set_defaults(func=cmd_compare)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InfeasibleError as err:
        return _infeasible(err)
    except (ConfigError, exc.ExcitationError, PlantError, ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
