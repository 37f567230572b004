"""Configuration-driven experiments: simulate, tune, estimate, verify, compare."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import excitation as exc
from .baselines import RLS, NormalizedGradient
from .estimator import TRACE_COLUMNS, TheoremBounds, run, theorem_bounds, verify_run
from .gain import Hyperparameters, InfeasibleError, gamma_bound_check, select_hyperparameters
from .plant import ParamTrajectory, Plant, PlantConfig
from .signals import make_input

ESTIMATORS = ("proposed", "baseline-rls", "baseline-rls-forgetting", "baseline-normalized-gradient")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    plant: PlantConfig
    trajectory: dict
    input: dict
    horizon: int
    seed: int = 0
    estimator: list = field(default_factory=lambda: ["proposed"])
    hyperparameters: object = "auto"
    tuning: dict = field(default_factory=dict)
    excitation: object = "auto"
    theta0: list | None = None
    gamma0: object = None
    omega0: object = None
    clamp: bool = False
    baselines: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d):
        try:
            plant = PlantConfig.from_dict(d["plant"])
            horizon = int(d["horizon"])
            est = d.get("estimator", "proposed")
            est = [est] if isinstance(est, str) else list(est)
            cfg = cls(plant=plant, trajectory=dict(d["trajectory"]), input=dict(d.get("input", {})),
                      horizon=horizon, seed=int(d.get("seed", 0)), estimator=est,
                      hyperparameters=d.get("hyperparameters", "auto"), tuning=dict(d.get("tuning", {})),
                      excitation=d.get("excitation", "auto"), theta0=d.get("theta0"),
                      gamma0=d.get("gamma0"), omega0=d.get("omega0"), clamp=bool(d.get("clamp", False)),
                      baselines=dict(d.get("baselines", {})), output=dict(d.get("output", {})))
        except (KeyError, TypeError, ValueError) as err:
            raise ConfigError(f"invalid config: {err}") from err
        if cfg.horizon < 1:
            raise ConfigError("horizon must be >= 1")
        for e in cfg.estimator:
            if e not in ESTIMATORS:
                raise ConfigError(f"unknown estimator {e!r}")
        return cfg

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self):
        return {
            "plant": self.plant.to_dict(), "trajectory": self.trajectory, "input": self.input,
            "horizon": self.horizon, "seed": self.seed, "estimator": self.estimator,
            "hyperparameters": self.hyperparameters, "tuning": self.tuning, "excitation": self.excitation,
            "theta0": self.theta0, "gamma0": self.gamma0, "omega0": self.omega0, "clamp": self.clamp,
            "baselines": self.baselines, "output": self.output,
        }


@dataclass
class Simulation:
    samples: list
    trajectory: ParamTrajectory
    warmup: int

    @property
    def phis(self):
        return np.array([s.phi for s in self.samples])


def simulate_plant(cfg: ExperimentConfig) -> Simulation:
    """Run the plant for ``warmup + horizon`` steps and keep the last ``horizon`` samples."""
    warm = cfg.plant.warmup
    total = warm + cfg.horizon
    traj_spec = dict(cfg.trajectory)
    traj_spec.setdefault("seed", cfg.seed)
    traj = ParamTrajectory.from_dict(traj_spec, total)
    if traj.base.shape != (cfg.plant.dim,):
        raise ConfigError(f"trajectory base must have {cfg.plant.dim} entries")
    u = make_input(cfg.input, total, seed=cfg.seed, dim=cfg.plant.dim)
    plant = Plant(cfg.plant)
    samples = []
    for k in range(total):
        s = plant.step(u[k], traj(k))
        if k >= warm:
            samples.append(s)
    return Simulation(samples, traj, warm)


# -- tuning -----------------------------------------------------------------------


def excitation_report(sim: Simulation, cfg: ExperimentConfig):
    """Measured excitation of the recorded samples, in plant-time indices."""
    if isinstance(cfg.excitation, dict):
        return exc.ExcitationReport.from_dict(cfg.excitation)
    t = cfg.tuning
    start = int(t.get("excitation_start", 0))
    rep = exc.detect(sim.phis, windows=tuple(t.get("windows", (1, 2, 3, 4, 6, 8))),
                     lambda_omega=float(t.get("lambda_omega_ref", 0.5)), start=start,
                     max_fe_len=t.get("max_fe_len"))
    if rep.mode == "none":
        return rep
    k1, k2 = rep.interval
    off = sim.warmup
    # k3 is left open for FE: the tuner picks the longest feasible window
    k3 = t.get("k3")
    return replace(rep, interval=(k1 + off, k2 + off), k3=None if k3 is None else int(k3),
                   lambda_omega=None, omega_lower=None, omega_upper=None)


def tune(report: exc.ExcitationReport, tuning: dict, phis=None):
    """Select hyperparameters for ``report``; returns ``(hp, report_with_k3)``.

    For PE reports every candidate window of ``tuning["windows"]`` is tried
    (when ``phis`` is given) and the best objective wins. For FE reports
    without a fixed ``k3`` the longest feasible certification window is
    chosen, searching up to ``tuning["max_fe_extension"]`` steps past ``k2``.
    """
    gamma_max = float(tuning.get("gamma_max", 1.0))
    safety = float(tuning.get("safety", 0.5))
    level = tuning.get("level", "theorem")
    kw = {k: tuning[k] for k in ("lambda_omega", "lambda_gamma", "kappa", "omega_floor") if tuning.get(k) is not None}
    grid = int(tuning.get("grid", 999))

    def objective(hp):
        if level == "theorem":
            return theorem_bounds(hp, 0.0, 0.0).mu1
        return hp.omega_lower / hp.omega_upper

    def attempt(rep):
        hp, k3 = select_hyperparameters(rep, gamma_max, safety, level, grid=grid, objective=objective, **kw)
        if k3 is not None and rep.k3 != k3:
            rep = replace(rep, k3=k3)
        return hp, rep.at(hp.lambda_omega, k3) if rep.mode == "FE" else rep.at(hp.lambda_omega)

    if report.mode == "none":
        return attempt(report)
    candidates = [report]
    if report.mode == "PE" and phis is not None and tuning.get("scan_windows", True):
        k1 = report.interval[0]
        for w in tuning.get("windows", (1, 2, 3, 4, 6, 8)):
            if w == report.window or w > len(phis):
                continue
            a = exc.measure_alpha(phis, w, start=int(tuning.get("excitation_start", 0)))
            if a > 0:
                candidates.append(exc.ExcitationReport("PE", a, w, (k1, k1 + w)))
    if report.mode == "FE" and report.k3 is None and "omega_floor" not in kw:
        k2 = report.interval[1]
        candidates = [replace(report, k3=k3)
                      for k3 in range(max(k2 + 1, report.interval[0] + 2),
                                      k2 + 1 + int(tuning.get("max_fe_extension", 50)))]
    best = None
    last = None
    for rep in candidates:
        try:
            hp, rep2 = attempt(rep)
        except InfeasibleError as err:
            last = err
            continue
        if report.mode == "FE":
            key = (rep2.k3, objective(hp))
        else:
            key = (objective(hp),)
        if best is None or key > best[0]:
            best = (key, hp, rep2)
    if best is None:
        raise last
    return best[1], best[2]


# -- running --------------------------------------------------------------------


def _matrix(x, dim):
    if x is None:
        return None
    a = np.asarray(x, dtype=float)
    if a.ndim == 0:
        return float(a) * np.eye(dim)
    if a.ndim == 1:
        return np.diag(a)
    return a


def hyperparameters_for(cfg: ExperimentConfig, sim: Simulation):
    """``(hp, report, tuned)`` from the config (explicit values or auto tuning).

    With explicit hyperparameters a stream too short to analyse simply has
    no certified window; auto tuning needs a measurement and fails instead.
    """
    if cfg.hyperparameters == "auto":
        report = excitation_report(sim, cfg)
    else:
        try:
            report = excitation_report(sim, cfg)
        except exc.ExcitationError:
            report = exc.ExcitationReport("none")
    if cfg.hyperparameters == "auto":
        hp, report = tune(report, cfg.tuning, sim.phis)
        return hp, report, True
    h = dict(cfg.hyperparameters)
    level = h.get("level", cfg.tuning.get("level", "theorem"))
    if report.mode != "none":
        if report.mode == "FE" and report.k3 is None:
            report = exc.ExcitationReport(report.mode, report.alpha, report.window, report.interval,
                                          h.get("k3", report.interval[1] + 1))
        report = report.at(float(h["lambda_omega"]))
    lower = h.get("omega_lower", report.omega_lower if report.mode != "none" else 0.0)
    upper = h.get("omega_upper", 1.0 / float(h["lambda_omega"]))
    hp = Hyperparameters(float(h["lambda_omega"]), float(h["lambda_gamma"]), float(h["kappa"]),
                         float(h["gamma_max"]), report.mode if report.mode != "none" else "PE",
                         float(lower or 0.0), float(upper), 0.0, level)
    from .gain import gamma_lower_bound

    hp.gamma_lower = float(h.get("gamma_lower", gamma_lower_bound(hp.kappa, hp.lambda_gamma, hp.gamma_max, upper)))
    return hp, report, False


@dataclass
class Experiment:
    config: ExperimentConfig
    sim: Simulation
    hp: Hyperparameters
    report: exc.ExcitationReport
    bounds: TheoremBounds | None
    result: object
    decay: object
    run_report: dict


def run_experiment(cfg: ExperimentConfig) -> Experiment:
    sim = simulate_plant(cfg)
    hp, report, tuned = hyperparameters_for(cfg, sim)
    dim = cfg.plant.dim
    traj = sim.trajectory
    bounds = None
    bounds_error = None
    try:
        bounds = theorem_bounds(hp, traj.delta_star, traj.theta_max, float(cfg.tuning.get("mu2_fraction", 0.5)))
    except InfeasibleError as err:
        bounds_error = str(err)
    window = report.validity if report.mode != "none" else None
    clamp_window = window if cfg.clamp else None
    result = run(sim.samples, hp, bounds, window, theta0=cfg.theta0, gamma0=_matrix(cfg.gamma0, dim),
                 omega0=_matrix(cfg.omega0, dim), clamp_window=clamp_window)
    decay = verify_run(result, bounds) if bounds is not None else None
    gcheck = gamma_bound_check([s for s in _gamma_path(result)], hp,
                               window=window, start=result.records[0].k)
    tail = max(1, len(result.records) // 10)
    v_tail = [r.V for r in result.records[-tail:]]
    run_report = {
        "excitation": report.to_dict(),
        "hyperparameters": hp.to_dict(),
        "tuned": tuned,
        "feasible": hp.feasible,
        "theorem_bounds": bounds.to_dict() if bounds else None,
        "theorem_bounds_error": bounds_error,
        "decay": decay.to_dict() if decay else None,
        "gamma_bounds": {"ok": gcheck.ok, "violations": len(gcheck.violations())},
        "final_theta_err": result.records[-1].theta_err_norm,
        "final_state_theta_err": float(np.linalg.norm(result.final.theta - sim.samples[-1].theta_star)),
        "tail_sup_V": max(v_tail),
        "v_bound": bounds.v_bound if bounds else None,
        "delta_star": traj.delta_star,
        "theta_star_max": traj.theta_max,
        "warmup": sim.warmup,
        "clamped_steps": result.clamped,
    }
    return Experiment(cfg, sim, hp, report, bounds, result, decay, run_report)


def _gamma_path(result):
    # gain eigen-extremes are in the trace; rebuild 1x1 stand-ins is lossy, so
    # use diag(min, max) which has the same extreme eigenvalues
    for r in result.records:
        yield np.diag([r.gamma_eig_min, r.gamma_eig_max])


# -- trace I/O ------------------------------------------------------------------


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def trace_csv(result) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    for r in result.records:
        w.writerow([_fmt(v) for v in r.row()])
    return buf.getvalue()


def write_trace(result, path):
    Path(path).write_text(trace_csv(result))


def read_trace(path):
    """Trace CSV as a dict of numpy columns."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    if tuple(header) != TRACE_COLUMNS:
        raise ValueError(f"unexpected trace header {header}")
    cols = {name: np.array([float(r[i]) for r in body]) for i, name in enumerate(header)}
    cols["k"] = cols["k"].astype(int)
    cols["certified"] = cols["certified"].astype(bool)
    cols["contracting"] = cols["contracting"].astype(bool)
    return cols


def regressors_csv(sim: Simulation) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    n = len(sim.samples[0].phi)
    w.writerow(["k"] + [f"phi_{i}" for i in range(n)] + ["y", "u"] + [f"theta_star_{i}" for i in range(n)])
    for s in sim.samples:
        w.writerow([s.k] + [_fmt(v) for v in s.phi] + [_fmt(s.y), _fmt(s.u)] + [_fmt(v) for v in s.theta_star])
    return buf.getvalue()


def read_regressors(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    idx = [i for i, h in enumerate(header) if h.startswith("phi_")]
    ks = np.array([int(r[0]) for r in body])
    phis = np.array([[float(r[i]) for i in idx] for r in body])
    return ks, phis


def dump_json(obj, path=None):
    text = json.dumps(obj, indent=2, sort_keys=True, default=_json_default)
    if path is not None:
        Path(path).write_text(text + "\n")
    return text


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, float) and math.isinf(o):
        return None
    raise TypeError(f"not serializable: {type(o)}")


# -- comparison -------------------------------------------------------------------


def compare(cfg: ExperimentConfig, tail_fraction=0.2):
    """Run every listed estimator on the same simulated data.

    Returns one metrics dict per estimator: tail RMS parameter error and the
    first/last/minimum smallest eigenvalue of its gain matrix.
    """
    if len(cfg.estimator) < 2:
        raise ConfigError("compare needs at least two estimators")
    sim = simulate_plant(cfg)
    dim = cfg.plant.dim
    tail_start = int(len(sim.samples) * (1.0 - tail_fraction))
    theta0 = None if cfg.theta0 is None else np.asarray(cfg.theta0, float)
    b = cfg.baselines
    rows = []
    for name in cfg.estimator:
        if name == "proposed":
            hp, report, _ = hyperparameters_for(cfg, sim)
            window = report.validity if report.mode != "none" else None
            res = run(sim.samples, hp, None, window, theta0=theta0, gamma0=_matrix(cfg.gamma0, dim),
                      omega0=_matrix(cfg.omega0, dim),
                      clamp_window=window if cfg.clamp else None)
            errs = res.column("theta_err_norm")
            gmin = res.column("gamma_eig_min")
            extra = {"gamma_lower": hp.gamma_lower, "gamma_max": hp.gamma_max}
        else:
            if name == "baseline-rls":
                est = RLS(dim, 1.0, float(b.get("p0", 1.0)), theta0)
            elif name == "baseline-rls-forgetting":
                est = RLS(dim, float(b.get("forgetting", 0.95)), float(b.get("p0", 1.0)), theta0)
            else:
                est = NormalizedGradient(dim, float(b.get("mu", 0.5)), theta0)
            errs, gmin = [], []
            for s in sim.samples:
                errs.append(float(np.linalg.norm(est.theta - s.theta_star)))
                gmin.append(float(np.linalg.eigvalsh(est.gain)[0]))
                est.update(s.phi, s.y)
            errs, gmin = np.array(errs), np.array(gmin)
            extra = {}
        rows.append({
            "estimator": name,
            "tail_rms_error": float(np.sqrt(np.mean(errs[tail_start:] ** 2))),
            "final_error": float(errs[-1]),
            "gain_min_eig_initial": float(gmin[0]),
            "gain_min_eig_final": float(gmin[-1]),
            "gain_min_eig_tail_min": float(np.min(gmin[tail_start:])),
            **extra,
        })
    return rows


def format_table(rows):
    cols = ["estimator", "tail_rms_error", "final_error", "gain_min_eig_initial", "gain_min_eig_final"]
    width = [max(len(c), 28 if c == "estimator" else 12) for c in cols]
    out = ["  ".join(c.ljust(w) for c, w in zip(cols, width))]
    for r in rows:
        cells = [r["estimator"]] + [f"{r[c]:.6g}" for c in cols[1:]]
        out.append("  ".join(c.ljust(w) for c, w in zip(cells, width)))
    return "\n".join(out)
