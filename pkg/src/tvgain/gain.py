"""Time-varying gain recursion, its spectral bounds and hyperparameter selection.

The gain obeys ``G' = G + lg (G - kappa G Omega G)``. For scalars this is a
concave parabola in ``G``; with ``Omega`` confined to ``[w_lo, w_hi]`` and
``kappa`` inside ``[1/(G_max w_lo), (1 + lg)/(lg w_hi G_max))`` every
iterate stays in ``[G_lower, G_max]``.

Two feasibility levels are offered by :func:`select_hyperparameters`:

``"gain"``
    only what the gain-confinement argument needs.
``"theorem"``
    additionally the conditions required for the Lyapunov decay bound
    (``lambda_omega > 1/(Omega_lower + 1)``, ``lg < Omega_lower`` and the
    two extra ``kappa_max`` terms).

Note that the ``"theorem"`` level is only reachable for scalar regressors.
For ``N >= 2`` the direction orthogonal to the newest regressor receives
at most ``(1 - l)/l`` of Omega mass, so no valid lower bound can exceed the
threshold ``1/l - 1``; the selector then reports the failing constraint.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .excitation import ExcitationReport, fe_horizon, omega_fe, omega_max, omega_pe
from .linalg import LinalgError, eigvals, symmetrize


class GainDegenerationError(LinalgError):
    """The gain matrix lost positive definiteness."""

    def __init__(self, spectrum):
        self.spectrum = np.asarray(spectrum)
        super().__init__(
            f"gain matrix is no longer positive definite (spectrum {np.array2string(self.spectrum, precision=4)}); "
            "check lambda_gamma and kappa"
        )


@dataclass
class Constraint:
    name: str
    value: float
    lower: float | None = None
    upper: float | None = None
    strict_lower: bool = True
    strict_upper: bool = True

    @property
    def ok(self):
        if self.lower is not None:
            if self.strict_lower and not self.value > self.lower:
                return False
            if not self.strict_lower and not self.value >= self.lower:
                return False
        if self.upper is not None:
            if self.strict_upper and not self.value < self.upper:
                return False
            if not self.strict_upper and not self.value <= self.upper:
                return False
        return True

    def describe(self):
        lo = "" if self.lower is None else f"{self.lower:.6g} {'<' if self.strict_lower else '<='} "
        hi = "" if self.upper is None else f" {'<' if self.strict_upper else '<='} {self.upper:.6g}"
        return f"{self.name}: {lo}{self.value:.6g}{hi}  [{'ok' if self.ok else 'VIOLATED'}]"

    def to_dict(self):
        d = asdict(self)
        d["ok"] = self.ok
        return d


class InfeasibleError(ValueError):
    """No hyperparameters satisfy the constraints; ``report`` lists why."""

    def __init__(self, message, constraints=(), details=None):
        self.constraints = list(constraints)
        self.details = details or {}
        super().__init__(message)

    @property
    def report(self):
        return {
            "feasible": False,
            "reason": str(self),
            "constraints": [c.to_dict() for c in self.constraints],
            **self.details,
        }


# -- scalar gain ----------------------------------------------------------------


def update_gamma_scalar(gamma, omega, lambda_gamma, kappa):
    """``gamma + lg (gamma - kappa omega gamma^2)``; works elementwise on arrays."""
    return gamma + lambda_gamma * (gamma - kappa * omega * gamma * gamma)


@dataclass(frozen=True)
class ScalarGainBounds:
    gamma_max: float
    gamma_min: float | None
    kappa_min: float
    kappa_max: float
    omega_min: float
    omega_max: float
    omega_star: float | None
    lambda_gamma: float
    kappa: float | None = None

    @property
    def feasible(self):
        return self.kappa_min < self.kappa_max


def scalar_gain_floor(gamma_max, lambda_gamma, kappa, omega_max):
    return min(1.0 / (kappa * omega_max), update_gamma_scalar(gamma_max, omega_max, lambda_gamma, kappa))


def scalar_bounds(gamma_max, lambda_gamma, omega_min, omega_max, kappa=None):
    """Bounds for the scalar recursion driven by ``omega`` in ``[omega_min, omega_max]``.

    Without ``kappa`` only the admissible kappa interval is returned;
    ``gamma_min`` and ``omega_star`` need a concrete kappa.
    """
    if not (gamma_max > 0 and 0 < omega_min <= omega_max):
        raise ValueError("need gamma_max > 0 and 0 < omega_min <= omega_max")
    ratio = omega_max / omega_min - 1.0
    lg_cap = min(1.0 / ratio if ratio > 0 else math.inf, 1.0)
    k_min = 1.0 / (gamma_max * omega_min)
    k_max = (1.0 + lambda_gamma) / (lambda_gamma * omega_max * gamma_max) if lambda_gamma > 0 else math.inf
    # the kappa interval is empty exactly when lambda_gamma reaches its cap
    if not 0 < lambda_gamma < lg_cap:
        raise InfeasibleError(
            f"lambda_gamma={lambda_gamma} outside (0, {lg_cap:.6g})",
            [Constraint("lambda_gamma", lambda_gamma, 0.0, lg_cap)],
            {"kappa_min": k_min, "kappa_max": k_max},
        )
    if k_min >= k_max:
        raise InfeasibleError(
            "empty kappa interval",
            [Constraint("kappa_min < kappa_max", k_min, upper=k_max)],
            {"kappa_min": k_min, "kappa_max": k_max},
        )
    g_min = w_star = None
    if kappa is not None:
        g_min = scalar_gain_floor(gamma_max, lambda_gamma, kappa, omega_max)
        w_star = (1.0 + lambda_gamma) / (2.0 * lambda_gamma * kappa * gamma_max)
    return ScalarGainBounds(gamma_max, g_min, k_min, k_max, omega_min, omega_max, w_star, lambda_gamma, kappa)


# -- matrix gain ----------------------------------------------------------------


def gamma_step(gamma, omega, lambda_gamma, kappa):
    """Bare matrix recursion, symmetrized, without the definiteness check."""
    return symmetrize(gamma + lambda_gamma * (gamma - kappa * gamma @ omega @ gamma))


def update_gamma(gamma, omega, lambda_gamma, kappa):
    out = gamma_step(np.asarray(gamma, float), np.asarray(omega, float), lambda_gamma, kappa)
    w = eigvals(out)
    if w[0] <= 0.0:
        raise GainDegenerationError(w)
    return out


# -- hyperparameters -------------------------------------------------------------


@dataclass
class Hyperparameters:
    lambda_omega: float
    lambda_gamma: float
    kappa: float
    gamma_max: float
    mode: str = "PE"
    omega_lower: float = 0.0
    omega_upper: float = 0.0
    gamma_lower: float = 0.0
    level: str = "theorem"
    constraints: list = field(default_factory=list, repr=False)

    def kappa_interval(self):
        return kappa_interval(self.lambda_omega, self.lambda_gamma, self.gamma_max,
                              self.omega_lower, self.omega_upper, self.level)

    def check(self):
        """Constraint list for these values; every entry must be ``ok``."""
        return build_constraints(self.lambda_omega, self.lambda_gamma, self.kappa, self.gamma_max,
                                 self.omega_lower, self.omega_upper, self.level)

    @property
    def feasible(self):
        return all(c.ok for c in self.check()) and self.gamma_lower > 0

    def to_dict(self):
        d = {k: v for k, v in asdict(self).items() if k != "constraints"}
        d["constraints"] = [c.to_dict() for c in self.check()]
        return d

    @classmethod
    def from_dict(cls, d):
        keys = ("lambda_omega", "lambda_gamma", "kappa", "gamma_max", "mode",
                "omega_lower", "omega_upper", "gamma_lower", "level")
        return cls(**{k: d[k] for k in keys if k in d})

    def report(self):
        lines = [f"mode={self.mode} level={self.level}"]
        lines += ["  " + c.describe() for c in self.check()]
        lines.append(f"  gamma_lower = {self.gamma_lower:.6g}")
        return "\n".join(lines)


def lambda_gamma_cap(omega_lower, omega_upper, level="theorem"):
    if omega_lower <= 0.0:
        return 0.0  # no excitation floor: no admissible lambda_gamma
    ratio = omega_upper / omega_lower - 1.0
    cap = min(1.0 / ratio if ratio > 0 else math.inf, 1.0)
    if level == "theorem":
        cap = min(cap, omega_lower)
    return cap


def kappa_interval(lambda_omega, lambda_gamma, gamma_max, omega_lower, omega_upper, level="theorem"):
    """``(kappa_min, kappa_max)`` for the given level."""
    k_min = 1.0 / (gamma_max * omega_lower) if omega_lower > 0.0 else math.inf
    terms = [(1.0 + lambda_gamma) / (lambda_gamma * omega_upper * gamma_max)]
    if level == "theorem":
        terms.append(1.0 / (lambda_gamma * gamma_max))
        terms.append(1.0 / ((1.0 - lambda_omega) * omega_upper * gamma_max))
    return k_min, min(terms)


def kappa_max_terms(lambda_omega, lambda_gamma, gamma_max, omega_upper):
    return {
        "growth": (1.0 + lambda_gamma) / (lambda_gamma * omega_upper * gamma_max),
        "gamma_bar": 1.0 / (lambda_gamma * gamma_max),
        "upsilon": 1.0 / ((1.0 - lambda_omega) * omega_upper * gamma_max),
    }


def build_constraints(lambda_omega, lambda_gamma, kappa, gamma_max, omega_lower, omega_upper, level):
    cs = [Constraint("lambda_omega", lambda_omega, 0.0, 1.0)]
    if level == "theorem":
        cs.append(Constraint("lambda_omega > 1/(omega_lower + 1)", lambda_omega, 1.0 / (omega_lower + 1.0)))
    cs.append(Constraint("lambda_gamma", lambda_gamma, 0.0, lambda_gamma_cap(omega_lower, omega_upper, level)))
    k_min, k_max = kappa_interval(lambda_omega, lambda_gamma, gamma_max, omega_lower, omega_upper, level)
    cs.append(Constraint("kappa", kappa, k_min, k_max, strict_lower=False))
    return cs


def gamma_lower_bound(kappa, lambda_gamma, gamma_max, omega_upper):
    return scalar_gain_floor(gamma_max, lambda_gamma, kappa, omega_upper)


def _place(lo, hi, safety):
    return lo + safety * (hi - lo)


def _omega_pair(report: ExcitationReport, lambda_omega, omega_floor=None):
    if report.mode == "PE":
        return omega_pe(lambda_omega, report.alpha, report.window), omega_max(lambda_omega), report.k3
    k1, k2 = report.interval
    k3 = report.k3
    if k3 is None:
        if omega_floor is None:
            raise ValueError("FE selection needs k3 on the report or an omega_floor")
        k3 = fe_horizon(lambda_omega, report.alpha, k1, k2, omega_floor)
    return omega_fe(lambda_omega, report.alpha, k1, k3), omega_max(lambda_omega), k3


def _complete(lambda_omega, report, gamma_max, safety, level, lambda_gamma=None, kappa=None,
              omega_floor=None):
    """Fill in lambda_gamma and kappa for one lambda_omega, or raise InfeasibleError."""
    w_lo, w_hi, k3 = _omega_pair(report, lambda_omega, omega_floor)
    cs = []
    if level == "theorem":
        c = Constraint("lambda_omega > 1/(omega_lower + 1)", lambda_omega, 1.0 / (w_lo + 1.0))
        cs.append(c)
        if not c.ok:
            raise InfeasibleError(c.describe(), cs, {"omega_lower": w_lo, "omega_upper": w_hi})
    cap = lambda_gamma_cap(w_lo, w_hi, level)
    lg = _place(0.0, cap, safety) if lambda_gamma is None else lambda_gamma
    c = Constraint("lambda_gamma", lg, 0.0, cap)
    cs.append(c)
    if not c.ok:
        raise InfeasibleError(c.describe(), cs, {"omega_lower": w_lo, "omega_upper": w_hi})
    k_min, k_max = kappa_interval(lambda_omega, lg, gamma_max, w_lo, w_hi, level)
    kp = _place(k_min, k_max, safety) if kappa is None else kappa
    c = Constraint("kappa", kp, k_min, k_max, strict_lower=False)
    cs.append(c)
    details = {"omega_lower": w_lo, "omega_upper": w_hi, "kappa_min": k_min, "kappa_max": k_max}
    if level == "theorem":
        details["kappa_max_terms"] = kappa_max_terms(lambda_omega, lg, gamma_max, w_hi)
    if k_min >= k_max:
        raise InfeasibleError(f"empty kappa interval [{k_min:.6g}, {k_max:.6g})", cs, details)
    if not c.ok:
        raise InfeasibleError(c.describe(), cs, details)
    g_lo = gamma_lower_bound(kp, lg, gamma_max, w_hi)
    if g_lo <= 0.0:
        cs.append(Constraint("gamma_lower", g_lo, 0.0))
        raise InfeasibleError(f"gain lower bound {g_lo:.6g} is not positive", cs, details)
    hp = Hyperparameters(lambda_omega, lg, kp, gamma_max, report.mode, w_lo, w_hi, g_lo, level, cs)
    return hp, k3


def select_hyperparameters(report: ExcitationReport, gamma_max, safety=0.5, level="theorem",
                           lambda_omega=None, lambda_gamma=None, kappa=None, grid=999,
                           omega_floor=None, objective=None):
    """Choose ``(lambda_omega, lambda_gamma, kappa)`` for an excitation report.

    ``lambda_gamma`` and ``kappa`` sit at the ``safety`` fraction of their
    admissible intervals unless given explicitly. Without an explicit
    ``lambda_omega`` a uniform grid over ``(0, 1)`` is scanned and the
    feasible point maximizing ``objective(hp)`` is kept; the default
    objective is the certified decay rate for ``level="theorem"`` and the
    ratio ``omega_lower / omega_upper`` otherwise.

    Returns ``(hp, k3)`` where ``k3`` closes the FE window (``None`` for PE).
    Raises :class:`InfeasibleError` with a structured report on failure.
    """
    if report.mode == "none":
        raise InfeasibleError(
            "regressor is not exciting; estimation without excitation needs a projection "
            "operator, which is out of scope",
            details={"mode": "none"},
        )
    if not gamma_max > 0:
        raise ValueError("gamma_max must be positive")
    if not 0.0 < safety < 1.0:
        raise ValueError("safety must lie in the open interval (0, 1)")
    if level not in ("theorem", "gain"):
        raise ValueError(f"unknown level {level!r}")
    if lambda_omega is not None:
        return _complete(lambda_omega, report, gamma_max, safety, level, lambda_gamma, kappa, omega_floor)

    if objective is None:
        if level == "theorem":
            from .estimator import theorem_bounds

            def objective(hp):
                return theorem_bounds(hp, 0.0, 0.0).mu1
        else:
            def objective(hp):
                return hp.omega_lower / hp.omega_upper

    best = None
    last_err = None
    for lw in np.linspace(0.0, 1.0, grid + 2)[1:-1]:
        try:
            hp, k3 = _complete(float(lw), report, gamma_max, safety, level, lambda_gamma, kappa, omega_floor)
            score = objective(hp)
        except (InfeasibleError, ValueError) as err:
            last_err = err
            continue
        if best is None or score > best[0]:
            best = (score, hp, k3)
    if best is None:
        details = {"grid": grid, "level": level}
        cs = []
        if isinstance(last_err, InfeasibleError):
            cs = last_err.constraints
            details.update(last_err.details)
        raise InfeasibleError(
            f"no lambda_omega on a {grid}-point grid satisfies the {level}-level constraints"
            + (f" (last failure: {last_err})" if last_err else ""),
            cs,
            details,
        )
    return best[1], best[2]


def feasibility_json(hp: Hyperparameters, k3=None):
    d = {"feasible": hp.feasible, "hyperparameters": hp.to_dict(), "k3": k3}
    return json.dumps(d, indent=2, sort_keys=True)


# -- bound checks ----------------------------------------------------------------


@dataclass
class GammaBoundVerdict:
    steps: list
    lower_ok: list
    upper_ok: list
    certified: list

    @property
    def ok(self):
        return all(lo and hi for lo, hi, c in zip(self.lower_ok, self.upper_ok, self.certified) if c)

    def violations(self):
        return [k for k, lo, hi, c in zip(self.steps, self.lower_ok, self.upper_ok, self.certified)
                if c and not (lo and hi)]


def gamma_bound_check(gammas, hp: Hyperparameters, window=None, start=0, tol=1e-9):
    """Per-step ``(lower ok, upper ok)`` for a trace of gain matrices.

    ``gammas[i]`` is the gain at step ``start + i``; ``window`` is the
    certified ``(first, last)`` range (``last`` may be ``None``). Steps
    outside it are reported as uncertified and excluded from the verdict.
    """
    steps, lower_ok, upper_ok, cert = [], [], [], []
    for i, g in enumerate(gammas):
        k = start + i
        w = eigvals(np.atleast_2d(g))
        steps.append(k)
        lower_ok.append(bool(w[0] >= hp.gamma_lower - tol))
        upper_ok.append(bool(w[-1] <= hp.gamma_max + tol))
        if window is None:
            cert.append(True)
        else:
            lo, hi = window
            cert.append(k >= lo and (hi is None or k <= hi))
    return GammaBoundVerdict(steps, lower_ok, upper_ok, cert)


def clamp_spectrum(gamma, lower, upper):
    """Project the eigenvalues of a symmetric matrix into ``[lower, upper]``."""
    w, v = np.linalg.eigh(symmetrize(gamma))
    return symmetrize((v * np.clip(w, lower, upper)) @ v.T)
