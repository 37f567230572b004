"""Parameter update law, gain decomposition, Lyapunov monitor and decay bounds.

Step convention
---------------
State ``k`` holds ``theta_k``, ``Gamma_k``, ``Omega_k`` and ``Gamma_bar_k``,
all built from samples ``0 .. k-1``. Processing sample ``k`` (regressor
``phi_k``, output ``y_k``) does::

    e_k          = phi_k^T theta_k - y_k
    theta_{k+1}  = theta_k - lg kappa Gamma_k phi_k e_k / (1 + |phi_k|^2)
    Omega_{k+1}  = (1 - lo) Omega_k + phi_k phi_k^T / (1 + |phi_k|^2)
    Gbar_{k+1}   = Gamma_k - lg kappa Gamma_k phi_k phi_k^T Gamma_k / (1 + |phi_k|^2)
    Ups_{k+1}    = lg Gamma_k - lg kappa (1 - lo) Gamma_k Omega_k Gamma_k
    Gamma_{k+1}  = Gamma_k + lg (Gamma_k - kappa Gamma_k Omega_{k+1} Gamma_k)

so that ``Gamma_{k+1} = Gbar_{k+1} + Ups_{k+1}`` exactly and the error
recursion is ``theta_{k+1} - theta*_k = Gbar_{k+1} Gamma_k^{-1} theta~_k``,
which is what the Lyapunov argument with ``V_k = theta~_k^T Gbar_k^{-1}
theta~_k`` relies on. ``theta_gain="updated"`` switches the parameter step
to ``Gamma_{k+1}`` for comparison; the decay guarantee does not cover it.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .excitation import OmegaState, omega_step
from .gain import (
    GainDegenerationError,
    Hyperparameters,
    InfeasibleError,
    clamp_spectrum,
    gamma_step,
    kappa_max_terms,
)
from .linalg import LinalgError, SingularMatrixError, eigvals, kailath_inverse, spd_inverse, spd_sqrt, symmetrize
from .plant import RegressorSample


# -- update laws ----------------------------------------------------------------


def update_theta(theta, gamma, phi, e, lambda_gamma, kappa):
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    if not (np.all(np.isfinite(theta)) and np.all(np.isfinite(phi)) and math.isfinite(e)):
        raise ValueError("non-finite input to the parameter update")
    return theta - lambda_gamma * kappa * (gamma @ phi) * e / (1.0 + phi @ phi)


def compute_gamma_bar(gamma_prev, phi, lambda_gamma, kappa, check=False):
    """Rank-one corrected gain ``G - lg kappa G phi phi^T G / (1 + |phi|^2)``."""
    phi = np.asarray(phi, dtype=float)
    g_phi = gamma_prev @ phi
    out = symmetrize(gamma_prev - lambda_gamma * kappa * np.outer(g_phi, g_phi) / (1.0 + phi @ phi))
    if check:
        w = eigvals(out)
        if w[0] <= 0.0:
            raise LinalgError(f"Gamma_bar lost positive definiteness (min eigenvalue {w[0]:.3e})")
    return out


def compute_upsilon(gamma_prev, omega_prev, lambda_gamma, kappa, lambda_omega):
    return symmetrize(
        lambda_gamma * gamma_prev
        - lambda_gamma * kappa * (1.0 - lambda_omega) * gamma_prev @ omega_prev @ gamma_prev
    )


def compute_psi(gamma_bar, upsilon):
    """``Psi`` with ``(Gbar + U)^-1 = Gbar^-1 - Psi``.

    For ``U >= 0`` this is the symmetric form
    ``Gbar^-1 U^1/2 (I + U^1/2 Gbar^-1 U^1/2)^-1 U^1/2 Gbar^-1``. An
    indefinite ``U`` has no square root, so the Kailath form with ``B = U``
    and ``C = I`` is used instead; both give the same matrix when defined.
    """
    gb_inv = spd_inverse(gamma_bar, "Gamma_bar")
    n = len(gamma_bar)
    w = eigvals(upsilon)
    if w[0] >= -1e-12 * (1.0 + abs(w[-1])):
        root = spd_sqrt(upsilon)
        inner = np.eye(n) + root @ gb_inv @ root
        left = gb_inv @ root
        return symmetrize(left @ np.linalg.solve(inner, left.T))
    return symmetrize(gb_inv - kailath_inverse(gamma_bar, upsilon, np.eye(n)))


def lyapunov(theta_tilde, gamma_bar):
    """``theta~^T Gbar^-1 theta~``."""
    theta_tilde = np.asarray(theta_tilde, dtype=float)
    return float(theta_tilde @ spd_inverse(gamma_bar, "Gamma_bar") @ theta_tilde)


# -- state & step -----------------------------------------------------------------


@dataclass
class EstimatorState:
    theta: np.ndarray
    gamma: np.ndarray
    omega_state: OmegaState
    gamma_bar: np.ndarray
    k: int = 0
    last_phi: np.ndarray | None = None
    upsilon: np.ndarray | None = None
    clamped: bool = False

    @property
    def omega(self):
        return self.omega_state.omega

    @classmethod
    def initial(cls, dim, hp: Hyperparameters, theta0=None, gamma0=None, omega0=None, k=0):
        theta = np.zeros(dim) if theta0 is None else np.asarray(theta0, dtype=float).copy()
        gamma = hp.gamma_max * np.eye(dim) if gamma0 is None else symmetrize(np.asarray(gamma0, float))
        w = eigvals(gamma)
        if w[0] <= 0:
            raise GainDegenerationError(w)
        om = OmegaState.initial(dim, hp.lambda_omega, omega0, k)
        return cls(theta, gamma, om, gamma.copy(), k)


def step(state: EstimatorState, sample: RegressorSample, hp: Hyperparameters,
         theta_gain="previous", clamp=None, literal_index=False) -> EstimatorState:
    """Advance the estimator by one sample (see module docstring for the order).

    ``literal_index=True`` builds ``Gamma_bar`` from the previous sample's
    regressor instead of the current one; the decomposition identity then
    fails in general, which is why it is off by default.

    ``clamp=(lower, upper)`` projects the new gain's spectrum into that range;
    the runner only passes it for states outside the certified window.
    """
    phi = np.asarray(sample.phi, dtype=float)
    if phi.shape != state.theta.shape:
        raise ValueError(f"regressor shape {phi.shape} does not match theta {state.theta.shape}")
    lg, kp, lo = hp.lambda_gamma, hp.kappa, hp.lambda_omega
    e = float(phi @ state.theta) - sample.y
    omega_new = omega_step(state.omega, phi, lo)
    phi_bar = phi
    if literal_index:
        phi_bar = np.zeros_like(phi) if state.last_phi is None else state.last_phi
    gamma_bar = compute_gamma_bar(state.gamma, phi_bar, lg, kp)
    upsilon = compute_upsilon(state.gamma, state.omega, lg, kp, lo)
    gamma_new = gamma_step(state.gamma, omega_new, lg, kp)
    clamped = False
    if clamp is not None:
        w = eigvals(gamma_new)
        if w[0] < clamp[0] or w[-1] > clamp[1]:
            gamma_new = clamp_spectrum(gamma_new, *clamp)
            clamped = True
    w = eigvals(gamma_new)
    if w[0] <= 0.0:
        raise GainDegenerationError(w)
    if theta_gain == "previous":
        g_theta = state.gamma
    elif theta_gain == "updated":
        g_theta = gamma_new
    else:
        raise ValueError(f"theta_gain must be 'previous' or 'updated', got {theta_gain!r}")
    theta_new = update_theta(state.theta, g_theta, phi, e, lg, kp)
    om = OmegaState(omega_new, lo, state.omega_state.k + 1)
    return EstimatorState(theta_new, gamma_new, om, gamma_bar, state.k + 1, phi, upsilon, clamped)


# -- theorem constants ------------------------------------------------------------


@dataclass
class TheoremBounds:
    gamma_bar_min: float
    gamma_bar_max: float
    upsilon_min: float
    upsilon_max: float
    psi_min: float
    mu1: float
    mu2: float
    c1: float
    c2: float
    v_bound: float
    v_bound_alt: float
    delta_star: float
    theta_star_max: float
    mode: str = "PE"

    @property
    def contraction(self):
        return 1.0 - self.mu2

    def to_dict(self):
        return asdict(self)


def compact_set_radius_factor(c1, c2, mu1, mu2):
    """``(c1 + sqrt(c1^2 + 4 c2 (mu1 - mu2))) / (2 (mu1 - mu2))``."""
    gap = mu1 - mu2
    return (c1 + math.sqrt(c1 * c1 + 4.0 * c2 * gap)) / (2.0 * gap)


def theorem_bounds(hp: Hyperparameters, delta_star, theta_star_max, mu2_fraction=0.5) -> TheoremBounds:
    """Decay-rate and compact-set constants for a hyperparameter set."""
    if not 0.0 < mu2_fraction < 1.0:
        raise ValueError("mu2_fraction must lie in (0, 1)")
    if delta_star < 0 or theta_star_max < 0:
        raise ValueError("delta_star and theta_star_max must be non-negative")
    lg, kp, lo = hp.lambda_gamma, hp.kappa, hp.lambda_omega
    g_max, g_lo, w_hi = hp.gamma_max, hp.gamma_lower, hp.omega_upper
    if g_lo <= 0:
        raise InfeasibleError("gain lower bound is not positive")
    terms = kappa_max_terms(lo, lg, g_max, w_hi)

    gb_min = min(g_max - lg * kp * g_max**2, g_lo - lg * kp * g_lo**2)
    if gb_min <= 0:
        raise InfeasibleError(
            f"Gamma_bar lower bound {gb_min:.6g} <= 0: kappa={kp:.6g} violates the "
            f"kappa_max term 1/(lambda_gamma Gamma_max) = {terms['gamma_bar']:.6g}",
            details={"violated_term": "gamma_bar", "kappa_max_terms": terms},
        )
    gb_max = g_max
    shrink = kp * (1.0 - lo) * w_hi
    ups_min = min(lg * g_max * (1.0 - shrink * g_max), lg * g_lo * (1.0 - shrink * g_lo))
    if ups_min <= 0:
        raise InfeasibleError(
            f"Upsilon lower bound {ups_min:.6g} <= 0: kappa={kp:.6g} violates the kappa_max "
            f"term 1/((1-lambda_omega) Omega_max Gamma_max) = {terms['upsilon']:.6g}",
            details={"violated_term": "upsilon", "kappa_max_terms": terms},
        )
    ups_max = lg * g_max
    psi_min = ups_min / ((1.0 + lg * g_max / gb_min) * g_max**2)
    mu1 = psi_min * gb_min
    mu2 = mu2_fraction * mu1
    c1 = math.sqrt(gb_max) / gb_min
    c2 = 1.0 / gb_min
    factor = compact_set_radius_factor(c1, c2, mu1, mu2)
    v = (delta_star * factor) ** 2
    v_alt = 2.0 * delta_star * theta_star_max * factor**2
    return TheoremBounds(gb_min, gb_max, ups_min, ups_max, psi_min, mu1, mu2, c1, c2, v, v_alt,
                         float(delta_star), float(theta_star_max), hp.mode)


# -- running & monitoring -----------------------------------------------------------

TRACE_COLUMNS = (
    "k", "y", "y_hat", "e", "theta_err_norm", "V",
    "gamma_eig_min", "gamma_eig_max", "omega_eig_min", "omega_eig_max",
    "certified", "contracting",
)

CONTRACTION_SLACK = 1e-12


@dataclass
class TraceRecord:
    k: int
    y: float
    y_hat: float
    e: float
    theta_err_norm: float
    V: float
    gamma_eig_min: float
    gamma_eig_max: float
    omega_eig_min: float
    omega_eig_max: float
    certified: bool
    contracting: bool
    theta: np.ndarray = field(repr=False, default=None)
    theta_star: np.ndarray = field(repr=False, default=None)

    def row(self):
        return tuple(getattr(self, c) for c in TRACE_COLUMNS)


@dataclass
class RunResult:
    records: list
    final: EstimatorState
    window: tuple | None
    states: list | None = None
    clamped: int = 0

    def column(self, name):
        return np.array([getattr(r, name) for r in self.records])


def transition_certified(window, k):
    """Transition into state ``k`` is certified iff state ``k-1`` is in ``window``."""
    if window is None:
        return False
    lo, hi = window
    return k - 1 >= lo and (hi is None or k - 1 <= hi)


def run(samples, hp: Hyperparameters, bounds: TheoremBounds | None = None, window=None,
        theta0=None, gamma0=None, omega0=None, theta_gain="previous", clamp_window=None,
        keep_states=False, literal_index=False):
    """Run the estimator over ``samples`` and build a per-step trace.

    ``window`` is the certified state range ``(first, last)`` in the samples'
    own ``k`` indexing. With ``clamp_window=(first, last)`` the gain spectrum
    is projected into ``[gamma_lower, gamma_max]`` for every state outside
    that range: without excitation the gain grows geometrically, and the
    projection keeps it admissible until the certified regime starts.
    """
    samples = list(samples)
    if not samples:
        raise ValueError("no samples")
    dim = len(samples[0].phi)
    state = EstimatorState.initial(dim, hp, theta0, gamma0, omega0, k=samples[0].k)
    mu2 = bounds.mu2 if bounds is not None else 0.0
    records, states = [], []
    v_prev = None
    clamped = 0
    for s in samples:
        if s.k != state.k:
            raise ValueError(f"sample index {s.k} does not follow state index {state.k}")
        tt = state.theta - s.theta_star
        v = lyapunov(tt, state.gamma_bar)
        y_hat = float(s.phi @ state.theta)
        gw = eigvals(state.gamma)
        ow = eigvals(state.omega)
        contracting = True if v_prev is None else v <= (1.0 - mu2) * v_prev + CONTRACTION_SLACK
        records.append(TraceRecord(
            s.k, s.y, y_hat, y_hat - s.y, float(np.linalg.norm(tt)), v,
            float(gw[0]), float(gw[-1]), float(ow[0]), float(ow[-1]),
            transition_certified(window, s.k), bool(contracting),
            state.theta.copy(), np.asarray(s.theta_star, float).copy(),
        ))
        if keep_states:
            states.append(state)
        clamp = None
        if clamp_window is not None:
            nk, (lo, hi) = state.k + 1, clamp_window
            if nk < lo or (hi is not None and nk > hi):
                clamp = (hp.gamma_lower, hp.gamma_max)
        state = step(state, s, hp, theta_gain, clamp, literal_index)
        clamped += state.clamped
        v_prev = v
    return RunResult(records, state, window, states if keep_states else None, clamped)


@dataclass
class DecayReport:
    checked: int
    violations: list
    uncertified: list
    exempt: int
    envelope_start: int | None
    envelope_checked: int
    envelope_violations: list
    envelope_margin: float | None
    first_entry: int | None
    tail_sup: float | None
    v_bound: float
    contraction: float

    @property
    def ok(self):
        return not self.violations and not self.envelope_violations

    def to_dict(self):
        d = asdict(self)
        d["ok"] = self.ok
        d["violation_count"] = len(self.violations)
        d["uncertified_count"] = len(self.uncertified)
        d["uncertified"] = _ranges(self.uncertified)
        return d

    def summary(self):
        lines = [
            f"contraction factor (1 - mu2) = {self.contraction:.10g}, compact-set bound V = {self.v_bound:.6g}",
            f"certified steps checked: {self.checked}, exempt (inside compact set): {self.exempt}, "
            f"uncertified: {len(self.uncertified)}",
            f"step-form violations: {len(self.violations)}",
            f"envelope from k={self.envelope_start}: {self.envelope_checked} steps, "
            f"{len(self.envelope_violations)} violations, worst V/envelope = "
            + ("n/a" if self.envelope_margin is None else f"{self.envelope_margin:.6g}"),
        ]
        if self.first_entry is not None:
            lines.append(f"first entry into compact set at k={self.first_entry}, tail sup V = {self.tail_sup:.6g}")
        lines.append("VERIFIED" if self.ok else "VIOLATIONS FOUND")
        return "\n".join(lines)


def _ranges(ks):
    out = []
    for k in ks:
        if out and out[-1][1] == k - 1:
            out[-1][1] = k
        else:
            out.append([k, k])
    return out


def verify_decay(ks, vs, certified, bounds: TheoremBounds, slack=CONTRACTION_SLACK):
    """Check the step-form contraction and the exponential envelope.

    ``certified[i]`` says whether the transition into ``ks[i]`` lies inside
    the certified window. For certified steps with ``V[i-1] > v_bound`` the
    check is ``V[i] <= (1 - mu2) V[i-1] + slack``. The envelope
    ``V[i] <= (1 - mu2)^(k - k_s) V[k_s]`` is checked from the state ``k_s``
    preceding the first certified transition, up to the first entry into the
    compact set.
    """
    ks = list(ks)
    vs = [float(v) for v in vs]
    certified = [bool(c) for c in certified]
    rho = 1.0 - bounds.mu2
    vb = bounds.v_bound
    violations, uncertified = [], []
    checked = exempt = 0
    for i in range(1, len(ks)):
        if not certified[i]:
            uncertified.append(ks[i])
            continue
        if vs[i - 1] <= vb:
            exempt += 1
            continue
        checked += 1
        if vs[i] > rho * vs[i - 1] + slack:
            violations.append({"k": ks[i], "V_prev": vs[i - 1], "V": vs[i], "limit": rho * vs[i - 1]})

    env_start = env_checked = None
    env_violations = []
    margin = None
    first_entry = tail_sup = None
    first_cert = next((i for i in range(1, len(ks)) if certified[i]), None)
    if first_cert is not None:
        i0 = first_cert - 1
        env_start = ks[i0]
        env_checked = 0
        v0 = vs[i0]
        for i in range(i0, len(ks)):
            if i > i0 and not certified[i]:
                break
            if vb > 0 and vs[i] <= vb:
                first_entry = ks[i]
                tail_sup = max(vs[i:_window_end(certified, i)])
                break
            env = rho ** (ks[i] - ks[i0]) * v0
            env_checked += 1
            if vs[i] > env + slack:
                env_violations.append({"k": ks[i], "V": vs[i], "envelope": env})
            if env > 0:
                r = vs[i] / env
                margin = r if margin is None else max(margin, r)
    return DecayReport(checked, violations, uncertified, exempt, env_start, env_checked or 0,
                       env_violations, margin, first_entry, tail_sup, vb, rho)


def _window_end(certified, i):
    j = i + 1
    while j < len(certified) and certified[j]:
        j += 1
    return j


def verify_run(result: RunResult, bounds: TheoremBounds):
    return verify_decay([r.k for r in result.records], [r.V for r in result.records],
                        [r.certified for r in result.records], bounds)
