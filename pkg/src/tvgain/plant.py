"""Time-varying ARMA-class plant, regressor construction and parameter paths.

Sign convention
---------------
The difference equation is usually written with ``-a_i * y[k-i]`` terms.
Here the parameter vector stores the *signed* coefficient, so the first
``n`` entries of ``theta`` are ``-a_i``, and ``y[k] = phi[k] @ theta[k]``
holds exactly. :func:`arma_theta` builds such a vector from ``(a, b, c)``.

Regressor layout: ``[y[k-1..k-n], u[k-1-d..k-m-d], f_1, ..., f_p]``.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class PlantError(RuntimeError):
    pass


class BlowUpError(PlantError):
    """Output exceeded the guard or a basis term went non-finite."""


class HorizonError(PlantError):
    pass


# -- nonlinear basis ------------------------------------------------------------

BASIS_KINDS = ("poly", "tanh", "sin", "product")


@dataclass(frozen=True)
class Lagged:
    """A lagged signal reference: ``y[k-lag]`` or ``u[k-lag-d]``."""

    signal: str
    lag: int

    def __post_init__(self):
        if self.signal not in ("y", "u"):
            raise ValueError(f"signal must be 'y' or 'u', got {self.signal!r}")
        if self.lag < 1:
            raise ValueError("lag must be >= 1")


@dataclass(frozen=True)
class BasisTerm:
    """One nonlinear basis function.

    ``poly`` raises ``arg`` to ``degree`` (1..3), ``tanh``/``sin`` apply the
    function to ``arg``, ``product`` multiplies ``arg`` and ``other``.
    """

    kind: str
    arg: Lagged
    degree: int = 1
    other: Lagged | None = None

    def __post_init__(self):
        if self.kind not in BASIS_KINDS:
            raise ValueError(f"unknown basis kind {self.kind!r}")
        if self.kind == "poly" and not 1 <= self.degree <= 3:
            raise ValueError("polynomial degree must be 1..3")
        if self.kind == "product" and self.other is None:
            raise ValueError("product basis needs a second signal")

    def lags(self):
        return [self.arg] + ([self.other] if self.other is not None else [])

    def __call__(self, value):
        x = value(self.arg)
        if self.kind == "poly":
            return x**self.degree
        if self.kind == "tanh":
            return math.tanh(x)
        if self.kind == "sin":
            return math.sin(x)
        return x * value(self.other)

    @classmethod
    def from_dict(cls, d):
        def lagged(x):
            return Lagged(x["signal"], int(x["lag"]))

        other = d.get("other")
        return cls(
            kind=d["kind"],
            arg=lagged(d["arg"]),
            degree=int(d.get("degree", 1)),
            other=lagged(other) if other is not None else None,
        )

    def to_dict(self):
        d = {"kind": self.kind, "arg": {"signal": self.arg.signal, "lag": self.arg.lag}}
        if self.kind == "poly":
            d["degree"] = self.degree
        if self.other is not None:
            d["other"] = {"signal": self.other.signal, "lag": self.other.lag}
        return d


@dataclass(frozen=True)
class PlantConfig:
    n: int = 0
    m: int = 1
    d: int = 0
    basis: tuple[BasisTerm, ...] = ()
    guard: float = 1e9

    def __post_init__(self):
        if self.n < 0 or self.m < 0 or self.d < 0:
            raise ValueError("orders and delay must be non-negative")
        if self.dim < 1:
            raise ValueError("regressor dimension n + m + p must be >= 1")

    @property
    def p(self):
        return len(self.basis)

    @property
    def dim(self):
        return self.n + self.m + self.p

    @property
    def y_depth(self):
        lags = [t.lag for b in self.basis for t in b.lags() if t.signal == "y"]
        return max([self.n] + lags)

    @property
    def u_depth(self):
        lags = [t.lag for b in self.basis for t in b.lags() if t.signal == "u"]
        deepest = max([self.m] + lags)
        return deepest + self.d if deepest else 0

    @property
    def warmup(self):
        """Steps run on zero-padded history before samples are recorded."""
        return max(self.y_depth, self.u_depth)

    @classmethod
    def from_dict(cls, d):
        return cls(
            n=int(d.get("n", 0)),
            m=int(d.get("m", 1)),
            d=int(d.get("d", 0)),
            basis=tuple(BasisTerm.from_dict(b) for b in d.get("basis", ())),
            guard=float(d.get("guard", 1e9)),
        )

    def to_dict(self):
        return {
            "n": self.n,
            "m": self.m,
            "d": self.d,
            "p": self.p,
            "basis": [b.to_dict() for b in self.basis],
            "guard": self.guard,
        }


def arma_theta(a: Sequence[float] = (), b: Sequence[float] = (), c: Sequence[float] = ()):
    """Parameter vector for ``y = -sum a_i y[k-i] + sum b_j u[k-j-d] + sum c_l f_l``."""
    return np.concatenate([-np.asarray(a, float), np.asarray(b, float), np.asarray(c, float)])


@dataclass(frozen=True)
class RegressorSample:
    k: int
    phi: np.ndarray
    y: float
    u: float
    theta_star: np.ndarray


def build_regressor(config: PlantConfig, y_hist, u_hist):
    """Regressor from newest-first histories ``y_hist[i] = y[k-1-i]``, ``u_hist[i] = u[k-1-i]``."""
    if len(y_hist) < config.y_depth or len(u_hist) < config.u_depth:
        raise PlantError(
            f"insufficient history: need {config.y_depth} outputs and "
            f"{config.u_depth} inputs, got {len(y_hist)} and {len(u_hist)}"
        )

    def value(ref):
        if ref.signal == "y":
            return float(y_hist[ref.lag - 1])
        return float(u_hist[ref.lag - 1 + config.d])

    z = [float(y_hist[i]) for i in range(config.n)]
    v = [float(u_hist[j + config.d]) for j in range(config.m)]
    f = []
    for term in config.basis:
        try:
            fx = term(value)
        except OverflowError:
            fx = math.inf
        if not math.isfinite(fx):
            raise BlowUpError(f"basis term {term.kind} produced a non-finite value")
        f.append(fx)
    return np.array(z + v + f, dtype=float)


def step_plant(config: PlantConfig, y_hist, u_hist, theta_star):
    """One plant step. Returns ``(y_k, phi_k)``; the caller updates history."""
    theta_star = np.asarray(theta_star, dtype=float)
    if theta_star.shape != (config.dim,):
        raise ValueError(f"theta_star must have shape ({config.dim},), got {theta_star.shape}")
    phi = build_regressor(config, y_hist, u_hist)
    y = float(phi @ theta_star)
    if not math.isfinite(y) or abs(y) > config.guard:
        raise BlowUpError(f"|y| = {abs(y):.3e} exceeds guard {config.guard:.3e}")
    return y, phi


def predict(phi, theta):
    phi = np.asarray(phi, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if phi.shape != theta.shape:
        raise ValueError(f"dimension mismatch {phi.shape} vs {theta.shape}")
    return float(phi @ theta)


def prediction_error(y_hat, y):
    return y_hat - y


class Plant:
    """Stateful plant simulator with zero-padded history."""

    def __init__(self, config: PlantConfig):
        self.config = config
        self.k = 0
        self._y = deque([0.0] * config.y_depth, maxlen=max(config.y_depth, 1))
        self._u = deque([0.0] * config.u_depth, maxlen=max(config.u_depth, 1))

    def step(self, u_k, theta_star_k):
        y, phi = step_plant(self.config, self._y, self._u, theta_star_k)
        self._y.appendleft(y)
        self._u.appendleft(float(u_k))
        sample = RegressorSample(self.k, phi, y, float(u_k), np.asarray(theta_star_k, float).copy())
        self.k += 1
        return sample


# -- parameter trajectories -----------------------------------------------------

TRAJECTORY_KINDS = ("constant", "ramp", "sinusoid", "piecewise-constant", "random-walk-clipped")


@dataclass
class ParamTrajectory:
    """Deterministic generator for ``theta*_k`` over ``0 <= k < horizon``.

    Per-kind fields:

    * ``constant``: ``base``.
    * ``ramp``: ``base + slope * k``.
    * ``sinusoid``: ``base + amplitude * direction * sin(omega * k + phase)``.
    * ``piecewise-constant``: ``base``, plus ``jumps``, a list of
      ``(k0, vector)`` added from step ``k0`` on.
    * ``random-walk-clipped``: steps of norm ``step_size`` in random
      directions (seeded), radially clipped to ``clip`` around ``base``.

    ``delta_star`` and ``theta_max`` are the exact maxima over the horizon of
    ``||theta*_k - theta*_{k-1}||`` and ``||theta*_k||``; they are computed
    at construction and double as certificates.
    """

    kind: str
    base: np.ndarray
    horizon: int
    slope: np.ndarray | None = None
    amplitude: float = 0.0
    direction: np.ndarray | None = None
    omega: float = 0.0
    phase: float = 0.0
    jumps: list = field(default_factory=list)
    step_size: float = 0.0
    clip: float = np.inf
    seed: int = 0
    delta_star: float = field(init=False)
    theta_max: float = field(init=False)

    def __post_init__(self):
        if self.kind not in TRAJECTORY_KINDS:
            raise ValueError(f"unknown trajectory kind {self.kind!r}")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        self.base = np.asarray(self.base, dtype=float)
        if self.slope is not None:
            self.slope = np.asarray(self.slope, dtype=float)
        if self.direction is not None:
            self.direction = np.asarray(self.direction, dtype=float)
        elif self.kind == "sinusoid":
            self.direction = np.ones_like(self.base)
        self.jumps = [(int(k0), np.asarray(j, dtype=float)) for k0, j in self.jumps]
        self._path = self._generate()
        diffs = np.diff(self._path, axis=0)
        # rounded up one ulp so per-step norms computed elsewhere never exceed them
        ds = float(np.max(np.linalg.norm(diffs, axis=1))) if len(diffs) else 0.0
        self.delta_star = float(np.nextafter(ds, np.inf)) if ds > 0 else 0.0
        self.theta_max = float(np.nextafter(np.max(np.linalg.norm(self._path, axis=1)), np.inf))

    def _generate(self):
        k = np.arange(self.horizon, dtype=float)[:, None]
        if self.kind == "constant":
            return np.repeat(self.base[None, :], self.horizon, axis=0)
        if self.kind == "ramp":
            return self.base + k * self.slope
        if self.kind == "sinusoid":
            return self.base + self.amplitude * self.direction * np.sin(self.omega * k + self.phase)
        if self.kind == "piecewise-constant":
            path = np.repeat(self.base[None, :], self.horizon, axis=0)
            for k0, jump in self.jumps:
                path[k0:] += jump
            return path
        rng = np.random.default_rng(self.seed)
        path = np.empty((self.horizon, self.base.size))
        cur = self.base.copy()
        for i in range(self.horizon):
            path[i] = cur
            step = rng.standard_normal(self.base.size)
            step *= self.step_size / max(np.linalg.norm(step), 1e-300)
            nxt = cur + step
            off = nxt - self.base
            r = np.linalg.norm(off)
            if r > self.clip:
                nxt = self.base + off * (self.clip / r)
            cur = nxt
        return path

    def sinusoid_delta_bound(self):
        """Closed-form per-step variation bound ``A ||dir|| 2 sin(omega/2)``."""
        return abs(self.amplitude) * float(np.linalg.norm(self.direction)) * 2.0 * abs(math.sin(self.omega / 2.0))

    def __call__(self, k):
        if not 0 <= k < self.horizon:
            raise HorizonError(f"step {k} outside trajectory horizon [0, {self.horizon})")
        return self._path[k].copy()

    @property
    def path(self):
        return self._path.copy()

    @classmethod
    def from_dict(cls, d, horizon):
        kw = {k: v for k, v in d.items() if k not in ("kind", "base")}
        return cls(kind=d["kind"], base=np.asarray(d["base"], float), horizon=horizon, **kw)


def gen_trajectory(traj: ParamTrajectory, k):
    return traj(k)
