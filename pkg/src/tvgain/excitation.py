"""Excitation detection and the information-matrix recursion.

Index convention: the information matrix ``Omega_k`` has absorbed samples
``0 .. k-1``. A PE regime whose first full window starts at sample ``k1``
therefore certifies ``Omega_k`` from ``k2 = k1 + window`` on; an FE interval
``[k1, k2]`` certifies ``Omega_k`` from ``k2 + 1`` on.

The Omega lower bounds hold for the excitation level of the *normalized*
regressor ``phi / sqrt(1 + |phi|^2)``, since that is what the recursion
accumulates. The detectors accept ``normalized=True`` for that reason.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .linalg import eigvals, symmetrize


# levels at or below this are treated as no excitation
MIN_LEVEL = 1e-9
DEFAULT_FE_LEN = 200


class ExcitationError(ValueError):
    pass


def normalize(phis):
    """Row-wise ``phi / sqrt(1 + |phi|^2)``."""
    phis = np.atleast_2d(np.asarray(phis, dtype=float))
    return phis / np.sqrt(1.0 + np.sum(phis**2, axis=1))[:, None]


def _as_stream(phis, normalized):
    phis = np.asarray(phis, dtype=float)
    if phis.ndim == 1:
        phis = phis[:, None]
    if phis.ndim != 2:
        raise ExcitationError("regressor stream must be a (T, N) array")
    if not np.all(np.isfinite(phis)):
        raise ExcitationError("regressor stream has non-finite entries")
    return normalize(phis) if normalized else phis


# -- Omega recursion -----------------------------------------------------------


@dataclass
class OmegaState:
    omega: np.ndarray
    lambda_omega: float
    k: int = 0

    @classmethod
    def initial(cls, dim, lambda_omega, omega0=None, k=0):
        if not 0.0 < lambda_omega < 1.0:
            raise ExcitationError("lambda_omega must lie in (0, 1)")
        omega = np.eye(dim) if omega0 is None else symmetrize(np.asarray(omega0, float))
        return cls(omega, float(lambda_omega), k)


def omega_step(omega, phi, lambda_omega):
    """Bare recursion ``(1 - l) Omega + phi phi^T / (1 + |phi|^2)``."""
    phi = np.asarray(phi, dtype=float)
    return symmetrize((1.0 - lambda_omega) * omega + np.outer(phi, phi) / (1.0 + phi @ phi))


def update_omega(state: OmegaState, phi) -> OmegaState:
    phi = np.asarray(phi, dtype=float)
    if phi.shape != (state.omega.shape[0],):
        raise ExcitationError(f"regressor shape {phi.shape} does not match Omega {state.omega.shape}")
    if not np.all(np.isfinite(phi)):
        raise ExcitationError("non-finite regressor")
    return OmegaState(omega_step(state.omega, phi, state.lambda_omega), state.lambda_omega, state.k + 1)


def omega_trajectory(phis, lambda_omega, omega0=None):
    """All iterates ``Omega_0 .. Omega_T`` stacked as a ``(T + 1, N, N)`` array."""
    phis = _as_stream(phis, normalized=False)
    t, n = phis.shape
    out = np.empty((t + 1, n, n))
    out[0] = np.eye(n) if omega0 is None else omega0
    outer = phis[:, :, None] * phis[:, None, :] / (1.0 + np.sum(phis**2, axis=1))[:, None, None]
    decay = 1.0 - lambda_omega
    for i in range(t):
        out[i + 1] = decay * out[i] + outer[i]
    return out


# -- detectors -----------------------------------------------------------------


def _window_grams(phis, window):
    # direct sums per window; prefix-sum differences leave cancellation
    # residue that masks rank deficiency on long streams
    view = np.lib.stride_tricks.sliding_window_view(phis, window, axis=0)
    return np.einsum("tiw,tjw->tij", view, view)


def window_levels(phis, window, normalized=False):
    """``lambda_min`` of every length-``window`` Gram sum; entry ``j`` covers samples ``j .. j+window-1``."""
    if window < 1:
        raise ExcitationError("window must be >= 1")
    phis = _as_stream(phis, normalized)
    if len(phis) < window:
        raise ExcitationError(f"stream of length {len(phis)} is shorter than window {window}")
    grams = _window_grams(phis, window)
    return np.linalg.eigvalsh(0.5 * (grams + np.swapaxes(grams, 1, 2)))[:, 0]


def check_pe(phis, window, alpha, normalized=False):
    """Every length-``window`` window of ``phis`` has Gram ``lambda_min >= alpha``."""
    if alpha <= 0:
        raise ExcitationError("alpha must be positive")
    return bool(np.all(window_levels(phis, window, normalized) >= alpha))


def check_fe(phis, k1, k2, alpha, normalized=False):
    """Gram sum over samples ``k1 .. k2`` (inclusive) has ``lambda_min >= alpha``."""
    phis = _as_stream(phis, normalized)
    if not (0 <= k1 and k2 >= k1 + 1 and k2 < len(phis)):
        raise ExcitationError(f"interval [{k1}, {k2}] invalid for a stream of length {len(phis)}")
    seg = phis[k1 : k2 + 1]
    return bool(eigvals(seg.T @ seg)[0] >= alpha)


def measure_alpha(phis, window, start=0, normalized=True):
    """Largest level at which ``phis[start:]`` is PE for the given window."""
    phis = _as_stream(phis, normalized)
    return float(np.min(window_levels(phis[start:], window)))


def fe_level(phis, k1, k2, normalized=True):
    phis = _as_stream(phis, normalized)
    seg = phis[k1 : k2 + 1]
    return float(eigvals(seg.T @ seg)[0])


def best_fe_interval(phis, lambda_omega, max_len=None, normalized=True, min_level=MIN_LEVEL):
    """FE interval maximizing the first certified Omega bound ``alpha (1 - l)^(k2 - k1)``.

    Interval lengths up to ``max_len`` (default ``DEFAULT_FE_LEN``) are
    scanned. Returns ``(k1, k2, alpha)`` or ``None`` if no interval reaches
    ``min_level``.
    """
    phis = _as_stream(phis, normalized)
    t = len(phis)
    max_len = min(DEFAULT_FE_LEN if max_len is None else max_len, t)
    best = None
    decay = math.log(1.0 - lambda_omega)
    for length in range(2, max_len + 1):
        grams = _window_grams(phis, length)
        lev = np.linalg.eigvalsh(0.5 * (grams + np.swapaxes(grams, 1, 2)))[:, 0]
        j = int(np.argmax(lev))
        if lev[j] <= min_level:
            continue
        score = math.log(lev[j]) + (length - 1) * decay
        if best is None or score > best[0]:
            best = (score, j, j + length - 1, float(lev[j]))
    if best is None:
        return None
    return best[1], best[2], best[3]


# -- Omega bound constants -----------------------------------------------------


def omega_max(lambda_omega):
    _check_lambda(lambda_omega)
    return 1.0 / lambda_omega


def omega_pe(lambda_omega, alpha, window):
    _check_lambda(lambda_omega)
    if alpha <= 0 or window < 1:
        raise ExcitationError("alpha must be positive and window >= 1")
    return (1.0 - lambda_omega) ** (window - 1) * alpha


def omega_fe(lambda_omega, alpha, k1, k3):
    """Stated FE constant ``alpha * l * (1 - l)^(k3 - k1 - 1)``."""
    _check_lambda(lambda_omega)
    if alpha <= 0 or k3 < k1 + 2:
        raise ExcitationError("alpha must be positive and k3 >= k1 + 2")
    return alpha * lambda_omega * (1.0 - lambda_omega) ** (k3 - k1 - 1)


def omega_fe_path(lambda_omega, alpha, k1, k):
    """Pointwise FE bound ``alpha (1 - l)^(k - k1 - 1)`` on ``lambda_min(Omega_k)``."""
    return alpha * (1.0 - lambda_omega) ** (k - k1 - 1)


def fe_horizon(lambda_omega, alpha, k1, k2, floor):
    """Largest ``k3 > k2`` whose pointwise FE bound stays at or above ``floor``."""
    _check_lambda(lambda_omega)
    if floor <= 0:
        raise ExcitationError("floor must be positive")
    if alpha < floor:
        raise ExcitationError("alpha is below the requested floor")
    # alpha (1-l)^(k-k1-1) >= floor  <=>  k <= k1 + 1 + log(floor/alpha) / log(1-l)
    k3 = k1 + 1 + math.floor(math.log(floor / alpha) / math.log(1.0 - lambda_omega) + 1e-12)
    return max(k3, k2 + 1)


def omega_bounds(mode, lambda_omega, alpha, window=None, k1=None, k3=None):
    """``(lower, upper)`` Omega bound constants for a PE or FE regime."""
    upper = omega_max(lambda_omega)
    if mode == "PE":
        lower = omega_pe(lambda_omega, alpha, window)
    elif mode == "FE":
        lower = omega_fe(lambda_omega, alpha, k1, k3)
    else:
        raise ExcitationError(f"mode must be 'PE' or 'FE', got {mode!r}")
    return lower, upper


def _check_lambda(lambda_omega):
    if not 0.0 < lambda_omega < 1.0:
        raise ExcitationError("lambda_omega must lie in (0, 1)")


# -- report ---------------------------------------------------------------------


@dataclass
class ExcitationReport:
    """Excitation verdict for a regressor stream.

    ``interval`` is ``[k1, k2]``: for PE, ``k1`` is the first sample of the
    certified regime and ``k2 = k1 + window``; for FE it is the excited
    sample interval. ``k3`` closes the FE certification window.
    ``omega_lower``/``omega_upper`` are filled by :meth:`at` for a specific
    ``lambda_omega``. ``alpha`` is the level of the normalized regressor
    (the one the Omega bounds use); ``alpha_raw`` is the level of the raw
    stream over the same window or interval, for reference.
    """

    mode: str
    alpha: float = 0.0
    window: int = 1
    interval: tuple[int, int] = (0, 0)
    k3: int | None = None
    lambda_omega: float | None = None
    omega_lower: float | None = None
    omega_upper: float | None = None
    alpha_raw: float | None = None

    def __post_init__(self):
        if self.mode not in ("PE", "FE", "none"):
            raise ExcitationError(f"unknown mode {self.mode!r}")
        self.interval = tuple(int(i) for i in self.interval)

    def at(self, lambda_omega, k3=None):
        """Copy with Omega bounds evaluated at ``lambda_omega``."""
        if self.mode == "none":
            raise ExcitationError("no excitation: Omega has no certified lower bound")
        k3 = self.k3 if k3 is None else k3
        if self.mode == "FE" and k3 is None:
            raise ExcitationError("FE report needs k3 to evaluate its bound")
        lo, hi = omega_bounds(self.mode, lambda_omega, self.alpha, self.window, self.interval[0], k3)
        return ExcitationReport(self.mode, self.alpha, self.window, self.interval, k3, lambda_omega, lo, hi,
                                self.alpha_raw)

    @property
    def validity(self):
        """Certified range of state indices ``[start, end]`` (end ``None`` = unbounded)."""
        if self.mode == "PE":
            return self.interval[0] + self.window, None
        if self.mode == "FE":
            return self.interval[1] + 1, self.k3
        return None

    def certified(self, k):
        v = self.validity
        if v is None:
            return False
        lo, hi = v
        return k >= lo and (hi is None or k <= hi)

    def to_dict(self):
        d = asdict(self)
        d["interval"] = list(self.interval)
        d["validity"] = list(self.validity) if self.validity else None
        return d

    @classmethod
    def from_dict(cls, d):
        d = {k: v for k, v in d.items() if k != "validity"}
        return cls(**d)


def detect(phis, windows=(1, 2, 3, 4, 5, 6, 8, 10), lambda_omega=0.5, start=0,
           alpha_grid=None, fe_floor=None, max_fe_len=None, min_level=MIN_LEVEL):
    """Best certified excitation of a regressor stream.

    PE is tried first over the candidate ``windows``; the one maximizing the
    Omega lower bound at ``lambda_omega`` wins. Without PE, the best FE
    interval is reported. ``alpha_grid`` snaps a measured level down to the
    largest grid value not above it. Levels at or below ``min_level`` count
    as no excitation.
    """
    phis = _as_stream(phis, normalized=False)[start:]
    if len(phis) < 2:
        raise ExcitationError("stream too short for excitation analysis")

    def snap(a):
        if alpha_grid is None:
            return a
        ok = [g for g in alpha_grid if 0 < g <= a]
        return max(ok) if ok else 0.0

    best = None
    for w in windows:
        if w > len(phis):
            continue
        a = snap(measure_alpha(phis, w))
        if a <= min_level:
            continue
        lo = omega_pe(lambda_omega, a, w)
        if best is None or lo > best[0]:
            best = (lo, a, w)
    if best is not None:
        _, a, w = best
        raw = float(np.min(window_levels(phis, w)))
        rep = ExcitationReport("PE", a, w, (start, start + w), alpha_raw=raw)
        return rep.at(lambda_omega)

    fe = best_fe_interval(phis, lambda_omega, max_fe_len, min_level=min_level)
    if fe is not None:
        k1, k2, a = fe
        a = snap(a)
        if a > min_level:
            k1, k2 = k1 + start, k2 + start
            floor = fe_floor if fe_floor is not None else a * (1.0 - lambda_omega) ** (k2 - k1 + 1)
            k3 = fe_horizon(lambda_omega, a, k1, k2, min(floor, a))
            raw = fe_level(phis, k1 - start, k2 - start, normalized=False)
            rep = ExcitationReport("FE", a, k2 - k1, (k1, k2), k3, alpha_raw=raw)
            return rep.at(lambda_omega)
    return ExcitationReport("none")
