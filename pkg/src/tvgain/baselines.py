"""Textbook comparison estimators: RLS, RLS with forgetting, normalized gradient."""

import numpy as np


class RLS:
    """Recursive least squares with an optional constant forgetting factor.

    ``forgetting=1`` is the vanilla algorithm whose gain ``P`` decays to zero
    under persistent excitation.
    """

    def __init__(self, dim, forgetting=1.0, p0=1.0, theta0=None):
        if not 0.0 < forgetting <= 1.0:
            raise ValueError("forgetting factor must lie in (0, 1]")
        self.forgetting = forgetting
        self.P = p0 * np.eye(dim)
        self.theta = np.zeros(dim) if theta0 is None else np.asarray(theta0, float).copy()

    @property
    def gain(self):
        return self.P

    def update(self, phi, y):
        phi = np.asarray(phi, dtype=float)
        p_phi = self.P @ phi
        g = p_phi / (self.forgetting + phi @ p_phi)
        self.theta = self.theta + g * (y - phi @ self.theta)
        self.P = (self.P - np.outer(g, p_phi)) / self.forgetting
        self.P = 0.5 * (self.P + self.P.T)
        return self.theta


class NormalizedGradient:
    """``theta += mu phi (y - phi^T theta) / (1 + |phi|^2)`` with a constant step."""

    def __init__(self, dim, mu=0.5, theta0=None):
        self.mu = mu
        self.theta = np.zeros(dim) if theta0 is None else np.asarray(theta0, float).copy()
        self._gain = mu * np.eye(dim)

    @property
    def gain(self):
        return self._gain

    def update(self, phi, y):
        phi = np.asarray(phi, dtype=float)
        self.theta = self.theta + self.mu * phi * (y - phi @ self.theta) / (1.0 + phi @ phi)
        return self.theta
