import numpy as np
import pytest

from tvgain.baselines import RLS, NormalizedGradient
from tvgain.signals import make_input


class TestInputs:
    def test_constant(self):
        np.testing.assert_array_equal(make_input({"kind": "constant", "amplitude": 2.5}, 4), [2.5] * 4)

    def test_prbs_levels_and_hold(self):
        u = make_input({"kind": "prbs", "amplitude": 3.0, "hold": 4}, 40, seed=1)
        assert set(np.unique(u)) <= {-3.0, 3.0}
        assert np.all(u.reshape(10, 4) == u.reshape(10, 4)[:, :1])

    def test_seeded(self):
        for kind in ("prbs", "white", "multisine"):
            a = make_input({"kind": kind}, 100, seed=7)
            b = make_input({"kind": kind}, 100, seed=7)
            c = make_input({"kind": kind}, 100, seed=8)
            np.testing.assert_array_equal(a, b)
            assert not np.array_equal(a, c)

    def test_multisine_closed_form(self):
        spec = {"kind": "multisine", "amplitude": 0.5, "frequencies": [0.2, 1.1], "phases": [0.0, 1.0]}
        k = np.arange(30)
        np.testing.assert_allclose(make_input(spec, 30), 0.5 * (np.sin(0.2 * k) + np.sin(1.1 * k + 1.0)))

    def test_white_bounded(self):
        u = make_input({"kind": "white", "amplitude": 2.0}, 1000, seed=3)
        assert np.abs(u).max() <= 2.0

    def test_gate_and_offset(self):
        u = make_input({"kind": "constant", "amplitude": 1.0, "offset": 1.0, "gate": [3, 5]}, 8)
        np.testing.assert_array_equal(u, [0, 0, 0, 2, 2, 0, 0, 0])

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            make_input({"kind": "chirp"}, 5)


def _stream(seed, n_steps=200, dim=3):
    rng = np.random.default_rng(seed)
    phis = rng.standard_normal((n_steps, dim))
    ys = phis @ rng.standard_normal(dim) + 0.1 * rng.standard_normal(n_steps)
    return phis, ys


class TestRLS:
    def test_matches_regularized_least_squares(self):
        phis, ys = _stream(0)
        est = RLS(3, p0=2.0)
        for k, (p, y) in enumerate(zip(phis, ys)):
            est.update(p, y)
            a, b = phis[: k + 1], ys[: k + 1]
            ref = np.linalg.solve(np.eye(3) / 2.0 + a.T @ a, a.T @ b)
            np.testing.assert_allclose(est.theta, ref, rtol=1e-9, atol=1e-12)

    def test_forgetting_matches_weighted_least_squares(self):
        phis, ys = _stream(1, 100)
        lam = 0.9
        est = RLS(3, forgetting=lam)
        for p, y in zip(phis, ys):
            est.update(p, y)
        n = len(ys)
        w = lam ** np.arange(n - 1, -1, -1)
        lhs = lam**n * np.eye(3) + (phis * w[:, None]).T @ phis
        ref = np.linalg.solve(lhs, (phis * w[:, None]).T @ ys)
        np.testing.assert_allclose(est.theta, ref, rtol=1e-8)

    def test_vanilla_gain_decreases_monotonically(self):
        phis, ys = _stream(2, 500)
        est = RLS(3)
        mins = []
        for p, y in zip(phis, ys):
            mins.append(np.linalg.eigvalsh(est.gain)[0])
            est.update(p, y)
        assert np.all(np.diff(mins) <= 1e-15)
        assert mins[-1] < 0.1 * mins[0]

    def test_bad_forgetting(self):
        with pytest.raises(ValueError):
            RLS(2, forgetting=1.5)


def test_normalized_gradient_step():
    est = NormalizedGradient(2, mu=0.5)
    est.update([1.0, 0.0], 2.0)
    np.testing.assert_allclose(est.theta, [0.5, 0.0])
    np.testing.assert_array_equal(est.gain, 0.5 * np.eye(2))
