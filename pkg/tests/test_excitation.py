import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tvgain.excitation import (
    ExcitationError,
    ExcitationReport,
    OmegaState,
    check_fe,
    check_pe,
    detect,
    fe_horizon,
    measure_alpha,
    normalize,
    omega_bounds,
    omega_fe,
    omega_max,
    omega_pe,
    omega_trajectory,
    update_omega,
    window_levels,
)
from tvgain.linalg import sym_eigen


def brute_levels(phis, window):
    out = []
    for j in range(len(phis) - window + 1):
        g = sum(np.outer(p, p) for p in phis[j : j + window])
        out.append(np.linalg.eigvalsh(g)[0])
    return np.array(out)


def alternating(n_steps):
    e = np.eye(2)
    return np.array([e[i % 2] for i in range(n_steps)])


class TestUpdateOmega:
    def test_zero_regressor(self):
        s = update_omega(OmegaState.initial(2, 0.5), np.zeros(2))
        np.testing.assert_allclose(s.omega, 0.5 * np.eye(2))
        assert s.k == 1

    def test_unit_regressor(self):
        s = update_omega(OmegaState.initial(2, 0.5), np.array([1.0, 0.0]))
        np.testing.assert_allclose(s.omega, np.diag([1.0, 0.5]))

    def test_random_walk_bounds(self):
        rng = np.random.default_rng(0)
        s = OmegaState.initial(3, 0.25)
        for _ in range(10_000):
            s = update_omega(s, rng.standard_normal(3) * rng.uniform(0, 10))
            w = sym_eigen(s.omega).eigenvalues
            assert w[0] >= -1e-12 and w[-1] <= 4.0 + 1e-9

    def test_rejects_bad_input(self):
        s = OmegaState.initial(2, 0.5)
        with pytest.raises(ExcitationError):
            update_omega(s, np.array([np.inf, 0.0]))
        with pytest.raises(ExcitationError):
            update_omega(s, np.ones(3))
        with pytest.raises(ExcitationError):
            OmegaState.initial(2, 1.0)

    def test_trajectory_matches_steps(self):
        rng = np.random.default_rng(1)
        phis = rng.standard_normal((50, 2))
        traj = omega_trajectory(phis, 0.3)
        s = OmegaState.initial(2, 0.3)
        for i, p in enumerate(phis):
            s = update_omega(s, p)
            np.testing.assert_allclose(traj[i + 1], s.omega, atol=1e-14)


class TestCheckPE:
    def test_alternating(self):
        assert check_pe(alternating(20), 2, 1.0)

    def test_rank_deficient(self):
        phis = np.tile([1.0, 0.0], (20, 1))
        for w in (1, 2, 5):
            assert not check_pe(phis, w, 1e-12)

    def test_scaling(self):
        rng = np.random.default_rng(2)
        phis = rng.standard_normal((60, 3))
        a = brute_levels(phis, 6).min()
        assert check_pe(phis, 6, a)
        assert check_pe(3.0 * phis, 6, 9.0 * a * (1 - 1e-12))
        assert not check_pe(3.0 * phis, 6, 9.0 * a * (1 + 1e-9))

    def test_window_levels_match_brute_force(self):
        rng = np.random.default_rng(3)
        phis = rng.standard_normal((40, 3))
        for w in (1, 3, 7):
            np.testing.assert_allclose(window_levels(phis, w), brute_levels(phis, w), atol=1e-10)

    def test_errors(self):
        with pytest.raises(ExcitationError):
            check_pe(alternating(4), 0, 1.0)
        with pytest.raises(ExcitationError):
            check_pe(alternating(4), 5, 1.0)


class TestCheckFE:
    def test_basis_pair(self):
        assert check_fe(np.eye(2), 0, 1, 1.0)

    def test_zero_segment(self):
        assert not check_fe(np.zeros((5, 2)), 0, 4, 1e-12)

    def test_pe_implies_fe_on_every_window(self):
        rng = np.random.default_rng(4)
        phis = rng.standard_normal((30, 2))
        a = measure_alpha(phis, 4, normalized=False)
        assert check_pe(phis, 4, a)
        for j in range(len(phis) - 3):
            assert check_fe(phis, j, j + 3, a * (1 - 1e-12))

    def test_interval_errors(self):
        with pytest.raises(ExcitationError):
            check_fe(np.eye(2), 1, 1, 1.0)
        with pytest.raises(ExcitationError):
            check_fe(np.eye(2), 0, 2, 1.0)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), window=st.integers(1, 6), alpha=st.floats(1e-3, 3.0))
def test_pe_implies_fe_property(seed, window, alpha):
    phis = np.random.default_rng(seed).standard_normal((20, 2))
    if check_pe(phis, window, alpha) and window >= 2:
        for j in range(len(phis) - window + 1):
            assert check_fe(phis, j, j + window - 1, alpha)


class TestBounds:
    def test_omega_max(self):
        assert omega_max(0.5) == 2.0

    def test_omega_pe(self):
        assert omega_pe(0.5, 1.0, 2) == 0.5

    def test_omega_fe(self):
        assert omega_fe(0.5, 1.0, 0, 3) == pytest.approx(0.125)

    def test_fe_decreasing_in_k3(self):
        vals = [omega_fe(0.3, 2.0, 0, k3) for k3 in range(2, 12)]
        assert all(a > b for a, b in zip(vals, vals[1:]))

    def test_omega_bounds(self):
        assert omega_bounds("PE", 0.5, 1.0, window=2) == (0.5, 2.0)
        lo, hi = omega_bounds("FE", 0.5, 1.0, k1=0, k3=3)
        assert lo == pytest.approx(0.125) and hi == 2.0
        with pytest.raises(ExcitationError):
            omega_bounds("none", 0.5, 1.0)
        with pytest.raises(ExcitationError):
            omega_pe(1.5, 1.0, 2)
        with pytest.raises(ExcitationError):
            omega_fe(0.5, 1.0, 0, 1)

    def test_fe_horizon(self):
        # alpha (1-l)^(k-k1-1) >= floor
        k3 = fe_horizon(0.5, 1.0, 0, 1, 0.125)
        assert k3 == 4
        assert fe_horizon(0.5, 1.0, 0, 5, 0.9) == 6


def test_lemma2_random_streams():
    rng = np.random.default_rng(6)
    for lam in (0.1, 0.5, 0.9):
        phis = rng.standard_normal((2000, 3)) * rng.uniform(0, 20, (2000, 1))
        w = np.linalg.eigvalsh(omega_trajectory(phis, lam))
        assert w.min() >= -1e-9 and w.max() <= 1 / lam + 1e-9


def test_lemma3_bound_normalized_level():
    rng = np.random.default_rng(7)
    phis = rng.standard_normal((400, 2)) * 3.0
    lam, window = 0.4, 3
    a = measure_alpha(phis, window)
    w = np.linalg.eigvalsh(omega_trajectory(phis, lam))[:, 0]
    assert np.all(w[window:] >= omega_pe(lam, a, window) - 1e-9)


def test_normalize():
    np.testing.assert_allclose(normalize([[3.0, 4.0]]), [[3 / np.sqrt(26), 4 / np.sqrt(26)]])


class TestDetect:
    def test_alternating(self):
        rep = detect(alternating(40), windows=(2,), lambda_omega=0.5)
        assert rep.mode == "PE" and rep.window == 2
        # level of the normalized stream: each unit vector scales by 1/2
        assert rep.alpha == pytest.approx(0.5)
        assert rep.alpha_raw == pytest.approx(1.0)

    def test_alternating_raw_level(self):
        assert measure_alpha(alternating(40), 2, normalized=False) == pytest.approx(1.0)

    def test_constant_rank_deficient(self):
        assert detect(np.tile([1.0, 0.0], (40, 1))).mode == "none"

    def test_windowed_excitation_is_fe(self):
        rng = np.random.default_rng(8)
        phis = np.zeros((60, 2))
        phis[10:31] = rng.standard_normal((21, 2))
        rep = detect(phis, lambda_omega=0.5)
        assert rep.mode == "FE"
        k1, k2 = rep.interval
        assert 10 <= k1 < k2 <= 30
        # oracle: the reported level is the Gram eigenvalue of that interval
        seg = normalize(phis[k1 : k2 + 1])
        assert rep.alpha == pytest.approx(np.linalg.eigvalsh(seg.T @ seg)[0])

    def test_too_short(self):
        with pytest.raises(ExcitationError):
            detect(np.ones((1, 2)))

    def test_alpha_grid_snaps_down(self):
        rep = detect(alternating(40), windows=(2,), alpha_grid=[0.1, 0.25, 0.4, 0.75])
        assert rep.alpha == 0.4

    def test_report_round_trip(self):
        rep = detect(alternating(40), windows=(2,))
        back = ExcitationReport.from_dict(rep.to_dict())
        assert back == rep

    def test_validity(self):
        pe = ExcitationReport("PE", 1.0, 3, (5, 8))
        assert pe.validity == (8, None)
        assert pe.certified(8) and not pe.certified(7)
        fe = ExcitationReport("FE", 1.0, 2, (5, 7), 10)
        assert fe.validity == (8, 10)
        assert not fe.certified(11)
        assert not ExcitationReport("none").certified(3)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10_000), lam=st.floats(0.05, 0.95), dim=st.integers(2, 5))
def test_multi_dim_omega_floor_ceiling(seed, lam, dim):
    # the direction orthogonal to the newest regressor only decays, so for
    # N >= 2 lambda_min(Omega_k) <= (1 - lam) / lam once Omega_0 <= I / lam
    phis = np.random.default_rng(seed).standard_normal((50, dim)) * 5
    w = np.linalg.eigvalsh(omega_trajectory(phis, lam))[1:, 0]
    assert np.all(w <= (1 - lam) / lam + 1e-12)
