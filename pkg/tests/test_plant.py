import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tvgain.plant import (
    BasisTerm,
    BlowUpError,
    HorizonError,
    Lagged,
    ParamTrajectory,
    Plant,
    PlantConfig,
    PlantError,
    arma_theta,
    build_regressor,
    gen_trajectory,
    predict,
    prediction_error,
    step_plant,
)


def test_zero_parameters_give_zero_output():
    cfg = PlantConfig(n=2, m=2, d=1)
    y, _ = step_plant(cfg, [1.5, -2.0], [0.3, 4.0, 7.0], np.zeros(4))
    assert y == 0.0


def test_arx_fixture():
    cfg = PlantConfig(n=1, m=1)
    y, phi = step_plant(cfg, [2.0], [3.0], [0.5, 1.0])
    np.testing.assert_array_equal(phi, [2.0, 3.0])
    assert y == 4.0


def test_tanh_basis_at_origin():
    cfg = PlantConfig(n=0, m=0, basis=(BasisTerm("tanh", Lagged("y", 1)),))
    y, phi = step_plant(cfg, [0.0], [], [1.3])
    np.testing.assert_array_equal(phi, [0.0])
    assert y == 0.0


def test_regressor_layout_with_delay():
    # y lags first, then delayed u lags, then basis terms
    cfg = PlantConfig(n=2, m=2, d=1, basis=(BasisTerm("poly", Lagged("u", 1), degree=2),
                                            BasisTerm("product", Lagged("y", 1), other=Lagged("u", 2))))
    y_hist = [1.0, 2.0]
    u_hist = [10.0, 20.0, 30.0]  # u[k-1], u[k-2], u[k-3]
    phi = build_regressor(cfg, y_hist, u_hist)
    np.testing.assert_array_equal(phi, [1.0, 2.0, 20.0, 30.0, 400.0, 30.0])


def test_insufficient_history():
    with pytest.raises(PlantError):
        build_regressor(PlantConfig(n=2, m=1), [1.0], [1.0])


def test_non_finite_basis_trips():
    cfg = PlantConfig(n=0, m=0, basis=(BasisTerm("poly", Lagged("y", 1), degree=3),))
    with pytest.raises(BlowUpError):
        build_regressor(cfg, [1e200], [])


def test_guard_trips():
    cfg = PlantConfig(n=1, m=1, guard=100.0)
    plant = Plant(cfg)
    with pytest.raises(BlowUpError):
        for _ in range(100):
            plant.step(1.0, [2.0, 1.0])


def test_config_validation():
    with pytest.raises(ValueError):
        PlantConfig(n=0, m=0)
    with pytest.raises(ValueError):
        PlantConfig(n=-1)
    with pytest.raises(ValueError):
        BasisTerm("poly", Lagged("y", 1), degree=4)
    with pytest.raises(ValueError):
        Lagged("x", 1)


def test_warmup_depths():
    assert PlantConfig(n=2, m=1, d=3).warmup == 4
    assert PlantConfig(n=3, m=1).warmup == 3
    assert PlantConfig(n=1, m=0).u_depth == 0
    cfg = PlantConfig(n=0, m=1, basis=(BasisTerm("sin", Lagged("u", 3)),))
    assert cfg.u_depth == 3


def test_config_round_trip():
    cfg = PlantConfig(n=1, m=2, d=1, basis=(BasisTerm("product", Lagged("y", 1), other=Lagged("u", 1)),
                                            BasisTerm("poly", Lagged("u", 2), degree=3)))
    back = PlantConfig.from_dict(cfg.to_dict())
    assert back == cfg


def test_arma_theta_sign_convention():
    # y_k = -a1 y_{k-1} + b1 u_{k-1}
    theta = arma_theta(a=[0.4], b=[2.0])
    cfg = PlantConfig(n=1, m=1)
    y, _ = step_plant(cfg, [1.0], [1.0], theta)
    assert y == pytest.approx(-0.4 + 2.0)


class TestPredict:
    def test_dot(self):
        assert predict([1.0, 2.0], [3.0, 4.0]) == 11.0

    def test_zeros(self):
        assert predict([1.0, 2.0], [0.0, 0.0]) == 0.0
        assert predict([0.0, 0.0], [3.0, 4.0]) == 0.0

    def test_mismatch(self):
        with pytest.raises(ValueError):
            predict([1.0], [1.0, 2.0])

    def test_prediction_error(self):
        assert prediction_error(5.0, 3.0) == 2.0
        assert prediction_error(0.0, 0.0) == 0.0


def test_regression_identity_along_simulation():
    cfg = PlantConfig(n=2, m=2, d=1, basis=(BasisTerm("tanh", Lagged("y", 1)),))
    rng = np.random.default_rng(4)
    theta_star = arma_theta([0.3, -0.1], [1.0, 0.5], [0.2])
    plant = Plant(cfg)
    for _ in range(500):
        s = plant.step(rng.uniform(-1, 1), theta_star)
        theta = rng.standard_normal(cfg.dim)
        e = prediction_error(predict(s.phi, theta), s.y)
        assert abs(e - s.phi @ (theta - theta_star)) <= 1e-12


def test_plant_deterministic():
    cfg = PlantConfig(n=1, m=2, basis=(BasisTerm("sin", Lagged("u", 1)),))
    theta = [0.5, 1.0, -0.3, 0.2]
    runs = []
    for _ in range(2):
        p = Plant(cfg)
        runs.append([p.step(math.sin(0.3 * k), theta).y for k in range(50)])
    assert runs[0] == runs[1]


class TestTrajectory:
    def test_constant(self):
        t = ParamTrajectory("constant", [1.0, -1.0], horizon=50)
        for k in range(50):
            np.testing.assert_array_equal(gen_trajectory(t, k), [1.0, -1.0])
        assert t.delta_star == 0.0
        assert t.theta_max == pytest.approx(math.sqrt(2))

    def test_sinusoid_certificate(self):
        t = ParamTrajectory("sinusoid", [0.5, 0.2], horizon=5000, amplitude=0.3,
                            direction=[1.0, -2.0], omega=0.05, phase=0.4)
        diffs = np.linalg.norm(np.diff(t.path, axis=0), axis=1)
        bound = t.sinusoid_delta_bound()
        assert bound == pytest.approx(0.3 * math.sqrt(5) * 2 * math.sin(0.025))
        assert diffs.max() <= bound + 1e-15
        assert diffs.max() >= 0.999 * bound
        assert t.delta_star == pytest.approx(diffs.max(), rel=1e-15)

    def test_piecewise(self):
        jump = [0.3, -0.4]
        t = ParamTrajectory("piecewise-constant", [1.0, 1.0], horizon=100, jumps=[(40, jump)])
        assert t.delta_star == pytest.approx(0.5)
        np.testing.assert_allclose(t(40) - t(39), jump)

    def test_ramp(self):
        t = ParamTrajectory("ramp", [0.0], horizon=10, slope=[0.1])
        assert t.delta_star == pytest.approx(0.1)
        assert t.theta_max == pytest.approx(0.9)

    def test_random_walk_clipped_seeded(self):
        a = ParamTrajectory("random-walk-clipped", [0.0, 0.0], 2000, step_size=0.05, clip=0.3, seed=1)
        b = ParamTrajectory("random-walk-clipped", [0.0, 0.0], 2000, step_size=0.05, clip=0.3, seed=1)
        np.testing.assert_array_equal(a.path, b.path)
        assert np.max(np.linalg.norm(a.path, axis=1)) <= 0.3 + 1e-12
        assert a.delta_star <= 0.05 + 1e-12

    def test_horizon(self):
        t = ParamTrajectory("constant", [1.0], horizon=5)
        with pytest.raises(HorizonError):
            t(5)
        with pytest.raises(HorizonError):
            t(-1)

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            ParamTrajectory("spiral", [1.0], horizon=5)


@settings(max_examples=40, deadline=None)
@given(
    kind=st.sampled_from(["constant", "ramp", "sinusoid", "piecewise-constant", "random-walk-clipped"]),
    seed=st.integers(0, 10_000),
)
def test_certificates_hold_pointwise(kind, seed):
    rng = np.random.default_rng(seed)
    base = rng.uniform(-1, 1, 3)
    kw = {
        "ramp": {"slope": rng.uniform(-0.01, 0.01, 3)},
        "sinusoid": {"amplitude": rng.uniform(0, 1), "omega": rng.uniform(0, 1), "phase": rng.uniform(0, 6)},
        "piecewise-constant": {"jumps": [(int(rng.integers(1, 300)), rng.uniform(-1, 1, 3))]},
        "random-walk-clipped": {"step_size": rng.uniform(0, 0.1), "clip": rng.uniform(0.1, 1), "seed": seed},
    }.get(kind, {})
    t = ParamTrajectory(kind, base, horizon=300, **kw)
    prev = None
    for k in range(300):
        th = t(k)
        assert np.linalg.norm(th) <= t.theta_max
        if prev is not None:
            assert np.linalg.norm(th - prev) <= t.delta_star
        prev = th
