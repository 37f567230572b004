import pytest

from tvgain.excitation import ExcitationReport
from tvgain.experiment import ExperimentConfig
from tvgain.gain import select_hyperparameters


def scalar_config(trajectory=None, horizon=3000, seed=1, amplitude=2.0, **extra):
    """One-parameter plant ``y_k = theta*_k u_{k-1}`` driven by a PRBS input."""
    d = {
        "plant": {"n": 0, "m": 1},
        "trajectory": trajectory or {"kind": "constant", "base": [0.7]},
        "input": {"kind": "prbs", "amplitude": amplitude},
        "horizon": horizon,
        "seed": seed,
    }
    d.update(extra)
    return d


@pytest.fixture
def worked_hp():
    rep = ExcitationReport("PE", 0.5, 1, (0, 1))
    hp, _ = select_hyperparameters(rep, 1.0, lambda_omega=0.75, lambda_gamma=0.4, kappa=2.0)
    return hp


@pytest.fixture
def make_config():
    def build(**kw):
        return ExperimentConfig.from_dict(scalar_config(**kw))
    return build


# one PASS/FAIL line per acceptance criterion, collected by test_acceptance
CRITERIA = {}


def pytest_runtest_logreport(report):
    crit = dict(report.user_properties).get("criterion")
    if crit is None or report.when != "call" and not report.failed:
        return
    ok = report.passed and CRITERIA.get(crit, (True,))[0]
    CRITERIA[crit] = (ok, dict(report.user_properties).get("title", ""))


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        ok, title = CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {title}")
