import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from gks_whitham.cnoidal import CnoidalWave, solve_p_for_k
from gks_whitham.profile import WaveParams, initial_profile, param_derivatives

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def stable_profile():
    """Hyperbolic wave with both viscous corrections of the same sign."""
    return initial_profile(WaveParams(0.7, 0.0, 0.1))


@pytest.fixture(scope="session")
def stable_derivs(stable_profile):
    return param_derivatives(stable_profile)


@pytest.fixture(scope="session")
def shifted_profile():
    return initial_profile(WaveParams(0.7, 0.3, 0.1))


@pytest.fixture(scope="session")
def selected_wave():
    k = 0.7
    return CnoidalWave(solve_p_for_k(k), k, 0.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance") or __import__("sys").modules.get("tests.test_acceptance")
    outcomes = getattr(mod, "OUTCOMES", None)
    if not outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(outcomes):
        name, passed, detail = outcomes[number]
        terminalreporter.write_line(f"{number}. {name:<18} {'PASS' if passed else 'FAIL'}  {detail}")
