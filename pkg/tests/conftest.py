import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("roma", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("roma")


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def scalar_data(rng, n=60, nonlinear=False):
    """Scalar exposure/mediator/outcome with a direct and an indirect path."""
    x = rng.normal(size=n)
    m = (np.sin(x) if nonlinear else 0.8 * x) + 0.5 * rng.normal(size=n)
    y = 1.5 * x + 0.7 * m + 0.3 * rng.normal(size=n)
    return x, m, y


ACCEPTANCE: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
