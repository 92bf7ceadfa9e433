import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from anisocheck import integrand as itg

settings.register_profile(
    "default",
    max_examples=60,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


def pytest_configure(config):
    config._criterion_lines = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    number, title = mark.args
    lines = item.config._criterion_lines
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        status = "PASS" if rep.passed else ("SKIP" if rep.skipped else "FAIL")
        prev = lines.get(number)
        if prev is None or prev[0] == "PASS":
            lines[number] = (status, title)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_criterion_lines", {})
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(lines):
        status, title = lines[number]
        terminalreporter.write_line(f"criterion {number}: {status}  {title}")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def area42():
    return itg.area(4, 2)


@pytest.fixture(scope="session")
def perturbed42():
    phi = itg.PolynomialPerturbation.random(11, 4)
    return itg.perturbed_area(phi, 0.01, 4, 2)
