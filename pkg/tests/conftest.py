import os

import pytest
from hypothesis import HealthCheck, settings

from levycop import BcppModel, ClaytonLevyCopula, Exponential, PureCommonShockLevyCopula, Weibull

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

_ACCEPTANCE = []


def pytest_runtest_makereport(item, call):
    if call.when == "call" and item.get_closest_marker("acceptance") is not None:
        crit = item.get_closest_marker("acceptance").kwargs.get("criterion", "?")
        _ACCEPTANCE.append((crit, item.name, call.excinfo is None))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for crit, name, ok in sorted(_ACCEPTANCE, key=lambda r: (str(r[0]), r[1])):
        terminalreporter.write_line(f"criterion {crit}: {'PASS' if ok else 'FAIL'}  ({name})")


@pytest.fixture
def table1_model():
    return BcppModel(1000.0, 1000.0, Exponential(1.0), Exponential(1.0), ClaytonLevyCopula(1.0))


@pytest.fixture
def small_model():
    return BcppModel(2.0, 2.0, Exponential(1.0), Exponential(1.0), ClaytonLevyCopula(1.0))


@pytest.fixture
def weibull_model():
    return BcppModel(71.1, 41.5, Weibull(0.818, 1.197), Weibull(1.036, 1.131), ClaytonLevyCopula(0.695))


@pytest.fixture
def pcs_model():
    return BcppModel(3.0, 2.0, Exponential(1.5), Weibull(1.2, 0.9), PureCommonShockLevyCopula(0.1))
