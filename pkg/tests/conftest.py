import math

import pytest
from hypothesis import HealthCheck, settings

from atomguide.constants import CONSTANTS
from atomguide.grid import Grid1D
from atomguide.potentials import GuideParams

settings.register_profile(
    "default", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("default")


def well_with_ratio(ratio, waist=15e-6, constants=CONSTANTS):
    """Vertical guide whose depth is ``ratio`` harmonic quanta: U0 / hbar omega = ratio."""
    depth = (2 * ratio * constants.hbar / waist) ** 2 / constants.mass
    return GuideParams(depth, 0.0, waist, waist, 0.0, math.radians(10.0))


@pytest.fixture(scope="session")
def test_well():
    """Deep Gaussian well with U0 / hbar omega = 200 and its eigen grid."""
    p = well_with_ratio(200.0)
    return p, Grid1D(-3.5 * p.waist_vertical, 3.5 * p.waist_vertical, 2048)


@pytest.fixture(scope="session")
def reduced_eigen():
    from atomguide.analysis import reduced_scenario
    from atomguide.eigen import fgh_bound_states

    scn = reduced_scenario(depth_ratio=1.0)
    return scn, fgh_bound_states(scn.eigen_grid, scn.guide)


# ------------------------------------------------------------ acceptance report

_ACCEPTANCE = []


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(label, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and not report.passed):
        detail = dict(report.user_properties).get("measured", "")
        _ACCEPTANCE.append((marker.args[0], marker.args[1], report.outcome, detail))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label, title, outcome, detail in _ACCEPTANCE:
        verdict = {"passed": "PASS", "skipped": "SKIP"}.get(outcome, "FAIL")
        line = f"criterion {label:<3} {verdict}  {title}"
        terminalreporter.write_line(line + (f"  [{detail}]" if detail else ""))
