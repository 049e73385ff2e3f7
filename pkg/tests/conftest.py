import os
import shutil
import time
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from softentropy import runner

settings.register_profile(
    "default", deadline=None, suppress_health_check=[HealthCheck.too_slow], max_examples=100
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

FIXTURE = Path(__file__).resolve().parents[1] / "src" / "softentropy" / "fixtures" / "triangle"
FIXTURE_TESTS = [
    "invalid_sides",
    "degenerate",
    "kinds",
    "perimeter",
    "right_angle",
    "sort_order",
    "rank_boundary",
]


ELAPSED: dict[str, float] = {}
_CRITERIA: dict[int, tuple[str, bool]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


def pytest_runtest_logreport(report):
    number = getattr(report, "criterion", None)
    if number is None:
        return
    title, ok = _CRITERIA.get(number, (report.criterion_title, True))
    if report.when == "call" or report.failed:
        ok = ok and report.passed
    _CRITERIA[number] = (title, ok)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        rep = outcome.get_result()
        rep.criterion, rep.criterion_title = marker.args


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, ok = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:2d} {'PASS' if ok else 'FAIL'}: {title}")


@pytest.fixture
def fixture_copy(tmp_path):
    """A private copy of the fixture project."""
    dest = tmp_path / "project"
    shutil.copytree(FIXTURE, dest, ignore=shutil.ignore_patterns("__pycache__"))
    return dest


@pytest.fixture(scope="session")
def fixture_project():
    return runner.load_project_config(FIXTURE)


@pytest.fixture(scope="session")
def matrix_session(tmp_path_factory, fixture_project):
    """One complete matrix-mode run of the fixture, shared by the whole suite."""
    db = tmp_path_factory.mktemp("matrix") / "session.db"
    start = time.perf_counter()
    summary = runner.run_session(fixture_project, runner.RunPlan(mode="matrix"), db)
    ELAPSED["matrix"] = time.perf_counter() - start
    return db, summary


@pytest.fixture(scope="session")
def group_session(tmp_path_factory, fixture_project):
    """Group-mode run with order-2 mutants, shared by the whole suite."""
    db = tmp_path_factory.mktemp("group") / "session.db"
    plan = runner.RunPlan(mode="group", order=2, cap=100, seed=7, jobs=2)
    summary = runner.run_session(fixture_project, plan, db)
    return db, summary


def hang_mutant():
    """A mutant whose ``rank`` never returns; only rank_boundary calls it."""
    from softentropy.mutagen import Mutant, Mutation

    path = "src/sorting.toy"
    text = (FIXTURE / path).read_text()
    target = "let n = 0;"
    start = text.index(target)
    return Mutant.of([Mutation(path, start, start + len(target), "while true { }", "inject", target)])


# mutant flipping "<" to "<=" inside rank; only rank_boundary notices
RANK_BOUNDARY_MUTANT = "bf33b8a0bcaa9e32"
