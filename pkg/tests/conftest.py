import os

import pytest

from oppqbm.precision import working_precision


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run long table reproductions")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow") or os.environ.get("OPPQ_SLOW") == "1":
        return
    skip = pytest.mark.skip(reason="slow: enable with --runslow or OPPQ_SLOW=1")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def prec50():
    with working_precision(50):
        yield


@pytest.fixture
def prec60():
    with working_precision(60):
        yield


# ---------------------------------------------------------------- acceptance report

CRITERIA = {
    1: "harmonic exactness",
    2: "harmonic reference bounds",
    3: "quartic reference minima",
    4: "quartic reference bounds",
    5: "magnetic-field rows",
    6: "property suites",
    7: "determinism",
}

_RESULTS: dict = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    # tests carry @pytest.mark.criterion(number, "part")
    tags = [m.args for m in item.iter_markers("criterion")]
    if not tags or rep.when not in ("setup", "call"):
        return
    if rep.when == "setup" and not rep.skipped:
        return
    for number, part in tags:
        if rep.skipped and hasattr(rep, "wasxfail"):
            status = "FAIL"
        elif rep.skipped:
            status = "NOT RUN"
        elif rep.passed and hasattr(rep, "wasxfail"):
            status = "PASS"  # strict xfail turns this into a suite failure anyway
        else:
            status = "PASS" if rep.passed else "FAIL"
        _RESULTS.setdefault(number, []).append((part, status))


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number, title in CRITERIA.items():
        parts = _RESULTS.get(number)
        if not parts:
            continue
        statuses = {s for _, s in parts}
        overall = "FAIL" if "FAIL" in statuses else ("PASS" if statuses == {"PASS"} else "PARTIAL")
        detail = "; ".join(f"{p}: {s}" for p, s in parts)
        tr.write_line(f"criterion {number} ({title}): {overall} [{detail}]")
