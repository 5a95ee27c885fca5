import numpy as np
import pytest

from binhdc import kernels
from binhdc.hv import Hypervector


@pytest.fixture(params=sorted(kernels.available_backends()))
def backend(request, monkeypatch):
    """Run a test once per kernel backend."""
    monkeypatch.setattr(kernels, "backend", kernels.available_backends()[request.param])
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def hv_from(values):
    return Hypervector.from_bipolar(np.asarray(values))


# one PASS/FAIL/SKIP line per acceptance criterion, printed after the run
_criteria = {}
_RANK = {"PASS": 0, "SKIP": 1, "FAIL": 2}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(key, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or not (rep.when == "call" or rep.outcome != "passed"):
        return
    key, title = mark.args
    status = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[rep.outcome]
    detail = "; ".join(str(v) for k, v in rep.user_properties if k == "measured")
    if status == "SKIP" and isinstance(rep.longrepr, tuple):
        detail = rep.longrepr[2].removeprefix("Skipped: ")
    prev = _criteria.get(key)
    if prev is not None:
        details = [d for d in dict.fromkeys((prev[2], detail)) if d]
        status = max(prev[1], status, key=_RANK.get)
        detail = "; ".join(details)
    _criteria[key] = (title, status, detail)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_criteria, key=lambda k: (not k[0].isdigit(), int(k) if k.isdigit() else 0, k)):
        title, status, detail = _criteria[key]
        label = f"criterion {key}" if key.isdigit() else key
        line = f"[{status}] {label}: {title}"
        terminalreporter.write_line(line + (f" ({detail})" if detail else ""))
