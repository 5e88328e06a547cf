import numpy as np
import pytest

_ACCEPTANCE = {}

CRITERIA = {
    1: "Steiner equality, flow area vs closed form",
    2: "direct vs eta route cross-check",
    3: "Riccati comparison and equality fixtures",
    4: "Rauch comparison fixtures",
    5: "existence case table vs bisected zeros",
    6: "no eternal solution bound",
    7: "volume lower bound fixtures",
    8: "umbilic drift",
    9: "gradient envelope",
    10: "CLI determinism across thread counts",
}


class Recorder:
    def __init__(self, number):
        self.number = number
        self.notes = []
        self.ok = True

    def check(self, cond, note):
        self.notes.append(note)
        self.ok = self.ok and bool(cond)
        assert cond, note


@pytest.fixture
def criterion(request):
    number = request.node.get_closest_marker("criterion").args[0]
    rec = Recorder(number)
    try:
        yield rec
    finally:
        failed = getattr(request.node, "rep_call", None)
        passed = rec.ok and failed is not None and failed.passed
        prev = _ACCEPTANCE.get(number, (True, []))
        _ACCEPTANCE[number] = (prev[0] and passed, prev[1] + rec.notes)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        item.rep_call = rep


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(CRITERIA):
        if number not in _ACCEPTANCE:
            continue
        passed, notes = _ACCEPTANCE[number]
        detail = "; ".join(notes[-3:])
        terminalreporter.write_line(f"criterion {number:2d} {'PASS' if passed else 'FAIL'}: {CRITERIA[number]} ({detail})")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
