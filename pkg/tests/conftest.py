import time

import numpy as np
import pytest

_RESULTS = pytest.StashKey()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


class AcceptanceLog:
    """Collects one verdict per acceptance criterion and prints it immediately."""

    def __init__(self, config):
        self.rows = config.stash.setdefault(_RESULTS, [])
        self.capture = config.pluginmanager.getplugin("capturemanager")

    def record(self, number, title, passed, detail, started, budget):
        elapsed = time.perf_counter() - started
        ok = bool(passed) and elapsed < budget
        line = (f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail} "
                f"[{elapsed:.1f}s, budget {budget:g}s]")
        self.rows.append(line)
        with self.capture.global_and_fixture_disabled():
            print("\n" + line, flush=True)
        return ok


@pytest.fixture
def acceptance(request):
    return AcceptanceLog(request.config)


def pytest_terminal_summary(terminalreporter, config):
    rows = config.stash.get(_RESULTS, [])
    if rows:
        terminalreporter.section("acceptance criteria")
        for line in sorted(rows, key=lambda r: int(r.split()[1])):
            terminalreporter.write_line(line)
