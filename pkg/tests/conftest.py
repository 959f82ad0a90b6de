import numpy as np
import pytest

from bootlik.numkit import RngStream


@pytest.fixture
def stream():
    return RngStream(20240611)


@pytest.fixture
def gen():
    return np.random.default_rng(7)


_ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture
def criterion(request):
    """Record one PASS/FAIL line per acceptance criterion and echo it immediately."""
    lines = request.config.stash.setdefault(_ACCEPTANCE_KEY, [])

    def report(number, title, checks, elapsed):
        ok = all(passed for _, passed in checks)
        detail = "; ".join(f"{text} [{'ok' if passed else 'MISS'}]" for text, passed in checks)
        line = f"{'PASS' if ok else 'FAIL'} criterion {number} ({title}, {elapsed:.1f} s): {detail}"
        lines.append(line)
        print(f"\n{line}", flush=True)
        return ok

    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("criterion ")[1].split()[0])):
            terminalreporter.write_line(line)
