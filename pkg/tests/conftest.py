import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

import pytest

_LINES: list[str] = []


@pytest.fixture(scope="session")
def report(request):
    """Emit one 'CRITERION n: PASS|FAIL ...' line immediately and in the summary."""
    capman = request.config.pluginmanager.getplugin("capturemanager")

    def emit(number: int, ok: bool, detail: str):
        line = f"CRITERION {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        _LINES.append(line)
        with capman.global_and_fixture_disabled():
            print("\n" + line, flush=True)
        return ok

    return emit


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
