import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from dp_pwa.samplers import RandomSource  # noqa: E402

_CRITERIA: dict[int, tuple[str, bool, str]] = {}


class CriterionLog:
    def record(self, number: int, name: str, passed: bool, detail: str = "") -> bool:
        _CRITERIA[number] = (name, bool(passed), detail)
        status = "PASS" if passed else "FAIL"
        print(f"[criterion {number:2d}] {status} {name}: {detail}")
        return bool(passed)


@pytest.fixture
def criterion():
    return CriterionLog()


@pytest.fixture
def rng():
    return RandomSource(12345)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        name, passed, detail = _CRITERIA[number]
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{number:2d}] {status}  {name}  ({detail})")
