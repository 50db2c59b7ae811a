"""Shared fixtures plus the acceptance-criteria reporter.

Acceptance tests register a one-line verdict through the `criteria` fixture;
the terminal summary prints every registered criterion as its own PASS/FAIL
line so the run's contract status is readable at a glance.
"""
from __future__ import annotations

import numpy as np
import pytest

_CRITERIA: dict[int, tuple[str, bool, str]] = {}


class CriteriaRecorder:
    def record(self, number: int, title: str, passed: bool, detail: str = "") -> None:
        _CRITERIA[number] = (title, bool(passed), detail)


@pytest.fixture(scope="session")
def criteria() -> CriteriaRecorder:
    return CriteriaRecorder()


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, passed, detail = _CRITERIA[number]
        verdict = "PASS" if passed else "FAIL"
        line = f"criterion {number:2d}: {verdict}  {title}"
        if detail:
            line += f"  [{detail}]"
        terminalreporter.write_line(line)


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)
