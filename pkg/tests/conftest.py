import time

import pytest

from gnrpg.config import RunConfig


@pytest.fixture(scope="session")
def cfg():
    return RunConfig()


@pytest.fixture(scope="session")
def lib(cfg):
    return cfg.library()


@pytest.fixture(scope="session")
def harness(cfg):
    return cfg.harness_settings()


# --------------------------------------------------------------------------
# acceptance-criterion recorder

_ACCEPTANCE_LINES: list[str] = []


class CriterionRun:
    """Times a criterion body, collects named checks and records one
    PASS/FAIL line. Failing checks or an exceeded time limit fail the test."""

    def __init__(self, number: int, title: str, limit_s: float | None):
        self.number, self.title, self.limit_s = number, title, limit_s
        self.failures: list[str] = []
        self.notes: list[str] = []
        self.elapsed = 0.0

    def check(self, ok, what: str):
        if not ok:
            self.failures.append(what)

    def note(self, text: str):
        self.notes.append(text)

    def __enter__(self):
        self._t0 = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        self.elapsed = time.perf_counter() - self._t0
        if exc is not None:
            self.failures.append(f"{exc_type.__name__}: {exc}")
        if self.limit_s is not None and self.elapsed > self.limit_s:
            self.failures.append(f"runtime {self.elapsed:.3g} s exceeds {self.limit_s:g} s")
        limit = f"limit {self.limit_s:g} s" if self.limit_s is not None else "no limit"
        status = "FAIL" if self.failures else "PASS"
        _ACCEPTANCE_LINES.append(
            f"criterion {self.number:2d} {status} [{self.elapsed:.4g} s, {limit}] {self.title}: "
            + "; ".join(self.notes + self.failures))
        if exc is None and self.failures:
            raise AssertionError("; ".join(self.failures))
        return False


@pytest.fixture
def criterion():
    return CriterionRun


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
