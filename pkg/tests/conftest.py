import os

import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

_ACCEPTANCE: list[tuple[str, bool, str]] = []


class AcceptanceLog:
    def record(self, criterion: str, passed: bool, detail: str) -> None:
        _ACCEPTANCE.append((criterion, passed, detail))
        print(f"{criterion}: {'PASS' if passed else 'FAIL'} {detail}")


@pytest.fixture(scope="session")
def acceptance() -> AcceptanceLog:
    return AcceptanceLog()


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, passed, detail in sorted(_ACCEPTANCE, key=lambda r: int(r[0].split()[1])):
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] {criterion}: {detail}")
