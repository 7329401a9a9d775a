import pytest

# criterion number -> (passed, detail); filled by test_acceptance.py
CRITERIA: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def record():
    def _record(number: int, passed: bool, detail: str):
        CRITERIA[number] = (bool(passed), detail)
        print(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")

    return _record


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(CRITERIA):
        passed, detail = CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
