import pytest

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def record_criterion():
    def record(number: int, title: str, passed: bool, detail: str) -> None:
        ACCEPTANCE_LINES.append(f"{'PASS' if passed else 'FAIL'} criterion {number:2d} {title}: {detail}")
        print(ACCEPTANCE_LINES[-1])

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2])):
            terminalreporter.write_line(line)
