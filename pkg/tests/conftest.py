import pytest

# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def report():
    def add(criterion: int, passed: bool, detail: str, soft: bool = False) -> None:
        status = "PASS" if passed else ("SOFT-FAIL" if soft else "FAIL")
        ACCEPTANCE_LINES.append(f"criterion {criterion}: {status}  {detail}")
        print(ACCEPTANCE_LINES[-1])

    return add


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
