import pytest

# acceptance lines collected by tests/test_acceptance.py, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("#")[1].split(" ")[0])):
            terminalreporter.write_line(line)


@pytest.fixture
def accept():
    def record(number: int, ok: bool, title: str, detail: str) -> None:
        line = f"{'PASS' if ok else 'FAIL'} #{number} {title}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return record
