import pytest

ACCEPTANCE: list[str] = []


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line; lines are printed in the terminal summary."""

    def record(label: str, ok: bool, detail: str, seconds: float | None = None, soft: bool = False):
        status = "PASS" if ok else ("FAIL (reported, not gating)" if soft else "FAIL")
        timing = f" [{seconds:.1f} s]" if seconds is not None else ""
        ACCEPTANCE.append(f"{label}: {status}{timing} {detail}")

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
