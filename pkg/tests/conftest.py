import pytest
from hypothesis import settings

# fixed example generation keeps the suite reproducible run to run
settings.register_profile("repro", derandomize=True)
settings.load_profile("repro")

# filled by tests/test_acceptance.py: criterion id -> (passed, description, detail)
ACCEPTANCE: dict[int, tuple[bool, str, str]] = {}


@pytest.fixture
def record_criterion():
    def record(cid: int, passed: bool, description: str, detail: str):
        ACCEPTANCE[cid] = (bool(passed), description, detail)

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(ACCEPTANCE):
        passed, description, detail = ACCEPTANCE[cid]
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] {cid}. {description}: {detail}")
