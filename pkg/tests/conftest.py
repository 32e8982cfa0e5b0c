import pytest

# criterion id -> (status, detail); filled by tests/test_acceptance.py
ACCEPTANCE: dict = {}


@pytest.fixture
def acceptance():
    def record(cid, ok, detail, soft=False):
        status = "PASS" if ok else ("WARN" if soft else "FAIL")
        ACCEPTANCE[cid] = (status, detail)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(ACCEPTANCE, key=lambda c: int(c.split()[0])):
        status, detail = ACCEPTANCE[cid]
        terminalreporter.write_line(f"[{status}] criterion {cid}: {detail}")
