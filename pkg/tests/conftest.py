import pytest

# filled by test_acceptance.py: criterion id -> (passed, detail)
ACCEPTANCE = {}


@pytest.fixture
def acceptance():
    def record(aid, passed, detail):
        ACCEPTANCE[aid] = (bool(passed), detail)
        print(f"{aid} {'PASS' if passed else 'FAIL'}  {detail}")
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for aid in sorted(ACCEPTANCE, key=lambda s: int(s[1:])):
        ok, detail = ACCEPTANCE[aid]
        terminalreporter.write_line(f"{aid:>4} {'PASS' if ok else 'FAIL'}  {detail}")
