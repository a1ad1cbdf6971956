import pytest

from ftsim import RLFTParams, build_rlft

# verdict lines collected by test_acceptance, echoed at the end of the session
ACCEPTANCE = {}


@pytest.fixture(scope="session")
def tree_k2t3():
    return build_rlft(RLFTParams(4, 3))


@pytest.fixture(scope="session")
def tree_k4t3():
    return build_rlft(RLFTParams(8, 3))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[key])
