import pytest
from hypothesis import settings

from cascademap.arch import vek280_arch, vek280_profile, zero_profile

settings.register_profile("repo", deadline=None, max_examples=60, derandomize=True)
settings.load_profile("repo")

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def arch():
    return vek280_arch()


@pytest.fixture(scope="session")
def profile():
    return vek280_profile()


@pytest.fixture(scope="session")
def zprofile():
    return zero_profile()


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
