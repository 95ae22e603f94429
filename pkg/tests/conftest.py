import pytest

from medagents.orchestration.fixtures import build_fixtures

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def fx(tmp_path_factory):
    """The offline corpus fixture set, built once per session."""
    return build_fixtures(tmp_path_factory.mktemp("fixtures"))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
