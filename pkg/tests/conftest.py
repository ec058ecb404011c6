"""Shared fixtures plus the acceptance-criteria summary block."""

import pytest

from phonobeam.fixtures import build_desk_corpus

# one line per acceptance criterion, printed after the test summary
ACCEPTANCE_RESULTS = []


@pytest.fixture(scope="session")
def desk_corpus(tmp_path_factory):
    """Corpus root with speech/, alignments/, rirs/, noise/, config.yaml."""
    root = tmp_path_factory.mktemp("desk_corpus")
    config_path = build_desk_corpus(root)
    return config_path.parent


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for line in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(line)
