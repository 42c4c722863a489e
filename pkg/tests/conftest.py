import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from fakeserver import FakeServer  # noqa: E402
from sentistab.sentiment import ValenceLexicon  # noqa: E402


@pytest.fixture
def tiny_lex():
    return ValenceLexicon({"good": 0.8, "bad": -0.7})


@pytest.fixture
def api_key(monkeypatch):
    monkeypatch.setenv("SENTI_API_KEY", "test-key")


@pytest.fixture
def fake_server():
    with FakeServer() as srv:
        yield srv


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import RESULTS

    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(RESULTS):
        terminalreporter.write_line(line)
