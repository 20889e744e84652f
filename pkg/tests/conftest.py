import sys

import pytest

from kgqa.store import load_graph

from _support import fixture_path


@pytest.fixture(scope="session")
def daei():
    return load_graph(fixture_path("daei_chain.nt"))


@pytest.fixture(scope="session")
def toy_kg():
    return load_graph(fixture_path("toy_kg.nt"))


@pytest.fixture(scope="session")
def nearmiss_kg():
    return load_graph(fixture_path("nearmiss.nt"))


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
