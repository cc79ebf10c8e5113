import pathlib

import pytest

FIXTURES = pathlib.Path(__file__).parent / "fixtures"
GOLDEN = pathlib.Path(__file__).parent / "golden"


@pytest.fixture
def fixture_text():
    def load(name):
        return (FIXTURES / name).read_text()
    return load


@pytest.fixture
def golden_text():
    def load(name):
        return (GOLDEN / name).read_text()
    return load
