import pytest

from em2gm.population import build_rule, default_rule


@pytest.fixture(scope="session")
def rule():
    return default_rule()


@pytest.fixture(scope="session")
def rule160():
    return build_rule(160)
