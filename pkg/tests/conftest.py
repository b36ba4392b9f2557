import pytest

from graft import build_substrate, layout, uniform_rows
from graft.fixtures import morning_graph


@pytest.fixture(scope="session")
def morning_substrate():
    return build_substrate(morning_graph())


@pytest.fixture(scope="session")
def morning_rows(morning_substrate):
    return uniform_rows(morning_substrate)


@pytest.fixture(scope="session")
def morning_embedding(morning_substrate):
    return layout(morning_substrate.tree)
