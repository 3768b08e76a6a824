from pathlib import Path

import pytest

from helpers import make_graph

DATA = Path(__file__).resolve().parents[1] / "data"


@pytest.fixture(scope="session")
def empty8():
    return make_graph(["." * 8] * 8)


@pytest.fixture(scope="session")
def empty8_map_path():
    return str(DATA / "maps" / "empty-8-8.map")


@pytest.fixture(scope="session")
def empty8_scen_path():
    return str(DATA / "scens" / "empty-8-8-random-1.scen")


@pytest.fixture(scope="session")
def random32_map_path():
    return str(DATA / "maps" / "random-32-32-10.map")


@pytest.fixture(scope="session")
def random32_scen_path():
    return str(DATA / "scens" / "random-32-32-10-random-1.scen")
