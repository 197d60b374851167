from __future__ import annotations

import numpy as np
import pytest

from graphmem.mock import MockGateway

from helpers import build_legal_graph, full_shape_locomo, two_session_conversation


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20230508)


@pytest.fixture
def gateway() -> MockGateway:
    return MockGateway()


@pytest.fixture
def legal_graph(rng):
    return build_legal_graph(rng)


@pytest.fixture
def sessions():
    return two_session_conversation()


@pytest.fixture(scope="session")
def full_locomo_path(tmp_path_factory):
    return full_shape_locomo(tmp_path_factory.mktemp("locomo") / "locomo10.json")
