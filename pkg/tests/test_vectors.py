import numpy as np
import pytest

from graphmem.errors import DimensionMismatchError, InvalidVectorError, UnknownNodeError
from graphmem.graph import NodeKind
from graphmem.vectors import VectorIndex, index_from_graph, kind_of_id

from helpers import build_legal_graph, unit_vector
from oracles import brute_knn


def test_kind_of_id_prefixes():
    assert kind_of_id("ep-123") is NodeKind.EPISODE
    assert kind_of_id("fact-1") is NodeKind.FACT
    assert kind_of_id("refl-1") is NodeKind.REFLECTION
    assert kind_of_id("concept-1") is NodeKind.CONCEPT
    assert kind_of_id("weird-1") is None


def test_upsert_and_len():
    index = VectorIndex()
    index.upsert("ep-1", [1.0, 0.0])
    index.upsert("ep-2", [0.0, 1.0])
    assert len(index) == 2
    assert "ep-1" in index
    index.upsert("ep-1", [0.5, 0.5])  # replace, not append
    assert len(index) == 2


def test_dim_enforced_after_first_vector():
    index = VectorIndex()
    index.upsert("ep-1", [1.0, 0.0, 0.0])
    assert index.dim == 3
    with pytest.raises(DimensionMismatchError):
        index.upsert("ep-2", [1.0, 0.0])


def test_invalid_vectors_rejected():
    index = VectorIndex()
    with pytest.raises(InvalidVectorError):
        index.upsert("ep-1", [0.0, 0.0])
    with pytest.raises(InvalidVectorError):
        index.upsert("ep-1", [1.0, float("nan")])
    with pytest.raises(InvalidVectorError):
        index.upsert("ep-1", [])


def test_similarity_and_unknown_node():
    index = VectorIndex()
    index.upsert("ep-1", [1.0, 0.0])
    assert index.similarity("ep-1", [2.0, 0.0]) == pytest.approx(1.0)
    assert index.similarity("ep-1", [0.0, 3.0]) == pytest.approx(0.0)
    assert index.similarity("ep-1", [-1.0, 0.0]) == pytest.approx(-1.0)
    with pytest.raises(UnknownNodeError):
        index.similarity("ep-404", [1.0, 0.0])


def test_knn_matches_brute_force(rng):
    index = VectorIndex()
    vectors = {}
    for i in range(200):
        vec = unit_vector(rng, 16)
        node_id = f"ep-{i:03d}"
        vectors[node_id] = vec
        index.upsert(node_id, vec)
    for _ in range(20):
        query = unit_vector(rng, 16)
        got = index.knn(query, 10)
        want = brute_knn(vectors, query, 10)
        assert [nid for nid, _ in got] == [nid for nid, _ in want]
        for (_, a), (_, b) in zip(got, want):
            assert a == pytest.approx(b, abs=1e-12)


def test_knn_tie_break_ascending_id():
    index = VectorIndex()
    index.upsert("ep-b", [1.0, 0.0])
    index.upsert("ep-a", [1.0, 0.0])
    index.upsert("ep-c", [2.0, 0.0])  # same direction, same cosine
    got = [nid for nid, _ in index.knn([1.0, 0.0], 3)]
    assert got == ["ep-a", "ep-b", "ep-c"]


def test_knn_kind_filter():
    index = VectorIndex()
    index.upsert("ep-1", [1.0, 0.0])
    index.upsert("fact-1", [1.0, 0.0])
    index.upsert("refl-1", [1.0, 0.0])
    got = index.knn([1.0, 0.0], 5, kind_filter={NodeKind.FACT})
    assert [nid for nid, _ in got] == ["fact-1"]
    got = index.knn([1.0, 0.0], 5, kind_filter={NodeKind.EPISODE, NodeKind.REFLECTION})
    assert [nid for nid, _ in got] == ["ep-1", "refl-1"]


def test_knn_k_edge_cases():
    index = VectorIndex()
    assert index.knn([1.0], 0) == []
    index.upsert("ep-1", [1.0, 0.0])
    assert index.knn([1.0, 0.0], 0) == []
    assert len(index.knn([1.0, 0.0], 99)) == 1
    with pytest.raises(InvalidVectorError):
        index.knn([0.0, 0.0], 3)


def test_negative_cosines_returned_as_is():
    index = VectorIndex()
    index.upsert("ep-1", [-1.0, 0.0])
    [(nid, sim)] = index.knn([1.0, 0.0], 1)
    assert nid == "ep-1"
    assert sim == pytest.approx(-1.0)


def test_snapshot_restore_round_trip(rng):
    index = VectorIndex()
    index.upsert("ep-1", unit_vector(rng, 4))
    state = index.snapshot()
    index.upsert("ep-2", unit_vector(rng, 4))
    index.restore(state)
    assert len(index) == 1
    assert "ep-2" not in index


def test_index_from_graph_covers_embedded_nodes(rng):
    graph, original = build_legal_graph(rng)
    rebuilt = index_from_graph(graph)
    assert sorted(rebuilt.ids()) == sorted(original.ids())
    query = unit_vector(rng)
    assert rebuilt.knn(query, 10) == original.knn(query, 10)


def test_record_round_trip():
    index = VectorIndex()
    index.upsert("fact-1", [3.0, 4.0])
    record = index.record("fact-1")
    assert record.vector == (3.0, 4.0)
    assert record.norm == pytest.approx(5.0)
