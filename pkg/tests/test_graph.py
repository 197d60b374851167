import json

import pytest

from graphmem.errors import (
    CorruptFileError,
    DuplicateConceptLabelError,
    DuplicateEdgeError,
    DuplicateIdError,
    InvariantViolationError,
    SchemaViolationError,
    UnknownEndpointError,
    UnknownNodeError,
)
from graphmem.graph import (
    EdgeKind,
    MemoryGraph,
    MemoryNode,
    NodeKind,
    valid_concept_label,
)

from helpers import build_legal_graph


def ep(i, **kw):
    defaults = dict(
        id=f"ep-{i}",
        kind=NodeKind.EPISODE,
        text=f"turn {i}",
        conversation_id="c1",
        session_id="s1",
        timestamp="2023-05-08T13:56:00",
        seq=i,
        speaker="Ava",
    )
    defaults.update(kw)
    return MemoryNode(**defaults)


def fact(i, **kw):
    defaults = dict(id=f"fact-{i}", kind=NodeKind.FACT, text=f"claim {i}", belief=0.9)
    defaults.update(kw)
    return MemoryNode(**defaults)


def concept(label, i=0):
    return MemoryNode(id=f"concept-{i}", kind=NodeKind.CONCEPT, text=label)


class TestNodeValidation:
    def test_accepts_minimal_legal_nodes(self):
        g = MemoryGraph()
        g.add_node(ep(0))
        g.add_node(fact(0))
        g.add_node(MemoryNode(id="refl-0", kind=NodeKind.REFLECTION, text="insight", belief=0.8))
        g.add_node(concept("painting_hobby"))
        assert g.node_count() == 4

    def test_duplicate_id_rejected(self):
        g = MemoryGraph()
        g.add_node(ep(0))
        with pytest.raises(DuplicateIdError):
            g.add_node(ep(0, text="other"))

    def test_episode_requires_seq_and_timestamp(self):
        with pytest.raises(InvariantViolationError):
            MemoryGraph().add_node(ep(0, seq=None))
        with pytest.raises(InvariantViolationError):
            MemoryGraph().add_node(ep(0, timestamp=None))
        with pytest.raises(InvariantViolationError):
            MemoryGraph().add_node(ep(0, seq=-1))

    def test_non_episode_rejects_seq_and_speaker(self):
        with pytest.raises(InvariantViolationError):
            MemoryGraph().add_node(fact(0, seq=3))
        with pytest.raises(InvariantViolationError):
            MemoryGraph().add_node(fact(0, speaker="Ava"))

    def test_belief_bounds_and_carrier_kinds(self):
        with pytest.raises(InvariantViolationError):
            MemoryGraph().add_node(fact(0, belief=1.5))
        with pytest.raises(InvariantViolationError):
            MemoryGraph().add_node(ep(0, belief=0.5))

    def test_concept_label_rules(self):
        assert valid_concept_label("painting_hobby")
        assert valid_concept_label("one_two_three_four_five")
        assert not valid_concept_label("single")
        assert not valid_concept_label("one_two_three_four_five_six")
        assert not valid_concept_label("Bad_Case")
        assert not valid_concept_label("has space_x")
        with pytest.raises(InvariantViolationError):
            MemoryGraph().add_node(concept("single"))

    def test_concept_never_embedded(self):
        node = MemoryNode(
            id="concept-0", kind=NodeKind.CONCEPT, text="lake_trip", embedding=(0.1, 0.2)
        )
        with pytest.raises(InvariantViolationError):
            MemoryGraph().add_node(node)

    def test_duplicate_concept_label_rejected(self):
        g = MemoryGraph()
        g.add_node(concept("lake_trip", 0))
        with pytest.raises(DuplicateConceptLabelError):
            g.add_node(concept("lake_trip", 1))

    def test_non_finite_embedding_rejected(self):
        with pytest.raises(InvariantViolationError):
            MemoryGraph().add_node(fact(0, embedding=(0.1, float("nan"))))


class TestEdges:
    def setup_method(self):
        self.g = MemoryGraph()
        self.g.add_node(ep(0))
        self.g.add_node(ep(1, seq=1))
        self.g.add_node(fact(0))
        self.g.add_node(MemoryNode(id="refl-0", kind=NodeKind.REFLECTION, text="r", belief=0.8))
        self.g.add_node(concept("lake_trip"))

    def test_stored_weight_fixed(self):
        edge = self.g.add_edge("ep-0", "ep-1", EdgeKind.NEXT)
        assert edge.weight == 1.0

    def test_schema_accepts_all_five_kinds(self):
        self.g.add_edge("ep-0", "ep-1", EdgeKind.NEXT)
        self.g.add_edge("fact-0", "ep-0", EdgeKind.DERIVED_FROM)
        self.g.add_edge("refl-0", "fact-0", EdgeKind.DERIVED_FROM_FACT)
        self.g.add_edge("ep-0", "concept-0", EdgeKind.HAS_CONCEPT)
        self.g.add_edge("fact-0", "concept-0", EdgeKind.ABOUT_CONCEPT)
        assert self.g.edge_count() == 5

    def test_schema_rejects_wrong_endpoints(self):
        with pytest.raises(SchemaViolationError):
            self.g.add_edge("fact-0", "ep-0", EdgeKind.NEXT)
        with pytest.raises(SchemaViolationError):
            self.g.add_edge("ep-0", "fact-0", EdgeKind.DERIVED_FROM)
        with pytest.raises(SchemaViolationError):
            self.g.add_edge("concept-0", "ep-0", EdgeKind.HAS_CONCEPT)

    def test_unknown_endpoint(self):
        with pytest.raises(UnknownEndpointError):
            self.g.add_edge("ep-0", "ep-404", EdgeKind.NEXT)

    def test_duplicate_edge_rejected(self):
        self.g.add_edge("ep-0", "ep-1", EdgeKind.NEXT)
        with pytest.raises(DuplicateEdgeError):
            self.g.add_edge("ep-0", "ep-1", EdgeKind.NEXT)

    def test_degree_counts_both_directions(self):
        self.g.add_edge("ep-0", "ep-1", EdgeKind.NEXT)
        self.g.add_edge("fact-0", "ep-0", EdgeKind.DERIVED_FROM)
        assert self.g.degree("ep-0") == 2
        assert self.g.degree("ep-1") == 1

    def test_neighbors_deterministic_order(self):
        self.g.add_edge("ep-0", "ep-1", EdgeKind.NEXT)
        self.g.add_edge("fact-0", "ep-0", EdgeKind.DERIVED_FROM)
        self.g.add_edge("ep-0", "concept-0", EdgeKind.HAS_CONCEPT)
        got = self.g.neighbors("ep-0", "both")
        assert [other for _, other in got] == sorted(other for _, other in got)


class TestQueries:
    def test_nodes_filter_by_kind(self, legal_graph):
        graph, _ = legal_graph
        kinds = {n.kind for n in graph.nodes(NodeKind.FACT)}
        assert kinds == {NodeKind.FACT}

    def test_unknown_node_raises(self):
        with pytest.raises(UnknownNodeError):
            MemoryGraph().node("nope")

    def test_max_seq(self):
        g = MemoryGraph()
        assert g.max_seq("c1") == -1
        g.add_node(ep(0))
        g.add_node(ep(5, seq=5))
        assert g.max_seq("c1") == 5
        assert g.max_seq("other") == -1

    def test_stats_shape(self, legal_graph):
        graph, _ = legal_graph
        stats = graph.stats()
        assert sum(stats["nodes"].values()) == graph.node_count()
        assert sum(stats["edges"].values()) == graph.edge_count()
        assert sum(stats["degree_histogram"].values()) == graph.node_count()
        assert len(stats["top_concepts"]) <= 20

    def test_concept_label_registry(self):
        g = MemoryGraph()
        g.add_node(concept("lake_trip", 0))
        assert g.concept_id_for_label("lake_trip") == "concept-0"
        assert g.concept_id_for_label("absent_label") is None
        assert g.concept_labels() == ["lake_trip"]


class TestSnapshotRestore:
    def test_rollback_discards_changes(self, rng):
        graph, _ = build_legal_graph(rng)
        before_nodes = graph.node_count()
        before_edges = graph.edge_count()
        state = graph.snapshot()
        graph.add_node(ep(900, id="ep-900", seq=900))
        graph.add_node(ep(901, id="ep-901", seq=901))
        graph.add_edge("ep-900", "ep-901", EdgeKind.NEXT)
        graph.restore(state)
        assert graph.node_count() == before_nodes
        assert graph.edge_count() == before_edges
        assert not graph.has_node("ep-900")


class TestPersistence:
    def test_round_trip_exact(self, tmp_path, legal_graph):
        graph, _ = legal_graph
        path = tmp_path / "g.jsonl"
        graph.persist(path)
        loaded = MemoryGraph.load(path)
        assert loaded == graph
        for node in graph.nodes():
            other = loaded.node(node.id)
            assert other == node  # embeddings round-trip float-exact

    def test_persist_deterministic_bytes(self, tmp_path, legal_graph):
        graph, _ = legal_graph
        p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        graph.persist(p1)
        graph.persist(p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_header_first_line(self, tmp_path, legal_graph):
        graph, _ = legal_graph
        path = tmp_path / "g.jsonl"
        graph.persist(path)
        header = json.loads(path.read_text().splitlines()[0])
        assert header["format"] == "graphmem.graph"
        assert header["nodes"] == graph.node_count()
        assert header["edges"] == graph.edge_count()

    def test_corrupt_line_reports_line_number(self, tmp_path, legal_graph):
        graph, _ = legal_graph
        path = tmp_path / "g.jsonl"
        graph.persist(path)
        lines = path.read_text().splitlines()
        lines[2] = "{broken"
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(CorruptFileError) as info:
            MemoryGraph.load(path)
        assert info.value.line_no == 3

    def test_truncated_file_detected(self, tmp_path, legal_graph):
        graph, _ = legal_graph
        path = tmp_path / "g.jsonl"
        graph.persist(path)
        lines = path.read_text().splitlines()
        path.write_text("\n".join(lines[:-1]) + "\n")
        with pytest.raises(CorruptFileError):
            MemoryGraph.load(path)

    def test_load_rejects_foreign_header(self, tmp_path):
        path = tmp_path / "g.jsonl"
        path.write_text('{"format": "something.else", "version": 1}\n')
        with pytest.raises(CorruptFileError):
            MemoryGraph.load(path)

    def test_embedding_dim_mixed_raises(self):
        g = MemoryGraph()
        g.add_node(fact(0, embedding=(0.1, 0.2)))
        g.add_node(fact(1, embedding=(0.1, 0.2, 0.3)))
        with pytest.raises(InvariantViolationError):
            g.embedding_dim()
