"""Typed property graph for conversational long-term memory.

Four node kinds (episode, fact, reflection, concept) and five edge kinds with
fixed endpoint types. The store is append-only: nodes and edges are added
during ingestion and never mutated, which keeps persisted files reproducible.
Stored edges carry no useful weight; traversal weights live in retrieval
config so they can be tuned without rebuilding a graph.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterator

from .errors import (
    CorruptFileError,
    DuplicateConceptLabelError,
    DuplicateEdgeError,
    DuplicateIdError,
    InvariantViolationError,
    SchemaViolationError,
    StoreError,
    UnknownEndpointError,
    UnknownNodeError,
)

__all__ = [
    "NodeKind",
    "EdgeKind",
    "EDGE_SCHEMA",
    "NODE_ID_PREFIXES",
    "MemoryNode",
    "MemoryEdge",
    "MemoryGraph",
    "GraphState",
    "valid_concept_label",
]

logger = logging.getLogger(__name__)

FILE_FORMAT = "graphmem.graph"
FILE_VERSION = 1

# Concept labels are snake_case, 2-5 words.
_CONCEPT_LABEL_RE = re.compile(r"^[a-z0-9]+(?:_[a-z0-9]+){1,4}$")


def valid_concept_label(label: str) -> bool:
    return bool(_CONCEPT_LABEL_RE.match(label))


class NodeKind(str, Enum):
    EPISODE = "episode"
    FACT = "fact"
    REFLECTION = "reflection"
    CONCEPT = "concept"


class EdgeKind(str, Enum):
    NEXT = "NEXT"
    DERIVED_FROM = "DERIVED_FROM"
    DERIVED_FROM_FACT = "DERIVED_FROM_FACT"
    HAS_CONCEPT = "HAS_CONCEPT"
    ABOUT_CONCEPT = "ABOUT_CONCEPT"


# Allowed (source kind, target kind) per edge kind. Anything else is rejected.
EDGE_SCHEMA: dict[EdgeKind, tuple[NodeKind, NodeKind]] = {
    EdgeKind.NEXT: (NodeKind.EPISODE, NodeKind.EPISODE),
    EdgeKind.DERIVED_FROM: (NodeKind.FACT, NodeKind.EPISODE),
    EdgeKind.DERIVED_FROM_FACT: (NodeKind.REFLECTION, NodeKind.FACT),
    EdgeKind.HAS_CONCEPT: (NodeKind.EPISODE, NodeKind.CONCEPT),
    EdgeKind.ABOUT_CONCEPT: (NodeKind.FACT, NodeKind.CONCEPT),
}

# Node ids are prefixed by kind so the kind can be recovered from the id alone.
NODE_ID_PREFIXES: dict[NodeKind, str] = {
    NodeKind.EPISODE: "ep-",
    NodeKind.FACT: "fact-",
    NodeKind.REFLECTION: "refl-",
    NodeKind.CONCEPT: "concept-",
}


@dataclass(frozen=True)
class MemoryNode:
    """One memory item. Immutable once added to a graph.

    text holds the verbatim message for episodes, the claim for facts, the
    insight for reflections and the label for concepts. seq orders episodes
    within one conversation; belief is a confidence in [0, 1] carried only by
    facts and reflections. Concepts are never embedded.
    """

    id: str
    kind: NodeKind
    text: str
    conversation_id: str | None = None
    session_id: str | None = None
    timestamp: str | None = None
    seq: int | None = None
    speaker: str | None = None
    belief: float | None = None
    embedding: tuple[float, ...] | None = None

    @property
    def label(self) -> str:
        """Concept label alias; meaningful for concept nodes only."""
        return self.text


@dataclass(frozen=True)
class MemoryEdge:
    """Directed typed edge. Stored weight is fixed at 1.0 by design."""

    source: str
    target: str
    kind: EdgeKind
    weight: float = 1.0

    @property
    def key(self) -> tuple[str, str, EdgeKind]:
        return (self.source, self.target, self.kind)


@dataclass
class GraphState:
    """Opaque snapshot of a graph's internals, used for rollback."""

    nodes: dict[str, MemoryNode]
    out_edges: dict[str, list[MemoryEdge]]
    in_edges: dict[str, list[MemoryEdge]]
    edge_keys: set[tuple[str, str, EdgeKind]]
    edge_order: list[MemoryEdge]
    concept_labels: dict[str, str]


def _validate_node(node: MemoryNode) -> None:
    if not isinstance(node.id, str) or not node.id:
        raise InvariantViolationError("id", "must be a non-empty string")
    if not isinstance(node.kind, NodeKind):
        raise InvariantViolationError("kind", f"not a NodeKind: {node.kind!r}")
    if not isinstance(node.text, str) or not node.text:
        raise InvariantViolationError("text", "must be a non-empty string")

    if node.belief is not None:
        if node.kind not in (NodeKind.FACT, NodeKind.REFLECTION):
            raise InvariantViolationError("belief", f"{node.kind.value} nodes carry no belief")
        if not (0.0 <= node.belief <= 1.0):
            raise InvariantViolationError("belief", f"outside [0, 1]: {node.belief}")

    if node.kind is NodeKind.EPISODE:
        if node.seq is None or node.seq < 0:
            raise InvariantViolationError("seq", "episodes need a non-negative seq")
        if not node.timestamp:
            raise InvariantViolationError("timestamp", "episodes need a timestamp")
    else:
        if node.seq is not None:
            raise InvariantViolationError("seq", f"{node.kind.value} nodes carry no seq")
        if node.speaker is not None:
            raise InvariantViolationError("speaker", f"{node.kind.value} nodes carry no speaker")

    if node.kind is NodeKind.CONCEPT:
        if not _CONCEPT_LABEL_RE.match(node.text):
            raise InvariantViolationError(
                "text", f"concept label must be snake_case with 2-5 words: {node.text!r}"
            )
        if node.embedding is not None:
            raise InvariantViolationError("embedding", "concept nodes are never embedded")

    if node.embedding is not None:
        if len(node.embedding) == 0:
            raise InvariantViolationError("embedding", "empty embedding")
        for x in node.embedding:
            if x != x or x in (float("inf"), float("-inf")):
                raise InvariantViolationError("embedding", "non-finite component")


class MemoryGraph:
    """Append-only typed graph with duplicate and schema enforcement."""

    def __init__(self) -> None:
        self._nodes: dict[str, MemoryNode] = {}
        self._out: dict[str, list[MemoryEdge]] = {}
        self._in: dict[str, list[MemoryEdge]] = {}
        self._edge_keys: set[tuple[str, str, EdgeKind]] = set()
        self._edge_order: list[MemoryEdge] = []
        self._concept_labels: dict[str, str] = {}  # label -> node id

    # --- mutation ---------------------------------------------------------

    def add_node(self, node: MemoryNode) -> MemoryNode:
        """Validate and insert a node. Raises on duplicate id or label."""
        _validate_node(node)
        if node.id in self._nodes:
            raise DuplicateIdError(node.id)
        if node.kind is NodeKind.CONCEPT and node.text in self._concept_labels:
            raise DuplicateConceptLabelError(node.text)
        self._nodes[node.id] = node
        self._out.setdefault(node.id, [])
        self._in.setdefault(node.id, [])
        if node.kind is NodeKind.CONCEPT:
            self._concept_labels[node.text] = node.id
        return node

    def add_edge(self, source_id: str, target_id: str, kind: EdgeKind) -> MemoryEdge:
        """Insert a typed edge after checking endpoints against the schema."""
        if not isinstance(kind, EdgeKind):
            raise SchemaViolationError(f"not an EdgeKind: {kind!r}")
        src = self._nodes.get(source_id)
        if src is None:
            raise UnknownEndpointError(source_id)
        dst = self._nodes.get(target_id)
        if dst is None:
            raise UnknownEndpointError(target_id)
        want = EDGE_SCHEMA[kind]
        if (src.kind, dst.kind) != want:
            raise SchemaViolationError(
                f"{kind.value} requires {want[0].value}->{want[1].value}, "
                f"got {src.kind.value}->{dst.kind.value}"
            )
        key = (source_id, target_id, kind)
        if key in self._edge_keys:
            raise DuplicateEdgeError(f"{source_id} -{kind.value}-> {target_id}")
        edge = MemoryEdge(source_id, target_id, kind)
        self._edge_keys.add(key)
        self._edge_order.append(edge)
        self._out[source_id].append(edge)
        self._in[target_id].append(edge)
        return edge

    # --- inspection -------------------------------------------------------

    def node(self, node_id: str) -> MemoryNode:
        try:
            return self._nodes[node_id]
        except KeyError:
            raise UnknownNodeError(node_id) from None

    def has_node(self, node_id: str) -> bool:
        return node_id in self._nodes

    def nodes(self, kind: NodeKind | None = None) -> Iterator[MemoryNode]:
        """Nodes in insertion order, optionally filtered by kind."""
        for node in self._nodes.values():
            if kind is None or node.kind is kind:
                yield node

    def edges(self) -> Iterator[MemoryEdge]:
        """Edges in insertion order."""
        return iter(self._edge_order)

    def out_edges(self, node_id: str) -> list[MemoryEdge]:
        self.node(node_id)
        return list(self._out[node_id])

    def in_edges(self, node_id: str) -> list[MemoryEdge]:
        self.node(node_id)
        return list(self._in[node_id])

    def neighbors(self, node_id: str, direction: str = "both") -> list[tuple[EdgeKind, str]]:
        """Adjacent (edge kind, neighbor id) pairs in a deterministic order.

        direction is one of "out", "in", "both". Order is by neighbor id,
        then edge kind, so traversals do not depend on insertion history.
        """
        self.node(node_id)
        pairs: list[tuple[EdgeKind, str]] = []
        if direction in ("out", "both"):
            pairs.extend((e.kind, e.target) for e in self._out[node_id])
        if direction in ("in", "both"):
            pairs.extend((e.kind, e.source) for e in self._in[node_id])
        if direction not in ("out", "in", "both"):
            raise ValueError(f"direction must be out/in/both, got {direction!r}")
        pairs.sort(key=lambda p: (p[1], p[0].value))
        return pairs

    def degree(self, node_id: str) -> int:
        """Total structural degree: stored out-edges plus stored in-edges."""
        self.node(node_id)
        return len(self._out[node_id]) + len(self._in[node_id])

    def concept_id_for_label(self, label: str) -> str | None:
        return self._concept_labels.get(label)

    def concept_labels(self) -> list[str]:
        return sorted(self._concept_labels)

    def node_count(self) -> int:
        return len(self._nodes)

    def edge_count(self) -> int:
        return len(self._edge_order)

    def max_seq(self, conversation_id: str) -> int:
        """Highest episode seq for a conversation, or -1 when none exist."""
        best = -1
        for node in self._nodes.values():
            if (
                node.kind is NodeKind.EPISODE
                and node.conversation_id == conversation_id
                and node.seq is not None
            ):
                best = max(best, node.seq)
        return best

    def stats(self) -> dict:
        """Counts by node kind and edge kind plus a degree histogram."""
        node_counts = {k.value: 0 for k in NodeKind}
        for node in self._nodes.values():
            node_counts[node.kind.value] += 1
        edge_counts = {k.value: 0 for k in EdgeKind}
        for edge in self._edge_order:
            edge_counts[edge.kind.value] += 1
        buckets = [(0, 0), (1, 1), (2, 2), (3, 5), (6, 10), (11, 20), (21, 50)]
        histogram = {f"{lo}" if lo == hi else f"{lo}-{hi}": 0 for lo, hi in buckets}
        histogram["51+"] = 0
        for node_id in self._nodes:
            d = self.degree(node_id)
            for lo, hi in buckets:
                if lo <= d <= hi:
                    histogram[f"{lo}" if lo == hi else f"{lo}-{hi}"] += 1
                    break
            else:
                histogram["51+"] += 1
        top_concepts = sorted(
            (
                (self.degree(node.id), node.text)
                for node in self.nodes(NodeKind.CONCEPT)
            ),
            key=lambda t: (-t[0], t[1]),
        )[:20]
        return {
            "nodes": node_counts,
            "edges": edge_counts,
            "degree_histogram": histogram,
            "top_concepts": [{"label": label, "degree": d} for d, label in top_concepts],
        }

    # --- snapshot / rollback ---------------------------------------------

    def snapshot(self) -> GraphState:
        """Cheap copy of internal state; nodes and edges are immutable."""
        return GraphState(
            nodes=dict(self._nodes),
            out_edges={k: list(v) for k, v in self._out.items()},
            in_edges={k: list(v) for k, v in self._in.items()},
            edge_keys=set(self._edge_keys),
            edge_order=list(self._edge_order),
            concept_labels=dict(self._concept_labels),
        )

    def restore(self, state: GraphState) -> None:
        """Replace internal state with a previously taken snapshot."""
        self._nodes = dict(state.nodes)
        self._out = {k: list(v) for k, v in state.out_edges.items()}
        self._in = {k: list(v) for k, v in state.in_edges.items()}
        self._edge_keys = set(state.edge_keys)
        self._edge_order = list(state.edge_order)
        self._concept_labels = dict(state.concept_labels)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, MemoryGraph):
            return NotImplemented
        return self._nodes == other._nodes and self._edge_keys == other._edge_keys

    def __repr__(self) -> str:
        return f"MemoryGraph(nodes={len(self._nodes)}, edges={len(self._edge_order)})"

    # --- persistence ------------------------------------------------------

    def embedding_dim(self) -> int | None:
        """Dimensionality of stored embeddings, or None when none exist."""
        dim: int | None = None
        for node in self._nodes.values():
            if node.embedding is None:
                continue
            if dim is None:
                dim = len(node.embedding)
            elif len(node.embedding) != dim:
                raise InvariantViolationError(
                    "embedding", f"mixed dimensionality: {dim} and {len(node.embedding)}"
                )
        return dim

    def persist(self, path: str | Path) -> None:
        """Write the graph as line-delimited JSON records.

        The first line is a header carrying format name, version, embedding
        dimensionality and record counts. Node and edge records follow in
        insertion order so identical build runs produce identical bytes.
        Embeddings are serialized with full float precision and round-trip
        exactly.
        """
        path = Path(path)
        header = {
            "format": FILE_FORMAT,
            "version": FILE_VERSION,
            "embedding_dim": self.embedding_dim(),
            "nodes": len(self._nodes),
            "edges": len(self._edge_order),
        }
        lines = [json.dumps(header, separators=(",", ":"))]
        for node in self._nodes.values():
            rec: dict = {"t": "node", "id": node.id, "kind": node.kind.value, "text": node.text}
            for key in ("conversation_id", "session_id", "timestamp", "seq", "speaker", "belief"):
                value = getattr(node, key)
                if value is not None:
                    rec[key] = value
            if node.embedding is not None:
                rec["embedding"] = list(node.embedding)
            lines.append(json.dumps(rec, separators=(",", ":")))
        for edge in self._edge_order:
            rec = {"t": "edge", "source": edge.source, "target": edge.target, "kind": edge.kind.value}
            lines.append(json.dumps(rec, separators=(",", ":")))
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "MemoryGraph":
        """Rebuild a graph from :meth:`persist` output.

        Every structural problem is reported as CorruptFileError with the
        1-based line number; load(persist(g)) == g for any valid graph.
        """
        path = Path(path)
        text = path.read_text(encoding="utf-8")
        graph = cls()
        seen_header = False
        expect_nodes = expect_edges = 0
        line_no = 0
        for line_no, raw in enumerate(text.splitlines(), start=1):
            if not raw.strip():
                continue
            try:
                rec = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise CorruptFileError(line_no, f"bad JSON: {exc.msg}") from exc
            if not isinstance(rec, dict):
                raise CorruptFileError(line_no, "record is not an object")
            if not seen_header:
                if rec.get("format") != FILE_FORMAT:
                    raise CorruptFileError(line_no, f"unknown format {rec.get('format')!r}")
                if rec.get("version") != FILE_VERSION:
                    raise CorruptFileError(line_no, f"unsupported version {rec.get('version')!r}")
                expect_nodes = rec.get("nodes", 0)
                expect_edges = rec.get("edges", 0)
                seen_header = True
                continue
            tag = rec.get("t")
            try:
                if tag == "node":
                    embedding = rec.get("embedding")
                    graph.add_node(
                        MemoryNode(
                            id=rec["id"],
                            kind=NodeKind(rec["kind"]),
                            text=rec["text"],
                            conversation_id=rec.get("conversation_id"),
                            session_id=rec.get("session_id"),
                            timestamp=rec.get("timestamp"),
                            seq=rec.get("seq"),
                            speaker=rec.get("speaker"),
                            belief=rec.get("belief"),
                            embedding=tuple(embedding) if embedding is not None else None,
                        )
                    )
                elif tag == "edge":
                    graph.add_edge(rec["source"], rec["target"], EdgeKind(rec["kind"]))
                else:
                    raise CorruptFileError(line_no, f"unknown record tag {tag!r}")
            except CorruptFileError:
                raise
            except (KeyError, ValueError, TypeError, StoreError) as exc:
                raise CorruptFileError(line_no, f"bad record: {exc}") from exc
        if not seen_header:
            raise CorruptFileError(max(line_no, 1), "missing header")
        if graph.node_count() != expect_nodes or graph.edge_count() != expect_edges:
            raise CorruptFileError(
                line_no,
                f"count mismatch: header says {expect_nodes} nodes/{expect_edges} edges, "
                f"file has {graph.node_count()}/{graph.edge_count()}",
            )
        return graph
