"""Exact cosine-similarity index over node embeddings.

Brute-force scan over a dense matrix. Graphs here hold at most a few tens of
thousands of embedded nodes, so one matmul per query beats the bookkeeping of
an approximate index, and exactness keeps retrieval deterministic. Node kind
is recovered from the id prefix (ep-, fact-, refl-, concept-), which is what
lets knn filter by kind without a second argument at upsert time.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, InvalidVectorError, UnknownNodeError
from .graph import NODE_ID_PREFIXES, MemoryGraph, NodeKind

__all__ = ["EmbeddingRecord", "VectorIndex", "kind_of_id", "index_from_graph"]

logger = logging.getLogger(__name__)

_PREFIX_TO_KIND = {prefix: kind for kind, prefix in NODE_ID_PREFIXES.items()}


def kind_of_id(node_id: str) -> NodeKind | None:
    """Node kind implied by an id prefix, or None for foreign ids."""
    for prefix, kind in _PREFIX_TO_KIND.items():
        if node_id.startswith(prefix):
            return kind
    return None


@dataclass(frozen=True)
class EmbeddingRecord:
    node_id: str
    vector: tuple[float, ...]
    norm: float


class VectorIndex:
    """Mapping of node id to embedding with exact cosine KNN."""

    def __init__(self, dim: int | None = None) -> None:
        self._dim = dim
        self._vectors: dict[str, np.ndarray] = {}  # raw vectors, float64
        self._norms: dict[str, float] = {}
        self._cache: tuple[list[str], np.ndarray] | None = None  # ids, unit rows

    @property
    def dim(self) -> int | None:
        return self._dim

    def __len__(self) -> int:
        return len(self._vectors)

    def __contains__(self, node_id: str) -> bool:
        return node_id in self._vectors

    def ids(self) -> list[str]:
        return list(self._vectors)

    def _check_vector(self, vector) -> np.ndarray:
        arr = np.asarray(vector, dtype=np.float64)
        if arr.ndim != 1 or arr.size == 0:
            raise InvalidVectorError(f"expected a non-empty 1-d vector, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise InvalidVectorError("vector has non-finite components")
        if self._dim is None:
            self._dim = int(arr.size)
        elif arr.size != self._dim:
            raise DimensionMismatchError(f"expected dim {self._dim}, got {arr.size}")
        return arr

    def upsert(self, node_id: str, vector) -> None:
        """Insert or replace the embedding for a node id."""
        arr = self._check_vector(vector)
        norm = float(np.linalg.norm(arr))
        if norm == 0.0:
            raise InvalidVectorError(f"zero-norm vector for {node_id!r}")
        self._vectors[node_id] = arr
        self._norms[node_id] = norm
        self._cache = None

    def record(self, node_id: str) -> EmbeddingRecord:
        if node_id not in self._vectors:
            raise UnknownNodeError(node_id)
        arr = self._vectors[node_id]
        return EmbeddingRecord(node_id, tuple(float(x) for x in arr), self._norms[node_id])

    def similarity(self, node_id: str, query) -> float:
        """Cosine similarity between one stored node and a query vector."""
        if node_id not in self._vectors:
            raise UnknownNodeError(node_id)
        q = self._check_vector(query)
        qn = float(np.linalg.norm(q))
        if qn == 0.0:
            raise InvalidVectorError("zero-norm query")
        arr = self._vectors[node_id]
        return float(arr @ q / (self._norms[node_id] * qn))

    def _unit_matrix(self) -> tuple[list[str], np.ndarray]:
        if self._cache is None:
            ids = list(self._vectors)
            if ids:
                rows = np.stack([self._vectors[i] / self._norms[i] for i in ids])
            else:
                rows = np.zeros((0, self._dim or 0))
            self._cache = (ids, rows)
        return self._cache

    def knn(self, query, k: int, kind_filter: set[NodeKind] | None = None) -> list[tuple[str, float]]:
        """Top-k (node id, cosine) pairs, highest first.

        Negative cosines are returned as-is; callers decide how to treat
        them. Ties are broken by ascending node id so rankings are stable.
        kind_filter keeps only ids whose prefix maps to one of the given
        kinds; ids with no known prefix pass only an absent filter.
        """
        if k <= 0:
            return []
        q = self._check_vector(query)
        qn = float(np.linalg.norm(q))
        if qn == 0.0:
            raise InvalidVectorError("zero-norm query")
        ids, rows = self._unit_matrix()
        if not ids:
            return []
        if kind_filter is not None:
            keep = [i for i, node_id in enumerate(ids) if kind_of_id(node_id) in kind_filter]
            if not keep:
                return []
            ids = [ids[i] for i in keep]
            rows = rows[keep]
        sims = rows @ (q / qn)
        order = np.lexsort((np.array(ids), -sims))[:k]
        return [(ids[i], float(sims[i])) for i in order]

    # --- snapshot / rollback ---------------------------------------------

    def snapshot(self) -> dict:
        """Copy of internal state; stored arrays are treated as immutable."""
        return {"dim": self._dim, "vectors": dict(self._vectors), "norms": dict(self._norms)}

    def restore(self, state: dict) -> None:
        self._dim = state["dim"]
        self._vectors = dict(state["vectors"])
        self._norms = dict(state["norms"])
        self._cache = None


def index_from_graph(graph: MemoryGraph) -> VectorIndex:
    """Index rebuilt from the embeddings stored on a graph's nodes.

    Embeddings persist with the graph file, so a loaded graph plus this
    rebuild is the complete retrieval state.
    """
    index = VectorIndex()
    for node in graph.nodes():
        if node.embedding is not None:
            index.upsert(node.id, node.embedding)
    return index
