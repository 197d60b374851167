"""Hybrid retrieval: seeded graph random walks blended with cosine KNN.

A query is embedded once, the most similar nodes seed a personalized
random-walk ranking over a bounded neighborhood, and the final score adds
the walk component onto the semantic component. With w_ppr set to 0 the
graph machinery is skipped entirely and ranking degenerates to pure KNN,
which is exactly the semantic-only ablation arm.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    EmptyCandidatesError,
    EmptyGraphError,
    NonStochasticError,
    UnknownNodeError,
)
from .graph import EdgeKind, MemoryEdge, MemoryGraph, NodeKind
from .llm import LLMGateway
from .vectors import VectorIndex

__all__ = [
    "DEFAULT_EDGE_WEIGHTS",
    "RetrievalConfig",
    "ScoredCandidate",
    "Subgraph",
    "TransitionMatrix",
    "PPRResult",
    "hub_damping_factor",
    "select_seeds",
    "expand",
    "transition_matrix",
    "ppr",
    "retrieve",
]

logger = logging.getLogger(__name__)

# Traversal weight per edge type. Derivation chains (reflection-to-fact) are
# traversed at a discount; everything else shares one base weight.
DEFAULT_EDGE_WEIGHTS: dict[EdgeKind, float] = {
    EdgeKind.NEXT: 0.8,
    EdgeKind.DERIVED_FROM: 0.8,
    EdgeKind.DERIVED_FROM_FACT: 0.5,
    EdgeKind.HAS_CONCEPT: 0.8,
    EdgeKind.ABOUT_CONCEPT: 0.8,
}

_MASS_TOLERANCE = 1e-9

# Node kinds that can appear in a candidate pool; concepts route the walk
# but are never surfaced (they carry no embedding and never enter a pack).
RETRIEVABLE_KINDS = frozenset({NodeKind.EPISODE, NodeKind.FACT, NodeKind.REFLECTION})


@dataclass
class RetrievalConfig:
    """Tunable retrieval parameters; defaults are the tuned operating point."""

    alpha: float = 0.6  # random-walk continuation probability
    k_seeds: int = 40
    depth: int = 2
    hub_threshold: int = 50
    w_ppr: float = 0.1
    w_sim: float = 1.0
    edge_weights: dict[EdgeKind, float] = field(
        default_factory=lambda: dict(DEFAULT_EDGE_WEIGHTS)
    )
    max_facts: int = 60
    max_reflections: int = 20
    max_episodes: int = 80
    max_memory_words: int = 1000
    ppr_max_iters: int = 200
    ppr_tolerance: float = 1e-6  # L1 bound on distance to the exact fixed point

    @property
    def budget_total(self) -> int:
        return self.max_facts + self.max_reflections + self.max_episodes

    @property
    def pool_size(self) -> int:
        # pool twice the packing budget so trimming has slack to choose from
        return 2 * self.budget_total

    def validate(self) -> None:
        if not (0.0 < self.alpha < 1.0):
            raise ValueError(f"alpha must be in (0, 1), got {self.alpha}")
        if self.k_seeds < 1:
            raise ValueError("k_seeds must be at least 1")
        if self.depth < 0:
            raise ValueError("depth must be non-negative")
        if self.hub_threshold < 1:
            raise ValueError("hub_threshold must be at least 1")
        if self.w_ppr < 0 or self.w_sim < 0:
            raise ValueError("score weights must be non-negative")
        for kind in EdgeKind:
            if self.edge_weights.get(kind, 0) <= 0:
                raise ValueError(f"edge weight for {kind.value} must be positive")
        for name in ("max_facts", "max_reflections", "max_episodes", "max_memory_words"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.ppr_max_iters < 1 or self.ppr_tolerance <= 0:
            raise ValueError("ppr_max_iters must be >= 1 and ppr_tolerance > 0")


@dataclass(frozen=True)
class ScoredCandidate:
    """One ranked retrieval hit.

    sim is the raw cosine against the query; ppr is the walk score after
    max-normalization over the candidate set (0 for nodes the walk never
    reached); score is the final blend the ranking sorts by.
    """

    node_id: str
    sim: float
    ppr: float
    score: float


@dataclass(frozen=True)
class Subgraph:
    """Induced subgraph: collected node ids plus every edge between them."""

    nodes: tuple[str, ...]
    edges: tuple[MemoryEdge, ...]


def hub_damping_factor(degree: int, threshold: int) -> float:
    """Scale applied to a node's outgoing traversal weights before row
    normalization; below the threshold it is exactly 1."""
    if degree <= 0:
        return 1.0
    return min(1.0, threshold / degree)


def select_seeds(candidates: Sequence[tuple[str, float]], k: int) -> dict[str, float]:
    """Teleport distribution over the top-k candidates.

    candidates are (node id, cosine) pairs already sorted best-first. Weights
    are squared clamped similarities, which concentrates teleport mass on the
    strongest seeds; if every seed clamps to zero the distribution falls back
    to uniform so the walk stays well defined.
    """
    if not candidates:
        raise EmptyCandidatesError("no candidates to seed from")
    top = candidates[:k]
    weights = [max(sim, 0.0) ** 2 for _, sim in top]
    total = sum(weights)
    if total > 0.0:
        return {node_id: w / total for (node_id, _), w in zip(top, weights)}
    uniform = 1.0 / len(top)
    return {node_id: uniform for node_id, _ in top}


def expand(graph: MemoryGraph, seeds: Iterable[str], depth: int) -> Subgraph:
    """Breadth-first neighborhood of the seed set, ignoring edge direction.

    Collects every node within `depth` hops and every stored edge whose two
    endpoints were collected, in a deterministic order.
    """
    frontier = list(dict.fromkeys(seeds))
    for node_id in frontier:
        graph.node(node_id)  # raises UnknownNodeError early
    visited = set(frontier)
    for _ in range(depth):
        nxt: list[str] = []
        for node_id in frontier:
            for _, other in graph.neighbors(node_id, "both"):
                if other not in visited:
                    visited.add(other)
                    nxt.append(other)
        frontier = nxt
    nodes = tuple(sorted(visited))
    edges = sorted(
        (e for nid in nodes for e in graph.out_edges(nid) if e.target in visited),
        key=lambda e: (e.source, e.target, e.kind.value),
    )
    return Subgraph(nodes=nodes, edges=tuple(edges))


@dataclass
class TransitionMatrix:
    """Row-stochastic transition structure over a node list.

    weights holds the per-row pre-normalization traversal weights (after hub
    dampening); probs holds the same rows normalized to sum to one. Rows
    with no outgoing weight are sinks.
    """

    nodes: list[str]
    index: dict[str, int]
    weights: list[list[tuple[int, float]]]
    probs: list[list[tuple[int, float]]]
    sinks: list[bool]

    @classmethod
    def _from_rows(cls, nodes: list[str], rows: list[dict[int, float]]) -> "TransitionMatrix":
        weights = []
        probs = []
        sinks = []
        for row in rows:
            entries = sorted(row.items())
            total = sum(w for _, w in entries)
            weights.append([(j, w) for j, w in entries])
            if total > 0:
                probs.append([(j, w / total) for j, w in entries])
                sinks.append(False)
            else:
                probs.append([])
                sinks.append(True)
        return cls(
            nodes=nodes,
            index={nid: i for i, nid in enumerate(nodes)},
            weights=weights,
            probs=probs,
            sinks=sinks,
        )

    @classmethod
    def from_directed(
        cls, nodes: Sequence[str], edges: Iterable[tuple[str, str, float]]
    ) -> "TransitionMatrix":
        """Build directly from directed weighted arcs, without symmetrization
        or dampening. Meant for tests and ablations that need full control."""
        node_list = list(nodes)
        index = {nid: i for i, nid in enumerate(node_list)}
        rows: list[dict[int, float]] = [dict() for _ in node_list]
        for src, dst, w in edges:
            if w <= 0:
                continue
            i, j = index[src], index[dst]
            rows[i][j] = rows[i].get(j, 0.0) + float(w)
        return cls._from_rows(node_list, rows)


def transition_matrix(
    graph: MemoryGraph, subgraph: Subgraph, config: RetrievalConfig
) -> TransitionMatrix:
    """Symmetrized, type-weighted, hub-dampened transition matrix.

    Every stored edge is traversable in both directions at its type's base
    weight. Each source row is then scaled by the hub factor computed from
    the node's degree in the FULL graph (not the subgraph), and finally
    normalized to probabilities. Dampening happens before normalization, so
    the factor is observable in `weights` even though each surviving row
    still sums to one in `probs`.
    """
    nodes = list(subgraph.nodes)
    index = {nid: i for i, nid in enumerate(nodes)}
    rows: list[dict[int, float]] = [dict() for _ in nodes]
    for edge in subgraph.edges:
        w = config.edge_weights[edge.kind]
        i, j = index[edge.source], index[edge.target]
        rows[i][j] = rows[i].get(j, 0.0) + w
        rows[j][i] = rows[j].get(i, 0.0) + w
    for i, nid in enumerate(nodes):
        factor = hub_damping_factor(graph.degree(nid), config.hub_threshold)
        if factor < 1.0:
            rows[i] = {j: w * factor for j, w in rows[i].items()}
    return TransitionMatrix._from_rows(nodes, rows)


@dataclass
class PPRResult:
    """Outcome of one personalized random-walk solve.

    raw is the converged distribution (sums to one); scores is raw after
    max-normalization into [0, 1]. mass_history records the L1 mass after
    the start vector and after every iteration, for conservation checks.
    """

    scores: dict[str, float]
    raw: dict[str, float]
    iterations: int
    converged: bool
    mass_history: list[float]


def ppr(
    matrix: TransitionMatrix, teleport: dict[str, float], config: RetrievalConfig
) -> PPRResult:
    """Personalized PageRank with sink mass redistributed via the teleport.

    Update rule per iteration, with S the total mass currently on sink rows:

        r <- (1 - alpha) * v + alpha * (P^T r) + alpha * S * v

    Redistribution keeps total mass at exactly one, so rankings are
    comparable across queries regardless of how many sinks the neighborhood
    contains. Iteration starts at v; ppr_tolerance bounds the L1 distance of
    the returned vector from the exact fixed point (see the stopping rule
    below), with ppr_max_iters as the hard cap.
    """
    n = len(matrix.nodes)
    if n == 0:
        raise EmptyGraphError("transition matrix has no nodes")
    v = np.zeros(n)
    for node_id, weight in teleport.items():
        if node_id not in matrix.index:
            raise UnknownNodeError(f"teleport node {node_id!r} not in subgraph")
        if weight < 0:
            raise NonStochasticError(f"negative teleport weight for {node_id!r}")
        v[matrix.index[node_id]] = weight
    if abs(float(v.sum()) - 1.0) > _MASS_TOLERANCE:
        raise NonStochasticError(f"teleport sums to {float(v.sum())!r}, expected 1.0")

    src: list[int] = []
    dst: list[int] = []
    wgt: list[float] = []
    for i, row in enumerate(matrix.probs):
        for j, p in row:
            src.append(i)
            dst.append(j)
            wgt.append(p)
    src_a = np.asarray(src, dtype=np.intp)
    dst_a = np.asarray(dst, dtype=np.intp)
    wgt_a = np.asarray(wgt)
    sink_mask = np.asarray(matrix.sinks, dtype=bool)
    alpha = config.alpha
    # The update map is an alpha-contraction in L1 (the sink-completed
    # transition operator is stochastic), so the a-posteriori bound
    # ||r_k - r*||_1 <= alpha/(1-alpha) * ||r_k - r_{k-1}||_1 holds.
    # Stopping once the step falls below tol*(1-alpha)/alpha therefore
    # guarantees the returned vector sits within tol of the exact fixed
    # point; a raw step-below-tol rule would only bound it by 1.5*tol here.
    step_threshold = config.ppr_tolerance * (1.0 - alpha) / alpha

    r = v.copy()
    mass_history = [float(r.sum())]
    iterations = 0
    converged = False
    for iterations in range(1, config.ppr_max_iters + 1):
        if src_a.size:
            flow = np.bincount(dst_a, weights=r[src_a] * wgt_a, minlength=n)
        else:
            flow = np.zeros(n)
        sink_mass = float(r[sink_mask].sum())
        r_next = (1.0 - alpha) * v + alpha * flow + alpha * sink_mass * v
        mass_history.append(float(r_next.sum()))
        step = float(np.abs(r_next - r).sum())
        r = r_next
        if step < step_threshold:
            converged = True
            break

    raw = {nid: float(r[i]) for i, nid in enumerate(matrix.nodes)}
    peak = float(r.max())
    if peak > 0:
        scores = {nid: float(r[i] / peak) for i, nid in enumerate(matrix.nodes)}
    else:
        scores = {nid: 0.0 for nid in matrix.nodes}
    return PPRResult(
        scores=scores,
        raw=raw,
        iterations=iterations,
        converged=converged,
        mass_history=mass_history,
    )


def _max_normalize(values: list[float]) -> list[float]:
    peak = max(values) if values else 0.0
    if peak <= 0.0:
        return [0.0] * len(values)
    return [v / peak for v in values]


def retrieve(
    graph: MemoryGraph,
    index: VectorIndex,
    query_text: str,
    gateway: LLMGateway,
    config: RetrievalConfig | None = None,
    *,
    kinds: frozenset[NodeKind] | set[NodeKind] | None = None,
) -> list[ScoredCandidate]:
    """Rank memory nodes for a query.

    Pipeline: embed the query, take a KNN pool of pool_size nodes over the
    retrievable kinds, seed a personalized walk from the top k_seeds, expand
    the neighborhood to `depth` hops, solve the walk, then score the union
    of pool and walk-reached nodes as

        score = w_ppr * ppr_norm + w_sim * sim_norm

    with both components max-normalized over that candidate set. Nodes the
    walk never reached score ppr 0; nodes outside the pool get their cosine
    computed on demand. Results are sorted by descending score with ties
    broken by ascending node id. When w_ppr is 0 the walk is skipped and the
    ranking equals pure KNN over the pool.
    """
    cfg = config or RetrievalConfig()
    cfg.validate()
    wanted_kinds = frozenset(kinds) if kinds is not None else RETRIEVABLE_KINDS
    if graph.node_count() == 0 or len(index) == 0:
        raise EmptyGraphError("nothing has been ingested")
    query_vec = gateway.embed([query_text])[0]
    pool = index.knn(query_vec, cfg.pool_size, kind_filter=set(wanted_kinds))
    if not pool:
        raise EmptyGraphError("no retrievable nodes for the requested kinds")

    sim_by_id = dict(pool)
    candidate_ids = [node_id for node_id, _ in pool]
    ppr_by_id: dict[str, float] = {}

    if cfg.w_ppr > 0.0:
        teleport = select_seeds(pool, cfg.k_seeds)
        subgraph = expand(graph, teleport.keys(), cfg.depth)
        matrix = transition_matrix(graph, subgraph, cfg)
        walk = ppr(matrix, teleport, cfg)
        ppr_by_id = walk.scores
        for node_id in subgraph.nodes:
            if node_id in sim_by_id:
                continue
            if graph.node(node_id).kind not in wanted_kinds:
                continue  # concepts and filtered kinds guide the walk only
            sim_by_id[node_id] = (
                index.similarity(node_id, query_vec) if node_id in index else 0.0
            )
            candidate_ids.append(node_id)

    sims = [sim_by_id[c] for c in candidate_ids]
    pprs = [ppr_by_id.get(c, 0.0) for c in candidate_ids]
    sim_norm = _max_normalize(sims)
    ppr_norm = _max_normalize(pprs)
    scored = [
        ScoredCandidate(
            node_id=c,
            sim=sims[i],
            ppr=ppr_norm[i],
            score=cfg.w_ppr * ppr_norm[i] + cfg.w_sim * sim_norm[i],
        )
        for i, c in enumerate(candidate_ids)
    ]
    scored.sort(key=lambda c: (-c.score, c.node_id))
    return scored
