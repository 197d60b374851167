"""Shared fixture builders: random graphs, conversations, benchmark files.

Everything is seeded; the same seed always produces the same object so test
failures replay exactly.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from graphmem.builder import ConversationSession, ConversationTurn
from graphmem.graph import EdgeKind, MemoryEdge, MemoryGraph, MemoryNode, NodeKind
from graphmem.retrieval import Subgraph, TransitionMatrix
from graphmem.vectors import VectorIndex

DIM = 8

_WORDS = (
    "lake sunrise painting hospital school mountain prize contest weekend "
    "teacher nurse coffee garden guitar marathon recipe puppy camera novel "
    "winter summer concert museum library bicycle sketch harvest festival"
).split()


def unit_vector(rng: np.random.Generator, dim: int = DIM) -> list[float]:
    vec = rng.standard_normal(dim)
    vec /= np.linalg.norm(vec)
    return [float(x) for x in vec]


def sentence(rng: np.random.Generator, n_words: int = 8) -> str:
    return " ".join(rng.choice(_WORDS) for _ in range(n_words))


# --- random transition structures ------------------------------------------


def random_transition(
    rng: np.random.Generator,
    max_nodes: int = 50,
    sink_fraction: float = 0.2,
    all_sinks: bool = False,
) -> tuple[TransitionMatrix, dict[str, float]]:
    """Random directed weighted transition matrix plus a random teleport.

    A sink_fraction of rows keeps no outgoing arcs; all_sinks empties every
    row, the degenerate case where the walk must return the teleport itself.
    """
    n = int(rng.integers(2, max_nodes + 1))
    nodes = [f"n{i:03d}" for i in range(n)]
    edges: list[tuple[str, str, float]] = []
    if not all_sinks:
        sinks = set(rng.choice(n, size=int(n * sink_fraction), replace=False).tolist())
        for i in range(n):
            if i in sinks:
                continue
            fanout = int(rng.integers(1, min(6, n)))
            targets = rng.choice(n, size=fanout, replace=False)
            for j in targets:
                edges.append((nodes[i], nodes[int(j)], float(rng.uniform(0.1, 2.0))))
    matrix = TransitionMatrix.from_directed(nodes, edges)

    n_seeds = int(rng.integers(1, min(8, n) + 1))
    seed_ids = rng.choice(n, size=n_seeds, replace=False)
    weights = rng.uniform(0.1, 1.0, size=n_seeds)
    weights /= weights.sum()
    teleport = {nodes[int(i)]: float(w) for i, w in zip(seed_ids, weights)}
    # renormalize exactly; float division above can drift at the last ulp
    total = sum(teleport.values())
    teleport = {k: w / total for k, w in teleport.items()}
    return matrix, teleport


# --- random legal memory graphs --------------------------------------------


def build_legal_graph(
    rng: np.random.Generator,
    n_episodes: int = 12,
    n_facts: int = 6,
    n_reflections: int = 2,
    n_concepts: int = 3,
    conversation_id: str = "conv-t",
    dim: int = DIM,
) -> tuple[MemoryGraph, VectorIndex]:
    """Random graph obeying the full node/edge schema, with embeddings."""
    graph = MemoryGraph()
    index = VectorIndex()

    episodes = []
    for i in range(n_episodes):
        vec = unit_vector(rng, dim)
        node = MemoryNode(
            id=f"ep-{i:04d}",
            kind=NodeKind.EPISODE,
            text=sentence(rng),
            conversation_id=conversation_id,
            session_id=f"session_{i // 4 + 1}",
            timestamp=f"2023-05-{(i // 4) + 1:02d}T10:00:00",
            seq=i,
            speaker="Ava" if i % 2 == 0 else "Noor",
            embedding=tuple(vec),
        )
        graph.add_node(node)
        index.upsert(node.id, vec)
        episodes.append(node)
    for prev, cur in zip(episodes, episodes[1:]):
        if prev.session_id == cur.session_id:
            graph.add_edge(prev.id, cur.id, EdgeKind.NEXT)

    concepts = []
    for i in range(n_concepts):
        node = MemoryNode(
            id=f"concept-{i:04d}",
            kind=NodeKind.CONCEPT,
            text=f"topic_{i}_label",
            conversation_id=conversation_id,
        )
        graph.add_node(node)
        concepts.append(node)

    facts = []
    for i in range(n_facts):
        vec = unit_vector(rng, dim)
        node = MemoryNode(
            id=f"fact-{i:04d}",
            kind=NodeKind.FACT,
            text=sentence(rng, 6),
            conversation_id=conversation_id,
            belief=float(rng.uniform(0.5, 1.0)),
            embedding=tuple(vec),
        )
        graph.add_node(node)
        index.upsert(node.id, vec)
        facts.append(node)
        for ep in rng.choice(n_episodes, size=int(rng.integers(1, 3)), replace=False):
            graph.add_edge(node.id, episodes[int(ep)].id, EdgeKind.DERIVED_FROM)
        if n_concepts:
            c = int(rng.integers(0, n_concepts))
            graph.add_edge(node.id, concepts[c].id, EdgeKind.ABOUT_CONCEPT)

    for i in range(n_reflections):
        vec = unit_vector(rng, dim)
        node = MemoryNode(
            id=f"refl-{i:04d}",
            kind=NodeKind.REFLECTION,
            text=sentence(rng, 10),
            conversation_id=conversation_id,
            belief=0.8,
            embedding=tuple(vec),
        )
        graph.add_node(node)
        index.upsert(node.id, vec)
        size = int(rng.integers(1, min(3, n_facts) + 1))
        for f in rng.choice(n_facts, size=size, replace=False):
            graph.add_edge(node.id, facts[int(f)].id, EdgeKind.DERIVED_FROM_FACT)

    for i, ep in enumerate(episodes):
        if n_concepts and i % 3 == 0:
            c = int(rng.integers(0, n_concepts))
            graph.add_edge(ep.id, concepts[c].id, EdgeKind.HAS_CONCEPT)

    return graph, index


def whole_graph_subgraph(graph: MemoryGraph) -> Subgraph:
    nodes = tuple(sorted(n.id for n in graph.nodes()))
    edges = tuple(
        sorted(graph.edges(), key=lambda e: (e.source, e.target, e.kind.value))
    )
    return Subgraph(nodes=nodes, edges=edges)


# --- conversations ----------------------------------------------------------


def make_session(session_id: str, timestamp: str, texts: list[tuple[str, str]]) -> ConversationSession:
    return ConversationSession(
        session_id=session_id,
        timestamp=timestamp,
        turns=tuple(ConversationTurn(speaker, text) for speaker, text in texts),
    )


def two_session_conversation() -> list[ConversationSession]:
    return [
        make_session(
            "session_1",
            "2023-05-08T13:56:00",
            [
                ("Melanie", "I spent the weekend painting a sunrise over the lake."),
                ("Caroline", "That sounds beautiful, I love painting landscapes too."),
                ("Melanie", "Painting calms me down after work at the hospital."),
                ("Caroline", "I work at a school, the kids keep me busy."),
            ],
        ),
        make_session(
            "session_2",
            "2023-05-20T10:15:00",
            [
                ("Melanie", "My painting of the lake won a local art prize!"),
                ("Caroline", "Congratulations! You should enter more contests."),
                ("Melanie", "I plan to paint the mountains next month."),
            ],
        ),
    ]


def many_session_conversation(rng: np.random.Generator, n_sessions: int = 10, turns_per_session: int = 4) -> list[ConversationSession]:
    speakers = ("Ava", "Noor")
    sessions = []
    for s in range(1, n_sessions + 1):
        texts = [
            (speakers[t % 2], sentence(rng, 9))
            for t in range(turns_per_session)
        ]
        sessions.append(make_session(f"session_{s}", f"2023-06-{s:02d}T09:00:00", texts))
    return sessions


def conversation_file_payload(conversation_id: str, sessions: list[ConversationSession]) -> dict:
    return {
        "conversation_id": conversation_id,
        "sessions": [
            {
                "session_id": s.session_id,
                "timestamp": s.timestamp,
                "turns": [{"speaker": t.speaker, "text": t.text} for t in s.turns],
            }
            for s in sessions
        ],
    }


# --- benchmark-shaped files --------------------------------------------------

# Published composition: per-conversation totals and per-category totals.
CONVERSATION_TOTALS = {
    "conv-26": 152,
    "conv-30": 81,
    "conv-41": 152,
    "conv-42": 199,
    "conv-43": 178,
    "conv-44": 123,
    "conv-47": 150,
    "conv-48": 191,
    "conv-49": 156,
    "conv-50": 158,
}
CATEGORY_TOTALS = {1: 282, 2: 321, 3: 96, 4: 841}


def allocate_counts(
    row_totals: dict[str, int], col_totals: dict[int, int]
) -> dict[str, dict[int, int]]:
    """Northwest-corner allocation: a matrix with the given row and column
    sums, filled greedily. Deterministic and exact."""
    rows = list(row_totals.items())
    cols = list(col_totals.items())
    table: dict[str, dict[int, int]] = {name: {} for name, _ in rows}
    ri = ci = 0
    supply = rows[ri][1]
    demand = cols[ci][1]
    while ri < len(rows) and ci < len(cols):
        take = min(supply, demand)
        if take:
            table[rows[ri][0]][cols[ci][0]] = take
        supply -= take
        demand -= take
        if supply == 0:
            ri += 1
            supply = rows[ri][1] if ri < len(rows) else 0
        if demand == 0:
            ci += 1
            demand = cols[ci][1] if ci < len(cols) else 0
    return table


def locomo_sample(
    conv_id: str,
    category_counts: dict[int, int],
    n_adversarial: int = 0,
    n_sessions: int = 2,
) -> dict:
    """One benchmark sample: a small conversation plus synthetic QA rows."""
    conversation: dict = {"speaker_a": "Ava", "speaker_b": "Noor"}
    for s in range(1, n_sessions + 1):
        conversation[f"session_{s}_date_time"] = f"1:56 pm on {7 + s} May, 2023"
        conversation[f"session_{s}"] = [
            {
                "speaker": "Ava" if t % 2 == 0 else "Noor",
                "text": f"{conv_id} session {s} turn {t} about the garden.",
                "dia_id": f"D{s}:{t}",
            }
            for t in range(2)
        ]
    qa = []
    serial = 0
    for code, count in sorted(category_counts.items()):
        for _ in range(count):
            qa.append(
                {
                    "question": f"{conv_id} question {serial}?",
                    "answer": f"{conv_id} answer {serial}.",
                    "category": code,
                    "evidence": [],
                }
            )
            serial += 1
    for _ in range(n_adversarial):
        qa.append(
            {
                "question": f"{conv_id} adversarial {serial}?",
                "adversarial_answer": "Not mentioned in the conversation.",
                "category": 5,
            }
        )
        serial += 1
    return {"sample_id": conv_id, "conversation": conversation, "qa": qa}


def write_locomo_file(path: Path, samples: list[dict]) -> Path:
    path.write_text(json.dumps(samples), encoding="utf-8")
    return path


def full_shape_locomo(path: Path) -> Path:
    """Benchmark file with the published composition: 1,540 graded questions
    split 282/321/96/841 across ten conversations, plus adversarial rows
    that a correct loader must drop."""
    table = allocate_counts(CONVERSATION_TOTALS, CATEGORY_TOTALS)
    samples = [
        locomo_sample(conv_id, counts, n_adversarial=5)
        for conv_id, counts in table.items()
    ]
    return write_locomo_file(path, samples)


def edge_key(e: MemoryEdge) -> tuple[str, str, str]:
    return (e.source, e.target, e.kind.value)
