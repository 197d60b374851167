"""Budgeted assembly of ranked candidates into a prompt-ready memory block.

Candidates are bucketed by node kind, capped per kind by rank, then trimmed
globally (lowest score first) until the rendered text fits the word budget.
Reflections render first, then facts, then episodes; episodes are re-sorted
into conversation order and carry their timestamp, since generation models
handle temporal questions much better when the raw turns read forward.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from .graph import MemoryGraph, MemoryNode, NodeKind
from .retrieval import RetrievalConfig, ScoredCandidate

__all__ = ["MemoryPack", "EMPTY_MEMORY_TEXT", "pack", "render"]

logger = logging.getLogger(__name__)

EMPTY_MEMORY_TEXT = "(no relevant memory)"

_SECTION_ORDER = (
    (NodeKind.REFLECTION, "Reflections:"),
    (NodeKind.FACT, "Facts:"),
    (NodeKind.EPISODE, "Episodes:"),
)


@dataclass
class MemoryPack:
    """Final packed memory.

    included maps kind value to node ids in render order (episodes in
    conversation order); trimmed lists ids dropped by the word budget, in
    removal order. Candidates beyond a per-kind cap are simply absent.
    """

    memory_text: str
    included: dict[str, list[str]] = field(default_factory=dict)
    word_count: int = 0
    trimmed: list[str] = field(default_factory=list)


def _one_line(text: str) -> str:
    return " ".join(text.split())


def _render_node(node: MemoryNode) -> str:
    if node.kind is NodeKind.EPISODE:
        prefix = f"[{node.timestamp}] "
        if node.speaker:
            return f"- {prefix}{node.speaker}: {_one_line(node.text)}"
        return f"- {prefix}{_one_line(node.text)}"
    return f"- {_one_line(node.text)}"


def _render_sections(items: list[tuple[ScoredCandidate, MemoryNode]]) -> tuple[str, dict[str, list[str]]]:
    included: dict[str, list[str]] = {}
    blocks: list[str] = []
    for kind, header in _SECTION_ORDER:
        selected = [(c, n) for c, n in items if n.kind is kind]
        if not selected:
            continue
        if kind is NodeKind.EPISODE:
            selected.sort(key=lambda cn: (cn[1].seq if cn[1].seq is not None else 0, cn[1].id))
        lines = [header] + [_render_node(n) for _, n in selected]
        blocks.append("\n".join(lines))
        included[kind.value] = [n.id for _, n in selected]
    return "\n\n".join(blocks), included


def pack(
    candidates: list[ScoredCandidate],
    graph: MemoryGraph,
    config: RetrievalConfig | None = None,
) -> MemoryPack:
    """Pack ranked candidates into the word budget.

    candidates must be sorted best-first (retrieve output order). Concept
    ids and ids missing from the graph are skipped. The trim loop always
    removes the globally lowest-ranked retained item, so the dropped set is
    a suffix of the ranking.
    """
    cfg = config or RetrievalConfig()
    caps = {
        NodeKind.EPISODE: cfg.max_episodes,
        NodeKind.FACT: cfg.max_facts,
        NodeKind.REFLECTION: cfg.max_reflections,
    }
    taken = {kind: 0 for kind in caps}
    kept: list[tuple[ScoredCandidate, MemoryNode]] = []
    for cand in candidates:
        if not graph.has_node(cand.node_id):
            logger.debug("pack skipping unknown node %s", cand.node_id)
            continue
        node = graph.node(cand.node_id)
        if node.kind not in caps:
            continue
        if taken[node.kind] >= caps[node.kind]:
            continue
        taken[node.kind] += 1
        kept.append((cand, node))

    trimmed: list[str] = []
    while True:
        text, included = _render_sections(kept)
        if not kept:
            text = EMPTY_MEMORY_TEXT
            included = {}
        word_count = len(text.split())
        if word_count <= cfg.max_memory_words or not kept:
            break
        _, worst_node = kept.pop()  # kept is in global rank order
        trimmed.append(worst_node.id)

    return MemoryPack(memory_text=text, included=included, word_count=word_count, trimmed=trimmed)


def render(pack_result: MemoryPack) -> str:
    """Prompt-ready text of a pack. Assembly happens at pack time, so this
    is a plain accessor kept for symmetry with the rest of the pipeline."""
    return pack_result.memory_text
