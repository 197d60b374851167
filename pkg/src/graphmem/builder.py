"""Three-step graph construction from conversation sessions.

Step 1 preserves every turn verbatim as an episode node chained with NEXT
edges; it never calls the chat model. Step 2 runs fact and concept
extraction over fixed-size episode chunks, with similar historical episodes
and facts resolved into the prompt so the model can avoid duplicates and
reuse concept labels. Step 3 runs once per session and distills the
session's new facts into reflections. Any gateway failure that survives its
retries aborts the session and rolls the graph and index back to their
pre-session state, so a crashed ingest never leaves half a session behind.
"""

from __future__ import annotations

import hashlib
import logging
import re
from dataclasses import dataclass, field

from .errors import DuplicateEdgeError, ParseError
from .graph import (
    EdgeKind,
    MemoryGraph,
    MemoryNode,
    NodeKind,
    valid_concept_label,
)
from .llm import ChatRequest, ExtractionResult, LLMGateway, parse_extraction, parse_reflections
from .prompts import PromptName, render_prompt
from .vectors import VectorIndex

__all__ = [
    "ConversationTurn",
    "ConversationSession",
    "BuilderConfig",
    "BuildReport",
    "preserve_episodes",
    "resolve_context",
    "ingest_session",
    "ingest_conversation",
]

logger = logging.getLogger(__name__)

EMPTY_SECTION = "(none)"


@dataclass(frozen=True)
class ConversationTurn:
    speaker: str
    text: str


@dataclass(frozen=True)
class ConversationSession:
    """One sitting of a conversation: an ordered list of turns plus the
    wall-clock timestamp (ISO-8601) the sitting happened at."""

    session_id: str
    timestamp: str
    turns: tuple[ConversationTurn, ...]


@dataclass
class BuilderConfig:
    chunk_size: int = 20  # turns per extraction call
    context_k: int = 20  # similar historical episodes and facts per chunk


@dataclass
class BuildReport:
    conversation_id: str
    sessions_ingested: int = 0
    episodes_created: int = 0
    facts_created: int = 0
    concepts_created: int = 0
    concepts_reused: int = 0
    reflections_created: int = 0
    llm_calls: int = 0  # chat completions only; embeddings are not counted
    warnings: list[str] = field(default_factory=list)

    def merge(self, other: "BuildReport") -> None:
        self.sessions_ingested += other.sessions_ingested
        self.episodes_created += other.episodes_created
        self.facts_created += other.facts_created
        self.concepts_created += other.concepts_created
        self.concepts_reused += other.concepts_reused
        self.reflections_created += other.reflections_created
        self.llm_calls += other.llm_calls
        self.warnings.extend(other.warnings)


# --- ids and rendering -----------------------------------------------------


def _digest(*parts: str) -> str:
    return hashlib.sha256("|".join(parts).encode("utf-8")).hexdigest()[:12]


def _episode_id(conversation_id: str, session_id: str, seq: int, text: str) -> str:
    return "ep-" + _digest(conversation_id, session_id, str(seq), text)


def _fact_id(conversation_id: str, ordinal: int, text: str) -> str:
    return "fact-" + _digest(conversation_id, "fact", str(ordinal), text)


def _reflection_id(conversation_id: str, ordinal: int, text: str) -> str:
    return "refl-" + _digest(conversation_id, "refl", str(ordinal), text)


def _concept_id(label: str) -> str:
    return "concept-" + _digest("concept", label)


def _one_line(text: str) -> str:
    return " ".join(text.split())


def episode_prompt_line(node: MemoryNode) -> str:
    """Render an episode for a prompt: [timestamp] speaker: text (id: x)."""
    speaker = f"{node.speaker}: " if node.speaker else ""
    return f"[{node.timestamp}] {speaker}{_one_line(node.text)} (id: {node.id})"


def _bullet_line(node: MemoryNode) -> str:
    return f"- {_one_line(node.text)} (id: {node.id})"


def _render_block(lines: list[str]) -> str:
    return "\n".join(lines) if lines else EMPTY_SECTION


def sanitize_concept_label(label: str) -> str | None:
    """Coerce a model-supplied label toward snake_case; None when hopeless."""
    s = label.strip().lower()
    s = re.sub(r"[\s\-]+", "_", s)
    s = re.sub(r"[^a-z0-9_]", "", s)
    s = re.sub(r"_+", "_", s).strip("_")
    return s if valid_concept_label(s) else None


# --- pipeline steps --------------------------------------------------------


def preserve_episodes(
    graph: MemoryGraph,
    index: VectorIndex,
    gateway: LLMGateway,
    conversation_id: str,
    session: ConversationSession,
    start_seq: int,
) -> list[MemoryNode]:
    """Step 1: verbatim episode nodes plus a session-local NEXT chain.

    Uses the embedding endpoint only; no chat calls happen here. Turn text
    is stored byte-identical to the source message. Callers must hand in
    non-empty turn texts; the loader already drops empty ones.
    """
    turns = list(session.turns)
    if not turns:
        return []
    vectors = gateway.embed([t.text for t in turns])
    episodes: list[MemoryNode] = []
    for offset, (turn, vec) in enumerate(zip(turns, vectors)):
        seq = start_seq + offset
        node = MemoryNode(
            id=_episode_id(conversation_id, session.session_id, seq, turn.text),
            kind=NodeKind.EPISODE,
            text=turn.text,
            conversation_id=conversation_id,
            session_id=session.session_id,
            timestamp=session.timestamp,
            seq=seq,
            speaker=turn.speaker,
            embedding=tuple(vec),
        )
        graph.add_node(node)
        index.upsert(node.id, vec)
        episodes.append(node)
    for prev, cur in zip(episodes, episodes[1:]):
        graph.add_edge(prev.id, cur.id, EdgeKind.NEXT)
    return episodes


def resolve_context(
    graph: MemoryGraph,
    index: VectorIndex,
    gateway: LLMGateway,
    new_episode_texts: list[str],
    k: int,
    exclude: set[str] | None = None,
) -> tuple[list[MemoryNode], list[MemoryNode]]:
    """Similar historical episodes and facts for an extraction chunk.

    The chunk's concatenated text is embedded once; the ids in `exclude`
    (normally the chunk itself, already indexed) are filtered out of the KNN
    results before the top k of each kind are returned.
    """
    exclude = exclude or set()
    if not new_episode_texts or len(index) == 0:
        return [], []
    query = gateway.embed(["\n".join(new_episode_texts)])[0]
    fetch = k + len(exclude)
    episodes = [
        graph.node(node_id)
        for node_id, _ in index.knn(query, fetch, {NodeKind.EPISODE})
        if node_id not in exclude
    ][:k]
    facts = [
        graph.node(node_id)
        for node_id, _ in index.knn(query, fetch, {NodeKind.FACT})
        if node_id not in exclude
    ][:k]
    return episodes, facts


def _clamped_belief(value: float, what: str, report: BuildReport) -> float:
    if 0.0 <= value <= 1.0:
        return value
    clamped = min(1.0, max(0.0, value))
    report.warnings.append(f"{what}: belief {value} clamped to {clamped}")
    return clamped


def _resolve_or_create_concept(
    graph: MemoryGraph, label: str, conversation_id: str, report: BuildReport
) -> str | None:
    clean = sanitize_concept_label(label)
    if clean is None:
        report.warnings.append(f"unusable concept label {label!r} skipped")
        return None
    existing = graph.concept_id_for_label(clean)
    if existing is not None:
        report.concepts_reused += 1
        return existing
    node = graph.add_node(
        MemoryNode(
            id=_concept_id(clean),
            kind=NodeKind.CONCEPT,
            text=clean,
            conversation_id=conversation_id,
        )
    )
    report.concepts_created += 1
    return node.id


def _add_edge_once(graph: MemoryGraph, source: str, target: str, kind: EdgeKind) -> None:
    try:
        graph.add_edge(source, target, kind)
    except DuplicateEdgeError:
        pass  # the same link can legitimately be proposed twice across chunks


def _apply_extraction(
    graph: MemoryGraph,
    index: VectorIndex,
    gateway: LLMGateway,
    conversation_id: str,
    session: ConversationSession,
    extraction: ExtractionResult,
    report: BuildReport,
) -> list[MemoryNode]:
    """Create fact and concept nodes plus their edges from one parsed chunk."""
    for concept in extraction.concepts:
        concept_id = _resolve_or_create_concept(graph, concept.label, conversation_id, report)
        if concept_id is None:
            continue
        for ep_id in dict.fromkeys(concept.episode_ids):
            if not graph.has_node(ep_id) or graph.node(ep_id).kind is not NodeKind.EPISODE:
                report.warnings.append(
                    f"concept {concept.label!r} references unknown episode {ep_id!r}"
                )
                continue
            _add_edge_once(graph, ep_id, concept_id, EdgeKind.HAS_CONCEPT)

    # validate facts first so embeddings can be fetched in one batch
    pending: list[tuple[str, float, list[str], list[str]]] = []
    for fact in extraction.facts:
        sources = []
        for ep_id in dict.fromkeys(fact.source_episode_ids):
            if graph.has_node(ep_id) and graph.node(ep_id).kind is NodeKind.EPISODE:
                sources.append(ep_id)
            else:
                report.warnings.append(
                    f"fact {fact.text[:40]!r} references unknown episode {ep_id!r}"
                )
        if not sources:
            report.warnings.append(f"fact {fact.text[:40]!r} dropped: no resolvable sources")
            continue
        belief = _clamped_belief(fact.belief, f"fact {fact.text[:40]!r}", report)
        pending.append((fact.text, belief, sources, list(fact.concepts)))

    if not pending:
        return []
    vectors = gateway.embed([text for text, _, _, _ in pending])
    created: list[MemoryNode] = []
    ordinal = sum(1 for _ in graph.nodes(NodeKind.FACT))
    for (text, belief, sources, labels), vec in zip(pending, vectors):
        node = MemoryNode(
            id=_fact_id(conversation_id, ordinal, text),
            kind=NodeKind.FACT,
            text=text,
            conversation_id=conversation_id,
            session_id=session.session_id,
            timestamp=session.timestamp,
            belief=belief,
            embedding=tuple(vec),
        )
        graph.add_node(node)
        index.upsert(node.id, vec)
        ordinal += 1
        for ep_id in sources:
            _add_edge_once(graph, node.id, ep_id, EdgeKind.DERIVED_FROM)
        for label in dict.fromkeys(labels):
            concept_id = _resolve_or_create_concept(graph, label, conversation_id, report)
            if concept_id is not None:
                _add_edge_once(graph, node.id, concept_id, EdgeKind.ABOUT_CONCEPT)
        created.append(node)
        report.facts_created += 1
    return created


def _generate_reflections(
    graph: MemoryGraph,
    index: VectorIndex,
    gateway: LLMGateway,
    conversation_id: str,
    session: ConversationSession,
    new_facts: list[MemoryNode],
    config: BuilderConfig,
    report: BuildReport,
) -> None:
    """Step 3: one reflection pass over the session's new facts."""
    existing = [_bullet_line(n) for n in graph.nodes(NodeKind.REFLECTION)]
    new_ids = {n.id for n in new_facts}
    query = gateway.embed(["\n".join(n.text for n in new_facts)])[0]
    related = [
        graph.node(node_id)
        for node_id, _ in index.knn(query, config.context_k + len(new_ids), {NodeKind.FACT})
        if node_id not in new_ids
    ][: config.context_k]
    prompt = render_prompt(
        PromptName.REFLECTION_GENERATION,
        {
            "existing_reflections": _render_block(existing),
            "related_facts": _render_block([_bullet_line(n) for n in related]),
            "new_facts": _render_block([_bullet_line(n) for n in new_facts]),
        },
    )
    raw = gateway.chat(ChatRequest(prompt=prompt))
    report.llm_calls += 1
    try:
        reflections = parse_reflections(raw)
    except ParseError as exc:
        report.warnings.append(f"reflection output unusable for {session.session_id}: {exc}")
        return

    pending: list[tuple[str, float, list[str]]] = []
    for refl in reflections:
        sources = []
        for fact_id in dict.fromkeys(refl.source_fact_ids):
            if graph.has_node(fact_id) and graph.node(fact_id).kind is NodeKind.FACT:
                sources.append(fact_id)
            else:
                report.warnings.append(
                    f"reflection {refl.text[:40]!r} references unknown fact {fact_id!r}"
                )
        if not sources:
            report.warnings.append(
                f"reflection {refl.text[:40]!r} dropped: no resolvable sources"
            )
            continue
        belief = _clamped_belief(refl.belief, f"reflection {refl.text[:40]!r}", report)
        pending.append((refl.text, belief, sources))

    if not pending:
        return
    vectors = gateway.embed([text for text, _, _ in pending])
    ordinal = sum(1 for _ in graph.nodes(NodeKind.REFLECTION))
    for (text, belief, sources), vec in zip(pending, vectors):
        node = MemoryNode(
            id=_reflection_id(conversation_id, ordinal, text),
            kind=NodeKind.REFLECTION,
            text=text,
            conversation_id=conversation_id,
            session_id=session.session_id,
            timestamp=session.timestamp,
            belief=belief,
            embedding=tuple(vec),
        )
        graph.add_node(node)
        index.upsert(node.id, vec)
        ordinal += 1
        for fact_id in sources:
            _add_edge_once(graph, node.id, fact_id, EdgeKind.DERIVED_FROM_FACT)
        report.reflections_created += 1


def ingest_session(
    graph: MemoryGraph,
    index: VectorIndex,
    gateway: LLMGateway,
    conversation_id: str,
    session: ConversationSession,
    config: BuilderConfig | None = None,
) -> BuildReport:
    """Run all three construction steps for one session.

    Any error that escapes mid-session (a GatewayError that survived its
    retries, or an unexpected bug) restores the graph and index to their
    pre-session state before re-raising, so callers never observe half a
    session. Parse failures only skip the affected chunk and are reported
    as warnings.
    """
    cfg = config or BuilderConfig()
    report = BuildReport(conversation_id=conversation_id)
    graph_state = graph.snapshot()
    index_state = index.snapshot()
    try:
        start_seq = graph.max_seq(conversation_id) + 1
        episodes = preserve_episodes(graph, index, gateway, conversation_id, session, start_seq)
        report.episodes_created = len(episodes)

        session_facts: list[MemoryNode] = []
        for chunk_start in range(0, len(episodes), cfg.chunk_size):
            chunk = episodes[chunk_start : chunk_start + cfg.chunk_size]
            chunk_ids = {n.id for n in chunk}
            ctx_episodes, ctx_facts = resolve_context(
                graph, index, gateway, [n.text for n in chunk], cfg.context_k, exclude=chunk_ids
            )
            prompt = render_prompt(
                PromptName.FACT_CONCEPT_EXTRACTION,
                {
                    "existing_facts": _render_block([_bullet_line(n) for n in ctx_facts]),
                    "existing_concepts": ", ".join(graph.concept_labels()) or EMPTY_SECTION,
                    "related_episodes": _render_block(
                        [episode_prompt_line(n) for n in ctx_episodes]
                    ),
                    "new_episodes": _render_block([episode_prompt_line(n) for n in chunk]),
                },
            )
            raw = gateway.chat(ChatRequest(prompt=prompt))
            report.llm_calls += 1
            try:
                extraction = parse_extraction(raw)
            except ParseError as exc:
                report.warnings.append(
                    f"extraction output unusable for {session.session_id} "
                    f"chunk at seq {chunk[0].seq}: {exc}"
                )
                continue
            session_facts.extend(
                _apply_extraction(
                    graph, index, gateway, conversation_id, session, extraction, report
                )
            )

        if session_facts:
            _generate_reflections(
                graph, index, gateway, conversation_id, session, session_facts, cfg, report
            )
        report.sessions_ingested = 1
        return report
    except Exception:
        graph.restore(graph_state)
        index.restore(index_state)
        logger.warning(
            "failure during %s/%s; session rolled back",
            conversation_id,
            session.session_id,
        )
        raise


def ingest_conversation(
    graph: MemoryGraph,
    index: VectorIndex,
    gateway: LLMGateway,
    conversation_id: str,
    sessions: list[ConversationSession],
    config: BuilderConfig | None = None,
) -> BuildReport:
    """Ingest a conversation's sessions in order, one build report total."""
    total = BuildReport(conversation_id=conversation_id)
    for session in sessions:
        total.merge(ingest_session(graph, index, gateway, conversation_id, session, config))
    return total
