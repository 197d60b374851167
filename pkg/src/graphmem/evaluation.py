"""Generate-then-judge evaluation over per-conversation memory graphs.

For every question the harness retrieves under the requested mode, packs
memory, asks the chat model to answer from it, then asks the judge model
what fraction of the reference answer the response covers (a fractional
reward in [0, 1]). Records stream to an append-only JSONL log keyed by a
config fingerprint, so an interrupted run resumes by skipping questions the
log already holds for the same configuration.

Modes:
- gaama: the full hybrid ranking (walk plus semantic).
- semantic: same pipeline with the walk weight at zero, i.e. pure KNN.
- rag: KNN over raw episode nodes only, same budget and answer prompt.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .datasets import QACategory, QAItem
from .errors import ParseError
from .graph import MemoryGraph, NodeKind
from .llm import ChatRequest, JudgeVerdict, LLMGateway, parse_judge
from .packing import pack, render
from .prompts import PromptName, render_prompt
from .retrieval import RetrievalConfig, retrieve
from .vectors import VectorIndex

__all__ = [
    "EvalMode",
    "EvalRecord",
    "EvalSummary",
    "config_fingerprint",
    "retrieve_for_mode",
    "answer_question",
    "judge_answer",
    "run_eval",
    "load_summary",
    "records_path",
    "summary_path",
]

logger = logging.getLogger(__name__)


class EvalMode(str, Enum):
    GAAMA = "gaama"
    SEMANTIC = "semantic"
    RAG = "rag"


@dataclass
class EvalRecord:
    qa_id: str
    conversation_id: str
    category: str
    question: str
    reference: str
    hypothesis: str
    reward: float | None  # None when the judge failed twice; excluded from means
    justification: str
    mode: str
    fingerprint: str
    memory_node_ids: list[str] = field(default_factory=list)
    memory_word_count: int = 0
    timing_ms: float = 0.0

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), sort_keys=True)


@dataclass
class EvalSummary:
    mode: str
    fingerprint: str
    completed: int
    failed: int
    mean_reward: float | None
    by_category: dict[str, dict]
    by_conversation: dict[str, dict]

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def gateway_description(gateway: LLMGateway) -> str:
    describe = getattr(gateway, "describe", None)
    if callable(describe):
        return str(describe())
    config = getattr(gateway, "config", None)
    if config is not None and hasattr(config, "chat_model"):
        return f"http:{config.chat_model}:{config.embed_model}"
    dim = getattr(gateway, "dim", None)
    if dim is not None:
        return f"mock:{dim}"
    return type(gateway).__name__


def config_fingerprint(mode: EvalMode, config: RetrievalConfig, gateway_desc: str) -> str:
    """Short stable hash of everything that can change a record's content."""
    payload = {
        "mode": mode.value,
        "gateway": gateway_desc,
        "alpha": config.alpha,
        "k_seeds": config.k_seeds,
        "depth": config.depth,
        "hub_threshold": config.hub_threshold,
        "w_ppr": config.w_ppr,
        "w_sim": config.w_sim,
        "edge_weights": {k.value: v for k, v in sorted(config.edge_weights.items())},
        "max_facts": config.max_facts,
        "max_reflections": config.max_reflections,
        "max_episodes": config.max_episodes,
        "max_memory_words": config.max_memory_words,
        "ppr_max_iters": config.ppr_max_iters,
        "ppr_tolerance": config.ppr_tolerance,
    }
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode("utf-8")).hexdigest()[:16]


def retrieve_for_mode(
    graph: MemoryGraph,
    index: VectorIndex,
    question: str,
    gateway: LLMGateway,
    config: RetrievalConfig,
    mode: EvalMode,
):
    """Mode-adjusted retrieval sharing one code path.

    semantic zeroes the walk weight; rag additionally restricts the pool to
    episode nodes, which reduces to flat retrieval over raw turns.
    """
    if mode is EvalMode.GAAMA:
        return retrieve(graph, index, question, gateway, config)
    ablated = dataclasses.replace(config, w_ppr=0.0)
    if mode is EvalMode.SEMANTIC:
        return retrieve(graph, index, question, gateway, ablated)
    return retrieve(graph, index, question, gateway, ablated, kinds={NodeKind.EPISODE})


def answer_question(question: str, memory_text: str, gateway: LLMGateway) -> str:
    prompt = render_prompt(
        PromptName.ANSWER_FROM_MEMORY, {"query": question, "memory_text": memory_text}
    )
    return gateway.chat(ChatRequest(prompt=prompt))


def judge_answer(
    question: str, reference: str, hypothesis: str, gateway: LLMGateway
) -> JudgeVerdict | None:
    """Fractional-coverage verdict, or None after a parse failure and one retry."""
    prompt = render_prompt(
        PromptName.JUDGE,
        {"question": question, "answer": reference, "hypothesis": hypothesis},
    )
    for attempt in (1, 2):
        raw = gateway.chat(ChatRequest(prompt=prompt))
        try:
            return parse_judge(raw)
        except ParseError as exc:
            logger.warning("judge output unparseable (attempt %d): %s", attempt, exc)
    return None


def records_path(results_dir: str | Path, mode: EvalMode) -> Path:
    return Path(results_dir) / f"records_{mode.value}.jsonl"


def summary_path(results_dir: str | Path, mode: EvalMode) -> Path:
    return Path(results_dir) / f"summary_{mode.value}.json"


def _load_done(path: Path, fingerprint: str) -> dict[str, EvalRecord]:
    """Records already in the log for this fingerprint, keyed by qa id."""
    done: dict[str, EvalRecord] = {}
    if not path.exists():
        return done
    for line_no, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            data = json.loads(line)
            record = EvalRecord(**data)
        except (ValueError, TypeError) as exc:
            logger.warning("skipping unreadable results line %d: %s", line_no, exc)
            continue
        if record.fingerprint == fingerprint:
            done[record.qa_id] = record
    return done


def _evaluate_one(
    item: QAItem,
    graph: MemoryGraph,
    index: VectorIndex,
    gateway: LLMGateway,
    config: RetrievalConfig,
    mode: EvalMode,
    fingerprint: str,
) -> EvalRecord:
    started = time.perf_counter()
    candidates = retrieve_for_mode(graph, index, item.question, gateway, config, mode)
    memory = pack(candidates, graph, config)
    hypothesis = answer_question(item.question, render(memory), gateway)
    verdict = judge_answer(item.question, item.reference, hypothesis, gateway)
    elapsed_ms = (time.perf_counter() - started) * 1000.0
    included_ids = [nid for ids in memory.included.values() for nid in ids]
    return EvalRecord(
        qa_id=item.qa_id,
        conversation_id=item.conversation_id,
        category=item.category.label,
        question=item.question,
        reference=item.reference,
        hypothesis=hypothesis,
        reward=None if verdict is None else verdict.reward,
        justification="judge failed twice" if verdict is None else verdict.justification,
        mode=mode.value,
        fingerprint=fingerprint,
        memory_node_ids=included_ids,
        memory_word_count=memory.word_count,
        timing_ms=round(elapsed_ms, 3),
    )


def _summarize(records: list[EvalRecord], mode: EvalMode, fingerprint: str) -> EvalSummary:
    scored = [r for r in records if r.reward is not None]

    def bucket(rows: list[EvalRecord]) -> dict:
        rewards = [r.reward for r in rows if r.reward is not None]
        return {
            "count": len(rows),
            "scored": len(rewards),
            "mean_reward": (sum(rewards) / len(rewards)) if rewards else None,
        }

    by_category: dict[str, dict] = {}
    for category in QACategory:
        rows = [r for r in records if r.category == category.label]
        if rows:
            by_category[category.label] = bucket(rows)
    by_conversation: dict[str, dict] = {}
    for conv_id in sorted({r.conversation_id for r in records}):
        by_conversation[conv_id] = bucket([r for r in records if r.conversation_id == conv_id])
    return EvalSummary(
        mode=mode.value,
        fingerprint=fingerprint,
        completed=len(scored),
        failed=len(records) - len(scored),
        mean_reward=(sum(r.reward for r in scored) / len(scored)) if scored else None,
        by_category=by_category,
        by_conversation=by_conversation,
    )


def run_eval(
    graphs: dict[str, tuple[MemoryGraph, VectorIndex]],
    qa: list[QAItem],
    gateway: LLMGateway,
    config: RetrievalConfig,
    mode: EvalMode,
    results_dir: str | Path,
    *,
    limit: int | None = None,
    conversations: set[str] | None = None,
    workers: int = 1,
) -> EvalSummary:
    """Evaluate questions against their conversation graphs.

    Questions whose conversation has no graph are skipped with a warning.
    Each finished question is appended to the results log immediately;
    rerunning with the same configuration skips everything already logged
    and reproduces the same summary.
    """
    results_dir = Path(results_dir)
    results_dir.mkdir(parents=True, exist_ok=True)
    fingerprint = config_fingerprint(mode, config, gateway_description(gateway))
    log_path = records_path(results_dir, mode)
    done = _load_done(log_path, fingerprint)

    todo: list[QAItem] = []
    records: list[EvalRecord] = []
    skipped_conversations = set()
    for item in qa:
        if conversations is not None and item.conversation_id not in conversations:
            continue
        if item.conversation_id not in graphs:
            skipped_conversations.add(item.conversation_id)
            continue
        if limit is not None and len(todo) + len(records) >= limit:
            break
        if item.qa_id in done:
            records.append(done[item.qa_id])
        else:
            todo.append(item)
    for conv_id in sorted(skipped_conversations):
        logger.warning("no graph for conversation %s; its questions are skipped", conv_id)
    if done:
        logger.info("resuming: %d of %d questions already evaluated", len(records), len(records) + len(todo))

    with open(log_path, "a", encoding="utf-8") as log:

        def finish(record: EvalRecord) -> None:
            log.write(record.to_json() + "\n")
            log.flush()
            records.append(record)
            if record.reward is None:
                logger.warning("question %s excluded: judge failed twice", record.qa_id)

        if workers <= 1:
            for item in todo:
                graph, index = graphs[item.conversation_id]
                finish(_evaluate_one(item, graph, index, gateway, config, mode, fingerprint))
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool_exec:
                futures = [
                    pool_exec.submit(
                        _evaluate_one,
                        item,
                        graphs[item.conversation_id][0],
                        graphs[item.conversation_id][1],
                        gateway,
                        config,
                        mode,
                        fingerprint,
                    )
                    for item in todo
                ]
                for future in futures:
                    finish(future.result())

    summary = _summarize(records, mode, fingerprint)
    summary_file = summary_path(results_dir, mode)
    summary_file.write_text(
        json.dumps(summary.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return summary


def load_summary(results_dir: str | Path, mode: EvalMode) -> EvalSummary | None:
    path = summary_path(results_dir, mode)
    if not path.exists():
        return None
    data = json.loads(path.read_text(encoding="utf-8"))
    return EvalSummary(**data)
