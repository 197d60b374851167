"""Command-line front-end: ingest, query, eval, stats, config.

Each conversation gets its own directory under the configured graph dir,
holding one self-contained graph file (embeddings included), so every
conversation is indexed and queried independently.

Exit codes: 0 ok, 1 run incomplete or internal failure, 2 input error,
3 empty graph, 64 usage.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .builder import BuildReport, ingest_conversation
from .config import AppConfig
from .datasets import load_conversation_json, load_locomo
from .errors import DatasetError, EmptyGraphError, GatewayError, GraphMemError, StoreError
from .evaluation import (
    EvalMode,
    answer_question,
    load_summary,
    retrieve_for_mode,
    run_eval,
)
from .graph import MemoryGraph
from .llm import HttpGateway, LLMGateway
from .mock import MockGateway
from .packing import pack, render
from .vectors import index_from_graph

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_INPUT = 2
EXIT_EMPTY_GRAPH = 3
EXIT_USAGE = 64

GRAPH_FILENAME = "graph.jsonl"


class _Parser(argparse.ArgumentParser):
    """argparse variant that exits 64 on usage errors instead of 2."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _fail(message: str, code: int) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


# --- configuration plumbing -------------------------------------------------

DEFAULT_CONFIG_FILENAME = "graphmem.json"

# (flag dest, config section, field)
_OVERRIDES = [
    ("alpha", "retrieval", "alpha"),
    ("k_seeds", "retrieval", "k_seeds"),
    ("depth", "retrieval", "depth"),
    ("hub_threshold", "retrieval", "hub_threshold"),
    ("w_ppr", "retrieval", "w_ppr"),
    ("w_sim", "retrieval", "w_sim"),
    ("max_facts", "retrieval", "max_facts"),
    ("max_reflections", "retrieval", "max_reflections"),
    ("max_episodes", "retrieval", "max_episodes"),
    ("max_memory_words", "retrieval", "max_memory_words"),
    ("chunk_size", "builder", "chunk_size"),
    ("context_k", "builder", "context_k"),
    ("base_url", "provider", "base_url"),
    ("chat_model", "provider", "chat_model"),
    ("embed_model", "provider", "embed_model"),
    ("graph_dir", None, "graph_dir"),
    ("results_dir", None, "results_dir"),
]


def _common_flags() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    group = common.add_argument_group("common options")
    group.add_argument("--config", metavar="PATH", help="config file (JSON)")
    group.add_argument("--mock", action="store_true", help="use the offline deterministic gateway")
    group.add_argument("--verbose", action="store_true", help="info logging plus effective config")
    group.add_argument("--trace", action="store_true", help="debug logging plus wire/score traces")
    tune = common.add_argument_group("overrides (flag beats config file)")
    tune.add_argument("--alpha", type=float, help="walk continuation probability")
    tune.add_argument("--k-seeds", type=int, dest="k_seeds", help="seed count for the walk")
    tune.add_argument("--depth", type=int, help="neighborhood expansion depth")
    tune.add_argument("--hub-threshold", type=int, dest="hub_threshold", help="degree dampening threshold")
    tune.add_argument("--w-ppr", type=float, dest="w_ppr", help="walk score weight")
    tune.add_argument("--w-sim", type=float, dest="w_sim", help="semantic score weight")
    tune.add_argument("--max-facts", type=int, dest="max_facts", help="fact budget per pack")
    tune.add_argument("--max-reflections", type=int, dest="max_reflections", help="reflection budget per pack")
    tune.add_argument("--max-episodes", type=int, dest="max_episodes", help="episode budget per pack")
    tune.add_argument("--max-memory-words", type=int, dest="max_memory_words", help="word budget per pack")
    tune.add_argument("--chunk-size", type=int, dest="chunk_size", help="turns per extraction call")
    tune.add_argument("--context-k", type=int, dest="context_k", help="similar items shown per extraction call")
    tune.add_argument("--base-url", dest="base_url", help="provider base URL")
    tune.add_argument("--chat-model", dest="chat_model", help="chat model name")
    tune.add_argument("--embed-model", dest="embed_model", help="embedding model name")
    tune.add_argument("--graph-dir", dest="graph_dir", help="directory holding per-conversation graphs")
    tune.add_argument("--results-dir", dest="results_dir", help="directory for eval records and summaries")
    return common


def _load_config(args: argparse.Namespace) -> AppConfig:
    if args.config:
        return AppConfig.from_file(args.config)
    default = Path(DEFAULT_CONFIG_FILENAME)
    if default.exists():
        return AppConfig.from_file(default)
    return AppConfig()


def _apply_overrides(config: AppConfig, args: argparse.Namespace) -> AppConfig:
    for dest, section, fieldname in _OVERRIDES:
        value = getattr(args, dest, None)
        if value is None:
            continue
        target = config if section is None else getattr(config, section)
        setattr(target, fieldname, value)
    config.retrieval.validate()
    return config


def _make_gateway(config: AppConfig, args: argparse.Namespace) -> LLMGateway:
    if args.mock:
        return MockGateway()
    return HttpGateway(config.provider, trace=args.trace)


def _setup_logging(args: argparse.Namespace) -> None:
    level = logging.WARNING
    if args.verbose:
        level = logging.INFO
    if args.trace:
        level = logging.DEBUG
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def _graph_path(config: AppConfig, conversation_id: str) -> Path:
    return Path(config.graph_dir) / conversation_id / GRAPH_FILENAME


def _load_graph(config: AppConfig, conversation_id: str) -> MemoryGraph:
    path = _graph_path(config, conversation_id)
    if not path.exists():
        raise FileNotFoundError(f"no graph for conversation {conversation_id!r} at {path}")
    return MemoryGraph.load(path)


def _ingested_conversations(config: AppConfig) -> list[str]:
    root = Path(config.graph_dir)
    if not root.is_dir():
        return []
    return sorted(p.name for p in root.iterdir() if (p / GRAPH_FILENAME).exists())


def _print_kv_table(rows: list[tuple[str, object]]) -> None:
    width = max(len(k) for k, _ in rows)
    for key, value in rows:
        print(f"  {key:<{width}}  {value}")


# --- commands ---------------------------------------------------------------


def _report_rows(report: BuildReport) -> list[tuple[str, object]]:
    return [
        ("conversation", report.conversation_id),
        ("sessions ingested", report.sessions_ingested),
        ("episodes created", report.episodes_created),
        ("facts created", report.facts_created),
        ("concepts created", report.concepts_created),
        ("concepts reused", report.concepts_reused),
        ("reflections created", report.reflections_created),
        ("chat calls", report.llm_calls),
        ("warnings", len(report.warnings)),
    ]


def cmd_ingest(args: argparse.Namespace, config: AppConfig) -> int:
    path = Path(args.input)
    if not path.exists():
        return _fail(f"file not found: {path}", EXIT_INPUT)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        return _fail(f"cannot read {path}: {exc}", EXIT_INPUT)

    # A benchmark file is a list of samples; our own schema is one object.
    if isinstance(raw, list):
        dataset = load_locomo(path)
        conversations = dataset.conversations
    else:
        conv_id, sessions = load_conversation_json(path)
        conversations = {conv_id: sessions}
    selected = _split_csv(args.conversations)
    if selected:
        missing = selected - set(conversations)
        if missing:
            return _fail(f"conversations not in {path.name}: {sorted(missing)}", EXIT_INPUT)
        conversations = {cid: conversations[cid] for cid in sorted(selected)}

    existing = [cid for cid in conversations if _graph_path(config, cid).exists()]
    if existing and not args.force:
        return _fail(
            f"graphs already exist for {existing}; pass --force to re-ingest", EXIT_INPUT
        )

    gateway = _make_gateway(config, args)
    for conv_id, sessions in conversations.items():
        graph = MemoryGraph()
        index = index_from_graph(graph)
        report = ingest_conversation(graph, index, gateway, conv_id, sessions, config.builder)
        target = _graph_path(config, conv_id)
        target.parent.mkdir(parents=True, exist_ok=True)
        graph.persist(target)
        print(f"ingested {conv_id} -> {target}")
        _print_kv_table(_report_rows(report))
        for warning in report.warnings:
            print(f"  warning: {warning}")
    return EXIT_OK


def _resolve_conversation(config: AppConfig, requested: str | None) -> str:
    if requested:
        return requested
    ingested = _ingested_conversations(config)
    if len(ingested) == 1:
        return ingested[0]
    if not ingested:
        raise FileNotFoundError(f"no graphs under {config.graph_dir!r}; run ingest first")
    raise ValueError(
        f"multiple graphs under {config.graph_dir!r} ({', '.join(ingested)}); pass --conversation"
    )


def cmd_query(args: argparse.Namespace, config: AppConfig) -> int:
    try:
        conv_id = _resolve_conversation(config, args.conversation)
        graph = _load_graph(config, conv_id)
    except (FileNotFoundError, ValueError) as exc:
        return _fail(str(exc), EXIT_INPUT)
    index = index_from_graph(graph)
    gateway = _make_gateway(config, args)
    mode = EvalMode(args.mode)
    candidates = retrieve_for_mode(graph, index, args.question, gateway, config.retrieval, mode)
    if args.trace:
        print(f"{'id':<24} {'sim':>8} {'ppr':>8} {'score':>8}")
        for cand in candidates:
            print(f"{cand.node_id:<24} {cand.sim:>8.4f} {cand.ppr:>8.4f} {cand.score:>8.4f}")
    memory = pack(candidates, graph, config.retrieval)
    if args.show_memory:
        print("--- memory ---")
        print(render(memory))
        print("--- memory ---")
    answer = answer_question(args.question, render(memory), gateway)
    print(answer)
    return EXIT_OK


def _split_csv(raw: str | None) -> set[str] | None:
    if not raw:
        return None
    return {part.strip() for part in raw.split(",") if part.strip()}


def _print_bucket_table(title: str, buckets: dict[str, dict]) -> None:
    if not buckets:
        return
    print(title)
    name_width = max(len(name) for name in buckets)
    print(f"  {'':<{name_width}}  {'count':>5}  {'scored':>6}  {'mean':>6}")
    for name, row in buckets.items():
        mean = "-" if row["mean_reward"] is None else f"{row['mean_reward']:.3f}"
        print(f"  {name:<{name_width}}  {row['count']:>5}  {row['scored']:>6}  {mean:>6}")


def _print_delta_table(config: AppConfig, current_mode: EvalMode) -> None:
    summaries = {}
    for mode in EvalMode:
        summary = load_summary(config.results_dir, mode)
        if summary is not None:
            summaries[mode] = summary
    if len(summaries) < 2:
        return
    conversations = sorted({cid for s in summaries.values() for cid in s.by_conversation})
    print("per-conversation mean reward by mode:")
    header = "  " + f"{'conversation':<16}"
    for mode in summaries:
        header += f"  {mode.value:>9}"
    both = EvalMode.GAAMA in summaries and EvalMode.SEMANTIC in summaries
    if both:
        header += f"  {'delta':>9}"
    print(header)
    for cid in conversations:
        line = "  " + f"{cid:<16}"
        means = {}
        for mode, summary in summaries.items():
            row = summary.by_conversation.get(cid)
            mean = None if row is None else row["mean_reward"]
            means[mode] = mean
            line += f"  {mean:>9.3f}" if mean is not None else f"  {'-':>9}"
        if both:
            g, s = means.get(EvalMode.GAAMA), means.get(EvalMode.SEMANTIC)
            line += f"  {g - s:>+9.3f}" if g is not None and s is not None else f"  {'-':>9}"
        print(line)


def cmd_eval(args: argparse.Namespace, config: AppConfig) -> int:
    path = Path(args.locomo)
    if not path.exists():
        return _fail(f"file not found: {path}", EXIT_INPUT)
    dataset = load_locomo(path)
    selected = _split_csv(args.conversations)
    graphs = {}
    for conv_id in dataset.conversations:
        if selected is not None and conv_id not in selected:
            continue
        graph_file = _graph_path(config, conv_id)
        if graph_file.exists():
            graph = MemoryGraph.load(graph_file)
            graphs[conv_id] = (graph, index_from_graph(graph))
    if not graphs:
        return _fail(
            f"no ingested graphs under {config.graph_dir!r} for conversations in {path.name}",
            EXIT_INPUT,
        )
    gateway = _make_gateway(config, args)
    mode = EvalMode(args.mode)
    summary = run_eval(
        graphs,
        dataset.qa,
        gateway,
        config.retrieval,
        mode,
        config.results_dir,
        limit=args.limit,
        conversations=selected,
        workers=args.workers if args.workers is not None else config.eval_workers,
    )
    attempted = summary.completed + summary.failed
    mean = "-" if summary.mean_reward is None else f"{summary.mean_reward:.3f}"
    print(f"mode {summary.mode}: mean reward {mean} over {summary.completed} questions "
          f"({summary.failed} failed)")
    _print_bucket_table("by category:", summary.by_category)
    _print_bucket_table("by conversation:", summary.by_conversation)
    _print_delta_table(config, mode)
    if attempted == 0:
        return _fail("no questions evaluated", EXIT_INPUT)
    fraction = summary.completed / attempted
    if fraction < config.eval_min_completion:
        return _fail(
            f"only {fraction:.1%} of questions completed "
            f"(minimum {config.eval_min_completion:.1%})",
            EXIT_FAILURE,
        )
    return EXIT_OK


def cmd_stats(args: argparse.Namespace, config: AppConfig) -> int:
    if args.conversation:
        conv_ids = [args.conversation]
    else:
        conv_ids = _ingested_conversations(config)
        if not conv_ids:
            return _fail(f"no graphs under {config.graph_dir!r}", EXIT_INPUT)
    for conv_id in conv_ids:
        try:
            graph = _load_graph(config, conv_id)
        except FileNotFoundError as exc:
            return _fail(str(exc), EXIT_INPUT)
        if graph.node_count() == 0:
            raise EmptyGraphError(f"graph for {conv_id!r} has no nodes")
        stats = graph.stats()
        print(f"conversation {conv_id}")
        print(" nodes:")
        _print_kv_table(sorted(stats["nodes"].items()))
        print(" edges:")
        _print_kv_table(sorted(stats["edges"].items()))
        print(" degree histogram:")
        _print_kv_table(list(stats["degree_histogram"].items()))
        if stats["top_concepts"]:
            print(" top concepts by degree:")
            _print_kv_table([(c["label"], c["degree"]) for c in stats["top_concepts"]])
    return EXIT_OK


def cmd_config(args: argparse.Namespace, config: AppConfig) -> int:
    if args.action == "show":
        print(json.dumps(config.to_dict(), indent=2, sort_keys=True))
        return EXIT_OK
    # init
    target = Path(args.path or DEFAULT_CONFIG_FILENAME)
    if target.exists() and not args.force:
        return _fail(f"{target} already exists; pass --force to overwrite", EXIT_INPUT)
    AppConfig().to_file(target)
    print(f"wrote {target}")
    return EXIT_OK


# --- entry point ------------------------------------------------------------


def build_parser() -> _Parser:
    common = _common_flags()
    parser = _Parser(prog="graphmem", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p_ingest = sub.add_parser(
        "ingest", parents=[common], help="build per-conversation graphs from a conversation file"
    )
    p_ingest.add_argument("input", help="benchmark file (list) or single-conversation JSON")
    p_ingest.add_argument("--conversations", help="comma-separated conversation ids to ingest")
    p_ingest.add_argument("--force", action="store_true", help="re-ingest over existing graphs")
    p_ingest.set_defaults(func=cmd_ingest)

    p_query = sub.add_parser("query", parents=[common], help="answer one question from memory")
    p_query.add_argument("question")
    p_query.add_argument("--conversation", help="conversation id (optional when only one exists)")
    p_query.add_argument(
        "--mode",
        choices=[m.value for m in EvalMode],
        default=EvalMode.GAAMA.value,
        help="retrieval mode (default gaama)",
    )
    p_query.add_argument("--show-memory", action="store_true", help="print the packed memory text")
    p_query.set_defaults(func=cmd_query)

    p_eval = sub.add_parser("eval", parents=[common], help="run the benchmark harness")
    p_eval.add_argument("locomo", help="benchmark file")
    p_eval.add_argument(
        "--mode",
        choices=[m.value for m in EvalMode],
        default=EvalMode.GAAMA.value,
        help="evaluation arm (default gaama)",
    )
    p_eval.add_argument("--limit", type=int, help="stop after this many questions")
    p_eval.add_argument("--conversations", help="comma-separated conversation ids to evaluate")
    p_eval.add_argument("--workers", type=int, help="concurrent questions (default from config)")
    p_eval.set_defaults(func=cmd_eval)

    p_stats = sub.add_parser("stats", parents=[common], help="print graph statistics")
    p_stats.add_argument("--conversation", help="conversation id (default: all ingested)")
    p_stats.set_defaults(func=cmd_stats)

    p_config = sub.add_parser("config", parents=[common], help="write or show configuration")
    p_config.add_argument("action", choices=["init", "show"])
    p_config.add_argument("--path", help="config file location (default ./graphmem.json)")
    p_config.add_argument("--force", action="store_true", help="overwrite an existing file")
    p_config.set_defaults(func=cmd_config)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _setup_logging(args)
    try:
        config = _apply_overrides(_load_config(args), args)
    except (OSError, ValueError) as exc:
        return _fail(f"bad configuration: {exc}", EXIT_INPUT)
    if args.verbose:
        print("effective config:", json.dumps(config.to_dict(), sort_keys=True), file=sys.stderr)
    try:
        return args.func(args, config)
    except EmptyGraphError as exc:
        return _fail(str(exc), EXIT_EMPTY_GRAPH)
    except (DatasetError, StoreError) as exc:
        return _fail(str(exc), EXIT_INPUT)
    except (OSError, GatewayError) as exc:
        return _fail(str(exc), EXIT_INPUT)
    except GraphMemError as exc:
        return _fail(str(exc), EXIT_FAILURE)


if __name__ == "__main__":
    sys.exit(main())
