"""graphmem: an embeddable long-term memory engine for conversational agents.

Conversations become a typed knowledge graph (verbatim episodes, distilled
facts, synthesized reflections, shared concept anchors). Retrieval blends
personalized random-walk relevance over that graph with cosine similarity,
and the winners are packed into a budgeted memory text for answer
generation. Ships with an offline deterministic mock gateway, a
multi-session benchmark harness, and a CLI.
"""

from .builder import (
    BuilderConfig,
    BuildReport,
    ConversationSession,
    ConversationTurn,
    ingest_conversation,
    ingest_session,
    preserve_episodes,
)
from .config import AppConfig
from .datasets import (
    LocomoDataset,
    QACategory,
    QAItem,
    load_conversation_json,
    load_locomo,
)
from .errors import (
    DatasetError,
    EmptyGraphError,
    GatewayError,
    GraphMemError,
    ParseError,
    RetrievalError,
    StoreError,
)
from .evaluation import (
    EvalMode,
    EvalRecord,
    EvalSummary,
    run_eval,
)
from .graph import (
    EDGE_SCHEMA,
    EdgeKind,
    MemoryEdge,
    MemoryGraph,
    MemoryNode,
    NodeKind,
)
from .llm import (
    ChatRequest,
    HttpGateway,
    LLMGateway,
    ProviderConfig,
)
from .mock import MockGateway
from .packing import MemoryPack, pack, render
from .retrieval import (
    DEFAULT_EDGE_WEIGHTS,
    PPRResult,
    RetrievalConfig,
    ScoredCandidate,
    ppr,
    retrieve,
    transition_matrix,
)
from .vectors import VectorIndex, index_from_graph

__version__ = "0.1.0"

__all__ = [
    "AppConfig",
    "BuildReport",
    "BuilderConfig",
    "ChatRequest",
    "ConversationSession",
    "ConversationTurn",
    "DEFAULT_EDGE_WEIGHTS",
    "DatasetError",
    "EDGE_SCHEMA",
    "EdgeKind",
    "EmptyGraphError",
    "EvalMode",
    "EvalRecord",
    "EvalSummary",
    "GatewayError",
    "GraphMemError",
    "HttpGateway",
    "LLMGateway",
    "LocomoDataset",
    "MemoryEdge",
    "MemoryGraph",
    "MemoryNode",
    "MemoryPack",
    "MockGateway",
    "NodeKind",
    "PPRResult",
    "ParseError",
    "ProviderConfig",
    "QACategory",
    "QAItem",
    "RetrievalConfig",
    "RetrievalError",
    "ScoredCandidate",
    "StoreError",
    "VectorIndex",
    "__version__",
    "index_from_graph",
    "ingest_conversation",
    "ingest_session",
    "load_conversation_json",
    "load_locomo",
    "pack",
    "ppr",
    "preserve_episodes",
    "render",
    "retrieve",
    "run_eval",
    "transition_matrix",
]
