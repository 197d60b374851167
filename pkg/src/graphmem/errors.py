"""Exception hierarchy for the memory engine.

Every error raised on purpose by this package derives from GraphMemError so
embedders can catch one base class. Plain OSError from file writes is allowed
to propagate untouched; only structural problems get wrapped.
"""

from __future__ import annotations

__all__ = [
    "GraphMemError",
    "StoreError",
    "DuplicateIdError",
    "DuplicateEdgeError",
    "DuplicateConceptLabelError",
    "SchemaViolationError",
    "InvariantViolationError",
    "UnknownNodeError",
    "UnknownEndpointError",
    "CorruptFileError",
    "IndexError_",
    "DimensionMismatchError",
    "InvalidVectorError",
    "MissingEmbeddingError",
    "GatewayError",
    "AuthError",
    "RateLimitedError",
    "TransportError",
    "EmptyResponseError",
    "DimensionDriftError",
    "ParseError",
    "MalformedJsonError",
    "MissingFieldError",
    "RetrievalError",
    "EmptyGraphError",
    "EmptyCandidatesError",
    "NonStochasticError",
    "DatasetError",
    "DatasetParseError",
    "UnknownCategoryError",
]


class GraphMemError(Exception):
    """Base class for all errors raised by this package."""


# --- graph store -----------------------------------------------------------


class StoreError(GraphMemError):
    """Base class for graph store errors."""


class DuplicateIdError(StoreError):
    """A node with this id already exists."""


class DuplicateEdgeError(StoreError):
    """An edge with the same (source, target, kind) already exists."""


class DuplicateConceptLabelError(StoreError):
    """A concept with this exact label already exists in the graph."""


class SchemaViolationError(StoreError):
    """Edge endpoints do not match the kinds required by the edge type."""


class InvariantViolationError(StoreError):
    """A node field violates its declared invariant."""

    def __init__(self, field: str, message: str) -> None:
        super().__init__(f"{field}: {message}")
        self.field = field


class UnknownNodeError(StoreError):
    """Referenced node id is not present."""


class UnknownEndpointError(StoreError):
    """An edge endpoint refers to a node id not present in the graph."""


class CorruptFileError(StoreError):
    """A persisted graph file failed to parse."""

    def __init__(self, line_no: int, reason: str) -> None:
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


# --- vector index ----------------------------------------------------------


class IndexError_(GraphMemError):
    """Base class for vector index errors (trailing underscore avoids the builtin)."""


class DimensionMismatchError(IndexError_):
    """Vector dimensionality differs from the index dimensionality."""


class InvalidVectorError(IndexError_):
    """Vector is unusable (zero norm or non-finite values)."""


class MissingEmbeddingError(IndexError_):
    """Node exists but carries no embedding."""


# --- llm gateway -----------------------------------------------------------


class GatewayError(GraphMemError):
    """Base class for model-provider failures."""


class AuthError(GatewayError):
    """Credential missing or rejected; never retried."""


class RateLimitedError(GatewayError):
    """Provider kept rate-limiting after all retry attempts."""


class TransportError(GatewayError):
    """Network or server failure that survived all retry attempts."""


class EmptyResponseError(GatewayError):
    """Provider returned a response with no usable content."""


class DimensionDriftError(GatewayError):
    """Embedding response dimensionality is inconsistent."""


class ParseError(GraphMemError):
    """Base class for model-output parsing failures."""


class MalformedJsonError(ParseError):
    """Model output could not be parsed as JSON."""

    def __init__(self, snippet: str) -> None:
        super().__init__(f"not valid JSON: {snippet!r}")
        self.snippet = snippet


class MissingFieldError(ParseError):
    """Parsed JSON is missing a required field or has a wrong-typed field."""

    def __init__(self, path: str) -> None:
        super().__init__(f"missing or invalid field: {path}")
        self.path = path


# --- retrieval -------------------------------------------------------------


class RetrievalError(GraphMemError):
    """Base class for retrieval errors."""


class EmptyGraphError(RetrievalError):
    """The graph or index holds nothing retrievable."""


class EmptyCandidatesError(RetrievalError):
    """Seed selection was handed an empty candidate list."""


class NonStochasticError(RetrievalError):
    """A teleport vector or transition row does not sum to one."""


# --- datasets / evaluation -------------------------------------------------


class DatasetError(GraphMemError):
    """Base class for benchmark dataset errors."""


class DatasetParseError(DatasetError):
    """Benchmark file is malformed."""

    def __init__(self, path: str, reason: str) -> None:
        super().__init__(f"{path}: {reason}")
        self.path = path
        self.reason = reason


class UnknownCategoryError(DatasetError):
    """QA item carries a category code outside the known range."""
