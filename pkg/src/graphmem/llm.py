"""Model-provider gateway and output parsers.

One HTTP gateway speaks the common chat-completions wire shape, so any
compatible provider works by pointing base_url at it. All pipeline calls run
at temperature 0. Parsers are total: they either return a typed result or
raise a typed ParseError, and they tolerate the two most common model
quirks, markdown fences around JSON and leading prose before it.
"""

from __future__ import annotations

import json
import logging
import os
import random
import threading
import time
from dataclasses import dataclass
from typing import Protocol, runtime_checkable

import requests

from .errors import (
    AuthError,
    DimensionDriftError,
    EmptyResponseError,
    MalformedJsonError,
    MissingFieldError,
    RateLimitedError,
    TransportError,
)

__all__ = [
    "ProviderConfig",
    "ChatRequest",
    "LLMGateway",
    "HttpGateway",
    "ExtractedFact",
    "ExtractedConcept",
    "ExtractionResult",
    "ExtractedReflection",
    "JudgeVerdict",
    "parse_extraction",
    "parse_reflections",
    "parse_judge",
]

logger = logging.getLogger(__name__)
trace_logger = logging.getLogger(__name__ + ".trace")

DEFAULT_BELIEF = 0.8


@dataclass(frozen=True)
class ChatRequest:
    prompt: str
    temperature: float = 0.0
    model: str | None = None  # None means the gateway default
    max_output_tokens: int | None = None


@dataclass
class ProviderConfig:
    """Where and how to reach the model provider.

    The credential is read from the environment variable named by
    credential_env at call time and never stored in config files or logs.
    """

    base_url: str = "https://api.openai.com/v1"
    chat_model: str = "gpt-4o-mini"
    embed_model: str = "text-embedding-3-small"
    credential_env: str = "OPENAI_API_KEY"
    max_in_flight: int = 4
    max_attempts: int = 5
    backoff_base: float = 0.5
    timeout: float = 60.0


@runtime_checkable
class LLMGateway(Protocol):
    def chat(self, request: ChatRequest) -> str: ...

    def embed(self, texts: list[str]) -> list[list[float]]: ...


# --- parsed output types ---------------------------------------------------


@dataclass(frozen=True)
class ExtractedFact:
    text: str
    belief: float
    source_episode_ids: tuple[str, ...]
    concepts: tuple[str, ...]


@dataclass(frozen=True)
class ExtractedConcept:
    label: str
    episode_ids: tuple[str, ...]


@dataclass(frozen=True)
class ExtractionResult:
    facts: tuple[ExtractedFact, ...]
    concepts: tuple[ExtractedConcept, ...]


@dataclass(frozen=True)
class ExtractedReflection:
    text: str
    belief: float
    source_fact_ids: tuple[str, ...]


@dataclass(frozen=True)
class JudgeVerdict:
    reward: float
    justification: str
    clamped: bool = False  # True when the raw reward fell outside [0, 1]


# --- parsing helpers -------------------------------------------------------


def _strip_fences(text: str) -> str:
    t = text.strip()
    if t.startswith("```"):
        first_break = t.find("\n")
        t = t[first_break + 1 :] if first_break != -1 else ""
    if t.endswith("```"):
        t = t[: t.rfind("```")]
    return t.strip()


def _load_json_object(text: str) -> dict:
    """Parse a JSON object out of model text or raise MalformedJsonError.

    strict=False because one template's own output example contains raw
    newlines inside a string literal; models imitate it.
    """
    t = _strip_fences(text)
    candidates = [t]
    start, end = t.find("{"), t.rfind("}")
    if start != -1 and end > start:
        candidates.append(t[start : end + 1])
    for candidate in candidates:
        try:
            obj = json.loads(candidate, strict=False)
        except json.JSONDecodeError:
            continue
        if isinstance(obj, dict):
            return obj
    raise MalformedJsonError(text.strip()[:120])


def _string_list(value, path: str) -> tuple[str, ...]:
    if not isinstance(value, list) or not all(isinstance(x, str) for x in value):
        raise MissingFieldError(path)
    return tuple(value)


def _belief(value, path: str) -> float:
    if value is None:
        return DEFAULT_BELIEF
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise MissingFieldError(path)
    return float(value)


def parse_extraction(text: str) -> ExtractionResult:
    """Parse fact/concept extraction output into typed records."""
    obj = _load_json_object(text)
    raw_facts = obj.get("facts")
    if not isinstance(raw_facts, list):
        raise MissingFieldError("facts")
    raw_concepts = obj.get("concepts")
    if not isinstance(raw_concepts, list):
        raise MissingFieldError("concepts")

    facts = []
    for i, item in enumerate(raw_facts):
        if not isinstance(item, dict):
            raise MissingFieldError(f"facts[{i}]")
        fact_text = item.get("fact_text")
        if not isinstance(fact_text, str) or not fact_text.strip():
            raise MissingFieldError(f"facts[{i}].fact_text")
        facts.append(
            ExtractedFact(
                text=fact_text.strip(),
                belief=_belief(item.get("belief"), f"facts[{i}].belief"),
                source_episode_ids=_string_list(
                    item.get("source_episode_ids"), f"facts[{i}].source_episode_ids"
                ),
                concepts=_string_list(item.get("concepts"), f"facts[{i}].concepts"),
            )
        )

    concepts = []
    for i, item in enumerate(raw_concepts):
        if not isinstance(item, dict):
            raise MissingFieldError(f"concepts[{i}]")
        label = item.get("concept_label")
        if not isinstance(label, str) or not label.strip():
            raise MissingFieldError(f"concepts[{i}].concept_label")
        concepts.append(
            ExtractedConcept(
                label=label.strip(),
                episode_ids=_string_list(item.get("episode_ids"), f"concepts[{i}].episode_ids"),
            )
        )
    return ExtractionResult(facts=tuple(facts), concepts=tuple(concepts))


def parse_reflections(text: str) -> tuple[ExtractedReflection, ...]:
    """Parse reflection generation output into typed records."""
    obj = _load_json_object(text)
    raw = obj.get("reflections")
    if not isinstance(raw, list):
        raise MissingFieldError("reflections")
    out = []
    for i, item in enumerate(raw):
        if not isinstance(item, dict):
            raise MissingFieldError(f"reflections[{i}]")
        rtext = item.get("reflection_text")
        if not isinstance(rtext, str) or not rtext.strip():
            raise MissingFieldError(f"reflections[{i}].reflection_text")
        out.append(
            ExtractedReflection(
                text=rtext.strip(),
                belief=_belief(item.get("belief"), f"reflections[{i}].belief"),
                source_fact_ids=_string_list(
                    item.get("source_fact_ids"), f"reflections[{i}].source_fact_ids"
                ),
            )
        )
    return tuple(out)


def parse_judge(text: str) -> JudgeVerdict:
    """Parse a judge verdict; rewards outside [0, 1] are clamped and flagged."""
    obj = _load_json_object(text)
    reward = obj.get("reward")
    if isinstance(reward, bool) or not isinstance(reward, (int, float)):
        raise MissingFieldError("reward")
    clamped = not (0.0 <= float(reward) <= 1.0)
    if clamped:
        logger.warning("judge reward %s outside [0, 1], clamping", reward)
    justification = obj.get("justification", "")
    if not isinstance(justification, str):
        justification = str(justification)
    return JudgeVerdict(
        reward=min(1.0, max(0.0, float(reward))),
        justification=justification,
        clamped=clamped,
    )


# --- HTTP provider ---------------------------------------------------------

_RETRYABLE_STATUS = {429} | set(range(500, 600))


class HttpGateway:
    """Chat-completions-compatible HTTP provider with bounded retries.

    Transport failures and retryable statuses (429, 5xx) are retried up to
    max_attempts with exponential backoff plus jitter; 401/403 fail fast.
    At most max_in_flight requests run concurrently across threads.
    """

    def __init__(self, config: ProviderConfig | None = None, trace: bool = False) -> None:
        self.config = config or ProviderConfig()
        self.trace = trace
        self._session = requests.Session()
        self._gate = threading.BoundedSemaphore(self.config.max_in_flight)
        self._embed_dim: int | None = None

    def describe(self) -> str:
        """Stable identity string for run fingerprints; never the credential."""
        return f"http:{self.config.chat_model}:{self.config.embed_model}"

    def _credential(self) -> str:
        value = os.environ.get(self.config.credential_env, "")
        if not value:
            raise AuthError(
                f"credential environment variable {self.config.credential_env!r} is not set"
            )
        return value

    def _trace_log(self, direction: str, payload) -> None:
        if self.trace:
            body = json.dumps(payload, default=str)
            if len(body) > 4000:
                body = body[:4000] + "...(truncated)"
            trace_logger.info("%s %s", direction, body)

    def _post(self, path: str, payload: dict) -> dict:
        url = self.config.base_url.rstrip("/") + path
        headers = {"Authorization": f"Bearer {self._credential()}"}
        self._trace_log(f"POST {url}", payload)
        last_error: Exception | None = None
        for attempt in range(1, self.config.max_attempts + 1):
            try:
                with self._gate:
                    resp = self._session.post(
                        url, json=payload, headers=headers, timeout=self.config.timeout
                    )
            except requests.RequestException as exc:
                last_error = TransportError(f"{url}: {exc}")
            else:
                if resp.status_code in (401, 403):
                    raise AuthError(f"{url}: HTTP {resp.status_code}")
                if resp.status_code == 200:
                    try:
                        data = resp.json()
                    except ValueError as exc:
                        raise TransportError(f"{url}: non-JSON response") from exc
                    self._trace_log(f"RESP {url}", data)
                    return data
                if resp.status_code in _RETRYABLE_STATUS:
                    kind = RateLimitedError if resp.status_code == 429 else TransportError
                    last_error = kind(f"{url}: HTTP {resp.status_code}")
                else:
                    raise TransportError(f"{url}: HTTP {resp.status_code}: {resp.text[:200]}")
            if attempt < self.config.max_attempts:
                delay = self.config.backoff_base * (2 ** (attempt - 1))
                delay += random.uniform(0, self.config.backoff_base)
                logger.debug("retrying %s in %.2fs (attempt %d): %s", url, delay, attempt, last_error)
                time.sleep(delay)
        assert last_error is not None
        raise last_error

    def chat(self, request: ChatRequest) -> str:
        payload: dict = {
            "model": request.model or self.config.chat_model,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
        }
        if request.max_output_tokens is not None:
            payload["max_tokens"] = request.max_output_tokens
        data = self._post("/chat/completions", payload)
        try:
            content = data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise EmptyResponseError(f"malformed chat response: {exc}") from exc
        if not isinstance(content, str) or not content.strip():
            raise EmptyResponseError("chat response has no content")
        return content

    def embed(self, texts: list[str]) -> list[list[float]]:
        if not texts:
            return []
        data = self._post("/embeddings", {"model": self.config.embed_model, "input": list(texts)})
        rows = data.get("data")
        if not isinstance(rows, list) or len(rows) != len(texts):
            raise EmptyResponseError(
                f"embedding response has {len(rows) if isinstance(rows, list) else 'no'} rows, "
                f"expected {len(texts)}"
            )
        vectors: list[list[float]] = []
        for row in rows:
            vec = row.get("embedding") if isinstance(row, dict) else None
            if not isinstance(vec, list) or not vec:
                raise EmptyResponseError("embedding row has no vector")
            if self._embed_dim is None:
                self._embed_dim = len(vec)
            elif len(vec) != self._embed_dim:
                raise DimensionDriftError(
                    f"embedding dim changed from {self._embed_dim} to {len(vec)}"
                )
            vectors.append([float(x) for x in vec])
        return vectors
