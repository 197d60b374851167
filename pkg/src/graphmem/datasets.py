"""Benchmark and conversation file loading.

The multi-session benchmark file is a JSON list of samples, each holding a
conversation (session_N turn lists plus session_N_date_time stamps) and a
qa list with integer category codes. Codes 1-4 map to the four graded
question categories; code 5 marks the adversarial set, which is excluded
from graded runs, and anything else is rejected. Session timestamps arrive
in a spoken format ("1:56 pm on 8 May, 2023") and are normalized to
ISO-8601 so episode nodes sort and render consistently.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
from dataclasses import dataclass
from datetime import datetime
from enum import Enum
from pathlib import Path

from .builder import ConversationSession, ConversationTurn
from .errors import DatasetParseError, UnknownCategoryError

__all__ = [
    "QACategory",
    "QAItem",
    "LocomoDataset",
    "parse_session_timestamp",
    "load_locomo",
    "load_conversation_json",
    "category_counts",
]

logger = logging.getLogger(__name__)

_SESSION_KEY_RE = re.compile(r"^session_(\d+)$")
_ADVERSARIAL_CODE = 5

_TIMESTAMP_FORMATS = (
    "%I:%M %p on %d %B, %Y",
    "%H:%M on %d %B, %Y",
    "%d %B, %Y",
)


class QACategory(Enum):
    MULTI_HOP = 1
    TEMPORAL = 2
    OPEN_DOMAIN = 3
    SINGLE_HOP = 4

    @property
    def label(self) -> str:
        return self.name.lower()


@dataclass(frozen=True)
class QAItem:
    qa_id: str
    conversation_id: str
    question: str
    reference: str
    category: QACategory


@dataclass
class LocomoDataset:
    conversations: dict[str, list[ConversationSession]]
    qa: list[QAItem]


def parse_session_timestamp(raw: str) -> str:
    """Normalize a session timestamp to ISO-8601 or raise ValueError."""
    text = str(raw).strip()
    try:
        return datetime.fromisoformat(text).isoformat()
    except ValueError:
        pass
    for fmt in _TIMESTAMP_FORMATS:
        try:
            return datetime.strptime(text, fmt).isoformat()
        except ValueError:
            continue
    raise ValueError(f"unrecognized timestamp {raw!r}")


def _qa_id(conversation_id: str, question: str, reference: str) -> str:
    return hashlib.sha256(f"{conversation_id}|{question}|{reference}".encode("utf-8")).hexdigest()[:16]


def _turn_text(turn: dict) -> str:
    """Turn text with any shared-photo caption folded in."""
    text = str(turn.get("text") or "").strip()
    caption = str(turn.get("blip_caption") or "").strip()
    if caption:
        photo = f"[shared photo: {caption}]"
        return f"{text} {photo}" if text else photo
    return text


def _parse_sessions(conversation: dict, path: str, conv_id: str) -> list[ConversationSession]:
    numbered: list[tuple[int, list]] = []
    for key, value in conversation.items():
        m = _SESSION_KEY_RE.match(key)
        if m and isinstance(value, list):
            numbered.append((int(m.group(1)), value))
    numbered.sort()
    sessions = []
    for n, raw_turns in numbered:
        stamp_raw = conversation.get(f"session_{n}_date_time")
        if stamp_raw is None:
            raise DatasetParseError(path, f"{conv_id}: session_{n} has no date_time")
        try:
            stamp = parse_session_timestamp(stamp_raw)
        except ValueError as exc:
            raise DatasetParseError(path, f"{conv_id}: session_{n}: {exc}") from exc
        turns = []
        for turn in raw_turns:
            if not isinstance(turn, dict):
                raise DatasetParseError(path, f"{conv_id}: session_{n} turn is not an object")
            text = _turn_text(turn)
            if not text:
                logger.debug("skipping empty turn in %s session_%d", conv_id, n)
                continue
            turns.append(ConversationTurn(speaker=str(turn.get("speaker") or ""), text=text))
        sessions.append(
            ConversationSession(session_id=f"session_{n}", timestamp=stamp, turns=tuple(turns))
        )
    if not sessions:
        raise DatasetParseError(path, f"{conv_id}: no sessions found")
    return sessions


def load_locomo(path: str | Path, expected_counts: dict[str, int] | None = None) -> LocomoDataset:
    """Load the multi-session benchmark file.

    Adversarial items (category code 5) are dropped; unknown codes raise
    UnknownCategoryError. expected_counts, when given, maps category labels
    and "total" to required question counts and mismatches fail loudly.
    """
    path = Path(path)
    try:
        root = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise DatasetParseError(str(path), str(exc)) from exc
    if not isinstance(root, list):
        raise DatasetParseError(str(path), "expected a top-level list of samples")

    conversations: dict[str, list[ConversationSession]] = {}
    qa: list[QAItem] = []
    for i, sample in enumerate(root):
        if not isinstance(sample, dict):
            raise DatasetParseError(str(path), f"sample {i} is not an object")
        conv_id = str(sample.get("sample_id") or "").strip()
        if not conv_id:
            raise DatasetParseError(str(path), f"sample {i} has no sample_id")
        if conv_id in conversations:
            raise DatasetParseError(str(path), f"duplicate sample_id {conv_id!r}")
        conversation = sample.get("conversation")
        if not isinstance(conversation, dict):
            raise DatasetParseError(str(path), f"{conv_id}: no conversation object")
        conversations[conv_id] = _parse_sessions(conversation, str(path), conv_id)

        for j, item in enumerate(sample.get("qa") or []):
            if not isinstance(item, dict):
                raise DatasetParseError(str(path), f"{conv_id}: qa[{j}] is not an object")
            code = item.get("category")
            if not isinstance(code, int) or isinstance(code, bool):
                raise DatasetParseError(str(path), f"{conv_id}: qa[{j}] has no integer category")
            if code == _ADVERSARIAL_CODE:
                continue  # ungraded arm: no reference answer to score against
            try:
                category = QACategory(code)
            except ValueError as exc:
                raise UnknownCategoryError(f"{conv_id}: qa[{j}] category {code}") from exc
            question = str(item.get("question") or "").strip()
            if not question:
                raise DatasetParseError(str(path), f"{conv_id}: qa[{j}] has no question")
            if "answer" not in item:
                raise DatasetParseError(str(path), f"{conv_id}: qa[{j}] has no answer")
            reference = str(item["answer"]).strip()
            qa.append(
                QAItem(
                    qa_id=_qa_id(conv_id, question, reference),
                    conversation_id=conv_id,
                    question=question,
                    reference=reference,
                    category=category,
                )
            )

    dataset = LocomoDataset(conversations=conversations, qa=qa)
    if expected_counts:
        actual = category_counts(dataset)
        actual["total"] = len(qa)
        for key, want in expected_counts.items():
            got = actual.get(key, 0)
            if got != want:
                raise DatasetParseError(
                    str(path), f"manifest mismatch for {key}: expected {want}, loaded {got}"
                )
    return dataset


def category_counts(dataset: LocomoDataset) -> dict[str, int]:
    counts = {category.label: 0 for category in QACategory}
    for item in dataset.qa:
        counts[item.category.label] += 1
    return counts


def load_conversation_json(path: str | Path) -> tuple[str, list[ConversationSession]]:
    """Load a single-conversation file in this package's own schema:

    {"conversation_id": str,
     "sessions": [{"session_id": str, "timestamp": str,
                   "turns": [{"speaker": str, "text": str}]}]}
    """
    path = Path(path)
    try:
        root = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise DatasetParseError(str(path), str(exc)) from exc
    if not isinstance(root, dict):
        raise DatasetParseError(str(path), "expected a top-level object")
    conv_id = str(root.get("conversation_id") or "").strip()
    if not conv_id:
        raise DatasetParseError(str(path), "missing conversation_id")
    raw_sessions = root.get("sessions")
    if not isinstance(raw_sessions, list) or not raw_sessions:
        raise DatasetParseError(str(path), "missing sessions list")
    sessions = []
    for i, raw in enumerate(raw_sessions):
        if not isinstance(raw, dict):
            raise DatasetParseError(str(path), f"sessions[{i}] is not an object")
        session_id = str(raw.get("session_id") or f"session_{i + 1}")
        try:
            stamp = parse_session_timestamp(raw.get("timestamp") or "")
        except ValueError as exc:
            raise DatasetParseError(str(path), f"sessions[{i}]: {exc}") from exc
        turns = []
        for j, turn in enumerate(raw.get("turns") or []):
            if not isinstance(turn, dict) or not str(turn.get("text") or "").strip():
                raise DatasetParseError(str(path), f"sessions[{i}].turns[{j}] has no text")
            turns.append(
                ConversationTurn(speaker=str(turn.get("speaker") or ""), text=str(turn["text"]))
            )
        if not turns:
            raise DatasetParseError(str(path), f"sessions[{i}] has no turns")
        sessions.append(ConversationSession(session_id=session_id, timestamp=stamp, turns=tuple(turns)))
    return conv_id, sessions
