"""Deterministic offline gateway for tests and --mock runs.

Chat responses are pure functions of the rendered prompt and embeddings are
pure functions of the text, so two identical runs produce identical graphs,
packs and eval summaries with zero network access. The chat rules are
deliberately dumb; they exist to exercise the pipeline, not to be smart.

Rules:
- extraction: one fact per new episode ("FACT: " + its first 8 tokens) and
  one concept per episode built from its two most frequent non-stopword
  tokens joined by an underscore; labels already listed as existing are
  reused as-is.
- reflections: one reflection per session when at least two new facts exist,
  citing the first and last fact ids.
- answer: echoes the first fact line of the packed memory (falling back to
  the first bullet of any section).
- judge: sentence-level containment coverage of the reference answer in the
  hypothesis, rounded to two decimals.
- embed: each token gets a vector seeded from its own hash; a text embeds to
  the unit-normalized sum over its token multiset, so shared vocabulary
  means higher cosine.
"""

from __future__ import annotations

import hashlib
import json
import re
import threading
from collections import Counter

import numpy as np

from .errors import EmptyResponseError
from .llm import ChatRequest
from .prompts import TEMPLATES, PromptName

__all__ = ["MockGateway", "containment_coverage"]

_TOKEN_RE = re.compile(r"[a-z0-9]+")

# Small closed-class list; enough to push concept labels toward content words.
_STOPWORDS = frozenset(
    """a an the and or but if then else i you he she it we they me him her them us
    is are was were be been being am do does did have has had will would can could
    should may might must to of in on at for with my your his its our their this
    that these those there here not no yes so too very just really about as by
    from up down out over under again more most some such than what which who whom
    how when where why all any both each few other own same s t don now
    """.split()
)

_EPISODE_LINE_RE = re.compile(r"^\[(?P<ts>[^\]]*)\]\s+(?P<body>.*)\s+\(id:\s+(?P<id>\S+)\)$")
_BULLET_LINE_RE = re.compile(r"^- (?P<text>.*)\s+\(id:\s+(?P<id>\S+)\)$")


def _tokens(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


def _section(prompt: str, header: str) -> str:
    """Text of one '## header' section, up to the next '## ' or the end."""
    marker = f"## {header}\n"
    start = prompt.find(marker)
    if start == -1:
        return ""
    start += len(marker)
    end = prompt.find("\n## ", start)
    return prompt[start:] if end == -1 else prompt[start:end]


def _normalize_for_match(text: str) -> str:
    return " ".join(text.lower().split()).rstrip(".!?;, ")


def containment_coverage(reference: str, hypothesis: str) -> tuple[int, int]:
    """(sentences found, total sentences) of the reference in the hypothesis."""
    sentences = [s for s in re.split(r"(?<=[.!?;])\s+", reference.strip()) if s.strip()]
    if not sentences:
        return (0, 0)
    hay = _normalize_for_match(hypothesis)
    found = sum(1 for s in sentences if _normalize_for_match(s) and _normalize_for_match(s) in hay)
    return (found, len(sentences))


class MockGateway:
    """Offline stand-in for HttpGateway with the same call surface."""

    def __init__(self, dim: int = 64) -> None:
        self.dim = dim
        self.chat_calls = 0
        self.embed_calls = 0
        self._token_cache: dict[str, np.ndarray] = {}
        self._lock = threading.Lock()

    def describe(self) -> str:
        return f"mock:{self.dim}"

    # --- embeddings -------------------------------------------------------

    def _token_vector(self, token: str) -> np.ndarray:
        vec = self._token_cache.get(token)
        if vec is None:
            seed = int.from_bytes(hashlib.sha256(token.encode("utf-8")).digest()[:8], "big")
            vec = np.random.default_rng(seed).standard_normal(self.dim)
            self._token_cache[token] = vec
        return vec

    def embed(self, texts: list[str]) -> list[list[float]]:
        with self._lock:
            self.embed_calls += 1
        out = []
        for text in texts:
            toks = _tokens(text)
            if not toks:
                # keep totality for punctuation-only strings
                toks = ["blank" + hashlib.sha256(text.encode("utf-8")).hexdigest()[:8]]
            acc = np.zeros(self.dim)
            for token, count in Counter(toks).items():
                acc += count * self._token_vector(token)
            norm = float(np.linalg.norm(acc))
            if norm == 0.0:
                acc[0] = 1.0
                norm = 1.0
            out.append([float(x) for x in acc / norm])
        return out

    # --- chat -------------------------------------------------------------

    def chat(self, request: ChatRequest) -> str:
        with self._lock:
            self.chat_calls += 1
        prompt = request.prompt
        if prompt.startswith(TEMPLATES[PromptName.FACT_CONCEPT_EXTRACTION].first_line):
            return self._extract(prompt)
        if prompt.startswith(TEMPLATES[PromptName.REFLECTION_GENERATION].first_line):
            return self._reflect(prompt)
        if prompt.startswith(TEMPLATES[PromptName.ANSWER_FROM_MEMORY].first_line):
            return self._answer(prompt)
        if prompt.startswith(TEMPLATES[PromptName.JUDGE].first_line):
            return self._judge(prompt)
        raise EmptyResponseError("mock gateway does not recognize this prompt")

    @staticmethod
    def _parse_episode_lines(section: str) -> list[tuple[str, str]]:
        """(episode text, episode id) pairs from rendered '[ts] speaker: text (id: x)' lines."""
        episodes = []
        for line in section.splitlines():
            m = _EPISODE_LINE_RE.match(line.strip())
            if not m:
                continue
            body = m.group("body")
            # body is "speaker: text"; the text keeps any later colons
            text = body.split(": ", 1)[1] if ": " in body else body
            episodes.append((text, m.group("id")))
        return episodes

    @staticmethod
    def concept_label_for(text: str) -> str | None:
        """Two most frequent non-stopword tokens joined by an underscore."""
        counts = Counter(t for t in _tokens(text) if t not in _STOPWORDS)
        ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
        if len(ranked) < 2:
            return None
        return f"{ranked[0][0]}_{ranked[1][0]}"

    def _extract(self, prompt: str) -> str:
        # Labels are a pure function of episode text, so an episode that
        # repeats earlier vocabulary reproduces the existing label exactly;
        # that is all the concept reuse the pipeline needs.
        episodes = self._parse_episode_lines(_section(prompt, "New conversation episodes (extract from these)"))

        facts = []
        concept_episodes: dict[str, list[str]] = {}
        for text, ep_id in episodes:
            label = self.concept_label_for(text)
            fact = {
                "fact_text": "FACT: " + " ".join(text.split()[:8]),
                "belief": 0.9,
                "source_episode_ids": [ep_id],
                "concepts": [label] if label else [],
            }
            facts.append(fact)
            if label:
                concept_episodes.setdefault(label, []).append(ep_id)
        concepts = [
            {"concept_label": label, "episode_ids": eps} for label, eps in concept_episodes.items()
        ]
        return json.dumps({"facts": facts, "concepts": concepts})

    def _reflect(self, prompt: str) -> str:
        new_facts = []
        for line in _section(prompt, "New facts (generate reflections from these)").splitlines():
            m = _BULLET_LINE_RE.match(line.strip())
            if m:
                new_facts.append((m.group("text"), m.group("id")))
        if len(new_facts) < 2:
            return json.dumps({"reflections": []})
        first_text = new_facts[0][0]
        if first_text.startswith("FACT: "):
            first_text = first_text[len("FACT: ") :]
        reflection = {
            "reflection_text": (
                f"REFLECTION: a recurring theme across {len(new_facts)} facts, "
                f"starting with {' '.join(first_text.split()[:6])}"
            ),
            "belief": 0.8,
            "source_fact_ids": [new_facts[0][1], new_facts[-1][1]],
        }
        return json.dumps({"reflections": [reflection]})

    def _answer(self, prompt: str) -> str:
        memory = _section(prompt, "Retrieved memory")
        in_facts = False
        first_bullet = None
        for line in memory.splitlines():
            stripped = line.strip()
            if stripped == "Facts:":
                in_facts = True
                continue
            if stripped.endswith(":") and not stripped.startswith("-"):
                in_facts = False
                continue
            if stripped.startswith("- "):
                if in_facts:
                    return stripped[2:]
                if first_bullet is None:
                    first_bullet = stripped[2:]
        if first_bullet is not None:
            return first_bullet
        return "The memory does not contain information relevant to the question."

    def _judge(self, prompt: str) -> str:
        ref_m = re.search(r"Correct Reference Answer: (.*?)\n\nGenerated Response: ", prompt, re.S)
        hyp_m = re.search(r"Generated Response: (.*?)\n\nEvaluate ONLY", prompt, re.S)
        reference = ref_m.group(1) if ref_m else ""
        hypothesis = hyp_m.group(1) if hyp_m else ""
        found, total = containment_coverage(reference, hypothesis)
        reward = round(found / total, 2) if total else 0.0
        return json.dumps(
            {
                "reward": reward,
                "justification": f"{found} of {total} reference sentences found in the response",
            }
        )
