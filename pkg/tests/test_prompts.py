import hashlib

import pytest

from graphmem.prompts import TEMPLATES, PromptName, render_prompt

# The template bodies are load-bearing artifacts: extraction quality and the
# judge's scoring rubric depend on this exact wording, and the mock gateway
# dispatches on the first line. Any edit must change these hashes on purpose.
FROZEN_SHA256 = {
    PromptName.FACT_CONCEPT_EXTRACTION: "3f7859e53f2434200eb5d6f43e1eb35406afd0aaa7c7c7ed30f98b2425862978",
    PromptName.REFLECTION_GENERATION: "e07db7c0b2f19bd365f1e3a2d876dbe1b22fa15569c571851646fadde70f219d",
    PromptName.ANSWER_FROM_MEMORY: "4d268ac3e50ae9d8896290e41a27736bbf6a705b176810ce70a804ec9f4d236f",
    PromptName.JUDGE: "2fd74240b5a3c5473c529e55336d4459b5eea595094e6352c14ecaffa2c6843c",
}


@pytest.mark.parametrize("name", list(PromptName))
def test_bodies_frozen(name):
    digest = hashlib.sha256(TEMPLATES[name].body.encode("utf-8")).hexdigest()
    assert digest == FROZEN_SHA256[name], f"{name.value} template body changed"


@pytest.mark.parametrize("name", list(PromptName))
def test_every_placeholder_occurs_exactly_once(name):
    template = TEMPLATES[name]
    for placeholder in template.placeholders:
        assert template.body.count(placeholder) == 1


def test_first_lines_distinct():
    first_lines = [t.first_line for t in TEMPLATES.values()]
    assert len(set(first_lines)) == len(first_lines)


def test_render_fills_all_placeholders():
    rendered = render_prompt(
        PromptName.FACT_CONCEPT_EXTRACTION,
        {
            "existing_facts": "- none",
            "existing_concepts": "(none)",
            "related_episodes": "- none",
            "new_episodes": "- [t] A: hi (id: ep-1)",
        },
    )
    assert "{{" not in rendered
    assert "- [t] A: hi (id: ep-1)" in rendered


def test_render_missing_key_raises():
    with pytest.raises(KeyError):
        render_prompt(PromptName.ANSWER_FROM_MEMORY, {"query": "q"})


def test_render_extra_key_raises():
    with pytest.raises(KeyError):
        render_prompt(
            PromptName.ANSWER_FROM_MEMORY,
            {"query": "q", "memory_text": "m", "bogus": "x"},
        )


def test_judge_render_keeps_literal_json_braces():
    rendered = render_prompt(
        PromptName.JUDGE, {"question": "Q?", "answer": "A.", "hypothesis": "H."}
    )
    # the response-format example survives; the three slots are filled
    assert '{"reward": <float between 0.0 and 1.0>' in rendered
    assert "Question: Q?" in rendered
    assert "Correct Reference Answer: A." in rendered
    assert "Generated Response: H." in rendered


def test_render_does_not_reinterpret_substituted_text():
    # values containing brace syntax must land verbatim, not recurse
    rendered = render_prompt(
        PromptName.ANSWER_FROM_MEMORY,
        {"query": "what is {answer}?", "memory_text": "{{query}} literal"},
    )
    assert "what is {answer}?" in rendered
    assert "{{query}} literal" in rendered
