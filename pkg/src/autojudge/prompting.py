"""Prompt rendering for relevance estimation.

The full prompt has three blocks: a context block with the four topic fields,
a relevance instruction, and an output instruction asking for an integer score
on a 1-100 scale in the form ``Relevance: <score>``. The prompt applies to the
text side only; the image locator is passed through untouched.

Short-context models (e.g. a 77-token text encoder) get a reduced rendering:
just the context field values, whitespace-normalized and tail-truncated to a
token budget.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Protocol, Sequence

from .collection import ImageDoc, Topic
from .errors import ValidationError

PLACEHOLDERS = ("page_title", "page_context", "section_title", "section_context")

_RELEVANCE_MARKER = "Relevance Instruction:"
_OUTPUT_MARKER = "Output Instruction:"

_PLACEHOLDER_RE = re.compile(r"\{(" + "|".join(PLACEHOLDERS) + r")\}")

DEFAULT_TEMPLATE_RESOURCE = "relevance_v1.txt"


class Tokenizer(Protocol):
    def tokenize(self, text: str) -> list[str]: ...

    def join(self, tokens: Sequence[str]) -> str: ...


class WhitespaceTokenizer:
    """Default token counter: whitespace-separated words, joined by single spaces."""

    def tokenize(self, text: str) -> list[str]:
        return text.split()

    def join(self, tokens: Sequence[str]) -> str:
        return " ".join(tokens)


_WHITESPACE_TOKENIZER = WhitespaceTokenizer()


@dataclass(frozen=True)
class PromptTemplate:
    """The instruction prompt, split into its three blocks.

    The template text must contain each of the four placeholders
    ``{page_title}`` ``{page_context}`` ``{section_title}`` ``{section_context}``
    exactly once.
    """

    context_block: str
    relevance_instruction: str
    output_instruction: str

    def __post_init__(self):
        text = self.text()
        for name in PLACEHOLDERS:
            count = text.count("{" + name + "}")
            if count != 1:
                raise ValidationError(
                    f"template must contain {{{name}}} exactly once, found {count}"
                )

    def text(self) -> str:
        blocks = [
            self.context_block,
            self.relevance_instruction,
            self.output_instruction,
        ]
        return "\n".join(b for b in blocks if b)

    @classmethod
    def from_text(cls, text: str) -> "PromptTemplate":
        """Split template text into blocks at the instruction marker lines.

        Templates without markers are treated as a single context block.
        """
        lines = text.rstrip("\n").split("\n")
        rel_at = out_at = None
        for i, line in enumerate(lines):
            if line == _RELEVANCE_MARKER and rel_at is None:
                rel_at = i
            elif line == _OUTPUT_MARKER and out_at is None:
                out_at = i
        if rel_at is not None and out_at is not None and rel_at < out_at:
            return cls(
                context_block="\n".join(lines[:rel_at]),
                relevance_instruction="\n".join(lines[rel_at:out_at]),
                output_instruction="\n".join(lines[out_at:]),
            )
        return cls(context_block="\n".join(lines), relevance_instruction="", output_instruction="")

    @classmethod
    def default(cls) -> "PromptTemplate":
        return _default_template()


@lru_cache(maxsize=1)
def _default_template() -> PromptTemplate:
    text = (
        resources.files("autojudge.templates")
        .joinpath(DEFAULT_TEMPLATE_RESOURCE)
        .read_text(encoding="utf-8")
    )
    return PromptTemplate.from_text(text)


@dataclass(frozen=True)
class RenderedPrompt:
    """A fully substituted prompt plus the image locator it applies to."""

    text: str
    image_ref: str


def _substitute(block: str, topic: Topic) -> str:
    values = {name: getattr(topic, name) for name in PLACEHOLDERS}
    return _PLACEHOLDER_RE.sub(lambda m: values[m.group(1)], block)


def render_full(topic: Topic, doc: ImageDoc, template: PromptTemplate | None = None) -> RenderedPrompt:
    """Render the complete prompt for one (topic, image) pair."""
    template = template or PromptTemplate.default()
    blocks = [
        _substitute(template.context_block, topic),
        template.relevance_instruction,
        template.output_instruction,
    ]
    return RenderedPrompt(text="\n".join(b for b in blocks if b), image_ref=doc.image_ref)


def render_context_only(topic: Topic, budget: int, tokenizer: Tokenizer | None = None) -> str:
    """Concatenated context field values, truncated to at most ``budget`` tokens.

    No instruction text is included. Output is in the tokenizer's normalized
    form (single spaces for the default tokenizer), so for a fixed topic the
    result under budget b is a string prefix of the result under any b' >= b.
    """
    if budget < 1:
        raise ValueError(f"budget must be >= 1, got {budget}")
    tokenizer = tokenizer or _WHITESPACE_TOKENIZER
    parts = [topic.page_title, topic.page_context, topic.section_title, topic.section_context]
    text = " ".join(p for p in parts if p)
    tokens = tokenizer.tokenize(text)
    return tokenizer.join(tokens[:budget])
