"""Render enriched classification inputs and answer-first training targets.

The template is original to this repo and versioned so alternatives can
coexist; block delimiters are lines of the form ``=== NAME ===``. Any line
in embedded content that could be mistaken for a delimiter is escaped with a
leading backslash, so a rendered prompt always parses back into its blocks
no matter what the reference prompts contain.

Targets are serialized answer-first: the first token is the label, then a
``Citation:`` line with the reference indices used, then a ``Reasoning:``
section. At inference time a bare answer token is also accepted.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .errors import ResponseParseError
from .store import RetrievalResult, SafetyLabel

TEMPLATE_VERSION = "ragmod/1"

DEFAULT_INSTRUCTION = (
    "You are a strict content-safety reviewer. Compare the input prompt "
    "against the labeled reference examples and decide whether it is safe "
    "or unsafe. Reply with the single word safe or unsafe on the first "
    "line; you may then cite reference numbers and give your reasoning."
)

_DELIMITER = re.compile(r"^=== (SYSTEM|REFERENCE (\d+) \((safe|unsafe)\)|INPUT|RESPONSE) ===$")


@dataclass(frozen=True)
class Reference:
    index: int  # 1-based position in the rendered prompt
    entry_id: str
    prompt: str
    label: SafetyLabel
    explanation: str
    distance: float


@dataclass(frozen=True)
class EnrichedPrompt:
    instruction: str
    references: tuple[Reference, ...]
    input_prompt: str
    rendered: str
    template_version: str = TEMPLATE_VERSION

    @property
    def ref_ids(self) -> list[str]:
        return [r.entry_id for r in self.references]


@dataclass(frozen=True)
class TrainingTarget:
    answer: SafetyLabel
    citations: tuple[int, ...]
    reasoning: str

    def serialize(self) -> str:
        cited = ", ".join(str(i) for i in self.citations)
        return f"{self.answer.value}\nCitation: {cited}\nReasoning: {self.reasoning}"


def _escape(text: str) -> str:
    # neutralize embedded block delimiters; never unescaped (display only)
    return "\n".join(
        "\\" + line if line.startswith("===") else line for line in text.split("\n")
    )


def _order_references(
    safe_results: list[RetrievalResult], unsafe_results: list[RetrievalResult]
) -> tuple[Reference, ...]:
    refs = []
    for result in list(safe_results) + list(unsafe_results):
        refs.append(
            Reference(
                index=len(refs) + 1,
                entry_id=result.entry.id,
                prompt=result.entry.prompt,
                label=result.entry.label,
                explanation=result.entry.explanation,
                distance=result.distance,
            )
        )
    return tuple(refs)


def render_prompt(instruction: str, references: tuple[Reference, ...], input_prompt: str) -> str:
    parts = ["=== SYSTEM ===", _escape(instruction)]
    for ref in references:
        parts.append(f"=== REFERENCE {ref.index} ({ref.label.value}) ===")
        parts.append(f"PROMPT: {_escape(ref.prompt)}")
        parts.append(f"LABEL: {ref.label.value}")
        parts.append(f"EXPLANATION: {_escape(ref.explanation)}")
    parts.append("=== INPUT ===")
    parts.append(_escape(input_prompt))
    return "\n".join(parts) + "\n"


def build_eval_prompt(
    input_prompt: str,
    safe_results: list[RetrievalResult],
    unsafe_results: list[RetrievalResult],
    instruction: str = DEFAULT_INSTRUCTION,
    max_explanation_chars: int | None = None,
) -> EnrichedPrompt:
    """Evaluation rendering: instruction + references + input, no response.

    References appear safe-first then unsafe, each ascending by distance
    (the order retrieval returns them in).
    """
    refs = _order_references(safe_results, unsafe_results)
    if max_explanation_chars is not None:
        refs = tuple(
            Reference(r.index, r.entry_id, r.prompt, r.label,
                      r.explanation[:max_explanation_chars], r.distance)
            for r in refs
        )
    rendered = render_prompt(instruction, refs, input_prompt)
    return EnrichedPrompt(
        instruction=instruction,
        references=refs,
        input_prompt=input_prompt,
        rendered=rendered,
    )


def build_training_example(
    input_prompt: str,
    safe_results: list[RetrievalResult],
    unsafe_results: list[RetrievalResult],
    label: SafetyLabel,
    reasoning_text: str,
    citations: tuple[int, ...] | None = None,
    instruction: str = DEFAULT_INSTRUCTION,
    max_explanation_chars: int | None = None,
) -> tuple[EnrichedPrompt, TrainingTarget]:
    """Training pair: the enriched prompt plus its answer-first target.

    ``reasoning_text`` is caller-supplied; by default every reference is
    cited.
    """
    enriched = build_eval_prompt(
        input_prompt, safe_results, unsafe_results,
        instruction=instruction, max_explanation_chars=max_explanation_chars,
    )
    if citations is None:
        citations = tuple(r.index for r in enriched.references)
    target = TrainingTarget(answer=label, citations=tuple(citations), reasoning=reasoning_text)
    return enriched, target


def render_training_record(enriched: EnrichedPrompt, target: TrainingTarget) -> str:
    return enriched.rendered + "=== RESPONSE ===\n" + target.serialize()


def parse_response(text: str) -> TrainingTarget:
    """Parse a classifier response; the first token must be the answer.

    Accepts bare answer-only responses (empty citations and reasoning).
    """
    tokens = text.split()
    if not tokens:
        raise ResponseParseError("empty response")
    first = tokens[0].lower()
    if first not in ("safe", "unsafe"):
        raise ResponseParseError(f"first token {tokens[0]!r} is not 'safe' or 'unsafe'")
    answer = SafetyLabel.parse(first)

    citations: tuple[int, ...] = ()
    reasoning = ""
    lines = text.split("\n")
    for i, line in enumerate(lines):
        if line.startswith("Citation:"):
            found = re.findall(r"\d+", line)
            citations = tuple(int(x) for x in found)
        if line.startswith("Reasoning:"):
            reasoning = "\n".join([line[len("Reasoning:") :].lstrip(" ")] + lines[i + 1 :])
            break
    return TrainingTarget(answer=answer, citations=citations, reasoning=reasoning)


def parse_blocks(rendered: str) -> dict:
    """Split a rendered prompt back into its blocks.

    Returns ``{"system": str, "references": [(index, label, body)],
    "input": str, "response": str | None}``. Used to verify injection
    hygiene: embedded delimiters in content never create extra blocks.
    """
    blocks: list[tuple[str, list[str]]] = []
    for line in rendered.split("\n"):
        m = _DELIMITER.match(line)
        if m:
            blocks.append((m.group(1), []))
        elif blocks:
            blocks[-1][1].append(line)
    out = {"system": "", "references": [], "input": "", "response": None}
    for name, body_lines in blocks:
        body = "\n".join(body_lines).rstrip("\n")
        if name == "SYSTEM":
            out["system"] = body
        elif name == "INPUT":
            out["input"] = body
        elif name == "RESPONSE":
            out["response"] = body
        else:
            m = _DELIMITER.match(f"=== {name} ===")
            out["references"].append((int(m.group(2)), m.group(3), body))
    return out
