"""Prompt assembly and response normalization.

Template text lives in versioned resource files so rendered prompts are
bit-reproducible; the version id is part of every cache key and report.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

from .errors import ContractError, EmptyResponseError
from .textnorm import strip_formatting

PROMPT_VERSION = "v1"

DEFAULT_SHOTS = (0, 1, 3, 5)
DEFAULT_TEMPERATURE = 0.2


@dataclass(frozen=True)
class PromptStrategy:
    """One candidate-generation configuration."""

    shots: int
    temperature: float = DEFAULT_TEMPERATURE
    model_id: str = "mock-model"

    def __post_init__(self):
        if self.shots < 0:
            raise ContractError("shots must be non-negative")
        if not 0.0 <= self.temperature <= 1.0:
            raise ContractError("temperature must be in [0, 1]")

    @property
    def provenance(self) -> dict:
        return {
            "model_id": self.model_id,
            "shots": self.shots,
            "temperature": self.temperature,
        }


def _template(name: str) -> str:
    return (
        resources.files("comup.templates")
        .joinpath(f"{name}_{PROMPT_VERSION}.txt")
        .read_text(encoding="utf-8")
    )


def _render(template: str, **fields: str) -> str:
    # plain replacement, not str.format: method bodies contain braces
    for key, value in fields.items():
        template = template.replace("{" + key + "}", value)
    return template


def build_update_prompt(sample, demonstrations, strategy: PromptStrategy) -> str:
    """Render the comment-update prompt.

    ``demonstrations`` must contain exactly ``strategy.shots`` samples,
    ordered by ascending similarity (most similar last, nearest the query).
    """
    if len(demonstrations) != strategy.shots:
        raise ContractError(
            f"strategy requests {strategy.shots} shots but "
            f"{len(demonstrations)} demonstrations were given"
        )
    demo_block = ""
    if demonstrations:
        demo_template = _template("demonstration")
        demo_block = "".join(
            _render(
                demo_template,
                old_method=d.old_code,
                new_method=d.new_code,
                old_comment=d.old_comment,
                new_comment=d.new_comment or "",
            )
            for d in demonstrations
        )
    return _render(
        _template("update_prompt"),
        demonstrations=demo_block,
        old_method=sample.old_code,
        new_method=sample.new_code,
        old_comment=sample.old_comment,
    )


def build_self_rank_prompt(sample, candidates) -> str:
    """Render the judge prompt that asks an LLM to order candidates.

    Candidates are presented as "Expert 1".."Expert k" in the given order.
    """
    if len(candidates) < 2:
        raise ContractError("self-ranking needs at least 2 candidates")
    block = {
        f"Expert {i}": {"comment": c.text if hasattr(c, "text") else c}
        for i, c in enumerate(candidates, start=1)
    }
    return _render(
        _template("self_rank_prompt"),
        old_method=sample.old_code,
        new_method=sample.new_code,
        old_comment=sample.old_comment,
        candidates=json.dumps(block, ensure_ascii=False),
        k=str(len(candidates)),
    )


def normalize_llm_response(raw: str, extra_labels: tuple[str, ...] = ()) -> str:
    """Strip markdown fences, labels and quotes from a raw model reply."""
    text = strip_formatting(raw, extra_labels=extra_labels)
    if not text:
        raise EmptyResponseError("LLM response is empty after normalization")
    return text
