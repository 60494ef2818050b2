"""Ranking training-set construction: candidate generation, labeling,
and one-positive-plus-N-negatives groups."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, replace
from pathlib import Path

from .data import CommentUpdateSample
from .errors import ComupError, EmptyResponseError, TransportError, ValidationError
from .llm import CompletionRequest, cached_complete
from .metrics import accuracy, protocol_tokens
from .prompt import PromptStrategy, build_update_prompt, normalize_llm_response
from .retrieve import top_k_similar

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CandidateComment:
    text: str
    model_id: str
    shots: int
    temperature: float
    label: str | None = None  # "positive" / "negative" once ground truth known

    def __post_init__(self):
        if not self.text:
            raise ValidationError("candidate text must be non-empty")

    @property
    def provenance(self) -> dict:
        return {
            "model_id": self.model_id,
            "shots": self.shots,
            "temperature": self.temperature,
        }


@dataclass(frozen=True)
class AugmentedGroup:
    """One positive (the ground truth) plus >=1 distinct negatives sharing
    the same old/new code and old comment."""

    id: str
    old_code: str
    old_comment: str
    new_code: str
    positive: str
    negatives: tuple[CandidateComment, ...]

    def __post_init__(self):
        if not self.negatives:
            raise ValidationError(f"group {self.id!r} has no negatives")
        keys = set()
        for neg in self.negatives:
            if accuracy(neg.text, self.positive) == 1:
                raise ValidationError(
                    f"group {self.id!r}: negative matches the positive under "
                    "the token-matching protocol"
                )
            key = tuple(protocol_tokens(neg.text))
            if key in keys:
                raise ValidationError(f"group {self.id!r}: duplicate negatives")
            keys.add(key)

    @property
    def context_sample(self) -> CommentUpdateSample:
        return CommentUpdateSample(
            id=self.id,
            old_code=self.old_code,
            old_comment=self.old_comment,
            new_code=self.new_code,
            new_comment=self.positive,
        )


def label_candidate(candidate: CandidateComment, ground_truth: str) -> str:
    """'positive' iff the candidate matches ground truth under the
    token-matching protocol."""
    return "positive" if accuracy(candidate.text, ground_truth) == 1 else "negative"


def generate_candidates(sample, strategies, backend, cache, index, corpus_by_id,
                        provider, seed: int | None = None) -> list[CandidateComment]:
    """One normalized candidate per strategy, deduplicated under the
    protocol's normalized token sequence. The query sample is never used
    as its own demonstration."""
    candidates: list[CandidateComment] = []
    seen: set[tuple[str, ...]] = set()
    errors: list[str] = []
    for strategy in strategies:
        demo_ids = top_k_similar(
            index, sample.new_code, strategy.shots, provider,
            exclude_id=sample.id,
        )
        # most similar last, nearest the query
        demos = [corpus_by_id[i] for i in reversed(demo_ids)]
        prompt = build_update_prompt(sample, demos, strategy)
        req = CompletionRequest(
            model_id=strategy.model_id,
            prompt=prompt,
            temperature=strategy.temperature,
            seed=seed,
        )
        try:
            raw = cached_complete(req, backend, cache)
            text = normalize_llm_response(raw)
        except (TransportError, EmptyResponseError) as exc:
            errors.append(f"{strategy.provenance}: {exc}")
            continue
        key = tuple(protocol_tokens(text))
        if key in seen:
            continue
        seen.add(key)
        candidates.append(CandidateComment(
            text=text,
            model_id=strategy.model_id,
            shots=strategy.shots,
            temperature=strategy.temperature,
        ))
    if not candidates and errors:
        raise TransportError(
            "all strategies failed for sample "
            f"{sample.id!r}: {'; '.join(errors)}"
        )
    return candidates


def build_group(sample, candidates) -> AugmentedGroup | None:
    """Form a group with the ground truth as positive; None when no
    candidate survives as a negative (the sample is discarded)."""
    if sample.new_comment is None:
        raise ValidationError(f"sample {sample.id!r} has no ground-truth comment")
    negatives = []
    for cand in candidates:
        label = label_candidate(cand, sample.new_comment)
        if label == "negative":
            negatives.append(replace(cand, label="negative"))
    if not negatives:
        return None
    return AugmentedGroup(
        id=sample.id,
        old_code=sample.old_code,
        old_comment=sample.old_comment,
        new_code=sample.new_code,
        positive=sample.new_comment,
        negatives=tuple(negatives),
    )


@dataclass
class AugmentSummary:
    samples_in: int = 0
    groups_out: int = 0
    discarded: int = 0
    discarded_ids: list[str] | None = None


def augment_dataset(dataset, strategies, backend, cache, index, provider,
                    seed: int | None = None):
    """Yield groups for every sample with ground truth; the summary object
    is filled in as the generator is consumed."""
    summary = AugmentSummary(discarded_ids=[])
    corpus_by_id = {s.id: s for s in dataset}

    def generator():
        for sample in dataset:
            summary.samples_in += 1
            try:
                candidates = generate_candidates(
                    sample, strategies, backend, cache, index, corpus_by_id,
                    provider, seed=seed,
                )
            except ComupError as exc:
                raise type(exc)(f"sample {sample.id!r}: {exc}") from exc
            group = build_group(sample, candidates)
            if group is None:
                summary.discarded += 1
                summary.discarded_ids.append(sample.id)
                log.info("sample %s discarded: no negatives survived", sample.id)
            else:
                summary.groups_out += 1
                yield group

    return generator(), summary


# --- group file persistence -------------------------------------------------

def group_to_record(group: AugmentedGroup) -> dict:
    return {
        "id": group.id,
        "old_code": group.old_code,
        "old_comment": group.old_comment,
        "new_code": group.new_code,
        "positive": group.positive,
        "negatives": [
            {
                "text": n.text,
                "model_id": n.model_id,
                "shots": n.shots,
                "temperature": n.temperature,
            }
            for n in group.negatives
        ],
    }


def save_groups(groups, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for group in groups:
            fh.write(json.dumps(group_to_record(group), ensure_ascii=False) + "\n")


def load_groups(path: str | Path) -> list[AugmentedGroup]:
    """Load groups; invariants are re-checked by the AugmentedGroup
    constructor."""
    groups = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                group = AugmentedGroup(
                    id=rec["id"],
                    old_code=rec["old_code"],
                    old_comment=rec["old_comment"],
                    new_code=rec["new_code"],
                    positive=rec["positive"],
                    negatives=tuple(
                        CandidateComment(
                            text=n["text"],
                            model_id=n["model_id"],
                            shots=n["shots"],
                            temperature=n["temperature"],
                            label="negative",
                        )
                        for n in rec["negatives"]
                    ),
                )
            except (ValueError, KeyError) as exc:
                raise ValidationError(f"{path}:{lineno}: bad group record: {exc}") from exc
            groups.append(group)
    return groups
