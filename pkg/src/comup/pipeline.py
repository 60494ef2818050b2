"""End-to-end update pipeline: generate candidates, rank, pick top-1."""

from __future__ import annotations

from dataclasses import dataclass

from .augment import generate_candidates
from .errors import PipelineError
from .rank import DualEncoderRanker, rank_candidates


@dataclass
class UpdateResult:
    id: str
    final_comment: str
    # audit trail: every deduplicated candidate with its score (None when
    # no ranking was needed) and provenance
    ranked: list[dict]


def run_update(sample, strategies, backend, cache, index, corpus_by_id,
               provider, model: DualEncoderRanker | None,
               seed: int | None = None) -> UpdateResult:
    """Generate one candidate per strategy, rank them with the trained
    ranker, and return the top-scored candidate plus the full ranked list."""
    candidates = generate_candidates(
        sample, strategies, backend, cache, index, corpus_by_id, provider,
        seed=seed,
    )
    if not candidates:
        raise PipelineError(f"sample {sample.id!r}: no usable candidates")

    if len(candidates) == 1:
        top = candidates[0]
        ranked = [{"text": top.text, "score": None, **top.provenance}]
        return UpdateResult(id=sample.id, final_comment=top.text, ranked=ranked)

    if model is None:
        raise PipelineError(
            f"sample {sample.id!r}: {len(candidates)} candidates but no "
            "ranker checkpoint configured"
        )
    scored = rank_candidates(sample, candidates, model, provider)
    ranked = [
        {"text": cand.text, "score": value, **cand.provenance}
        for cand, value in scored
    ]
    return UpdateResult(
        id=sample.id, final_comment=scored[0][0].text, ranked=ranked
    )
