import random

import pytest

from comup.augment import AugmentedGroup, CandidateComment
from comup.data import CommentUpdateSample
from comup.tokenize import HashEmbeddingProvider

MARKERS = ["alpha", "bravo", "charlie", "delta", "echo", "foxtrot", "golf", "hotel"]


@pytest.fixture
def provider():
    return HashEmbeddingProvider(dimension=24, seed=9)


def make_sample(i, marker=None, with_gt=True):
    marker = marker or MARKERS[i % len(MARKERS)]
    return CommentUpdateSample(
        id=f"s{i:04d}",
        old_code="int f ( ) { return a ; }",
        old_comment="does the thing",
        new_code=f"int f ( ) {{ return {marker} ; }}",
        new_comment=f"does the thing {marker}" if with_gt else None,
    )


def make_marker_group(i, n_negatives=3, seed_offset=0):
    """Separable fixture group: the positive comment inserts the same
    marker word the code change inserts; negatives insert other markers."""
    rng = random.Random(i + seed_offset)
    marker = MARKERS[i % len(MARKERS)]
    others = [m for m in MARKERS if m != marker]
    negatives = tuple(
        CandidateComment(
            text=f"does the thing {o}",
            model_id="mock-model",
            shots=k,
            temperature=0.2,
            label="negative",
        )
        for k, o in enumerate(rng.sample(others, n_negatives))
    )
    return AugmentedGroup(
        id=f"g{i:04d}",
        old_code="int f ( ) { return a ; }",
        old_comment="does the thing",
        new_code=f"int f ( ) {{ return {marker} ; }}",
        positive=f"does the thing {marker}",
        negatives=negatives,
    )
