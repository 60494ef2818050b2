"""Token-level edit scripts and sample flattening.

A sample's four texts (old/new code, old comment, candidate comment)
become two sequences of edit tokens: the code change and the comment
change. Each edit token carries the subword, an edit operation
(equal / insert / delete) and an origin flag (old / new); its embedding
is the token embedding concatenated with a 3-way one-hot for the
operation and a single 0/1 origin flag.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import MalformedSampleError
from .tokenize import EmbeddingProvider, TokenSequence, embed_tokens, subword_tokenize

log = logging.getLogger(__name__)

DEFAULT_MAX_EDIT_TOKENS = 512


class EditOp(str, Enum):
    EQUAL = "equal"
    INSERT = "insert"
    DELETE = "delete"


class Origin(str, Enum):
    OLD = "old"
    NEW = "new"


_OP_ONE_HOT = {
    EditOp.EQUAL: (1.0, 0.0, 0.0),
    EditOp.INSERT: (0.0, 1.0, 0.0),
    EditOp.DELETE: (0.0, 0.0, 1.0),
}
_ORIGIN_FLAG = {Origin.OLD: 0.0, Origin.NEW: 1.0}


@dataclass(frozen=True)
class EditToken:
    token: str
    op: EditOp
    origin: Origin

    def __post_init__(self):
        if self.op is EditOp.INSERT and self.origin is not Origin.NEW:
            raise ValueError("insert tokens must originate from the new side")
        if self.op is EditOp.DELETE and self.origin is not Origin.OLD:
            raise ValueError("delete tokens must originate from the old side")


@dataclass(frozen=True)
class FlattenedPair:
    """The two edit-token sequences of one (sample, candidate) pair."""

    code_change: tuple[EditToken, ...]
    comment_change: tuple[EditToken, ...]


def _lcs_table(old: tuple[str, ...], new: tuple[str, ...]) -> np.ndarray:
    n, m = len(old), len(new)
    table = np.zeros((n + 1, m + 1), dtype=np.int32)
    for i in range(n - 1, -1, -1):
        row, below = table[i], table[i + 1]
        for j in range(m - 1, -1, -1):
            if old[i] == new[j]:
                row[j] = below[j + 1] + 1
            else:
                row[j] = max(below[j], row[j + 1])
    return table


def token_diff(old_tokens: TokenSequence, new_tokens: TokenSequence) -> list[EditToken]:
    """Alignment-ordered edit script between two token sequences.

    Uses an LCS dynamic program, so the number of non-equal operations is
    minimal. Replacements are decomposed into delete(s) followed by
    insert(s). Equal tokens are emitted once, with origin=old.
    """
    old = tuple(old_tokens)
    new = tuple(new_tokens)
    table = _lcs_table(old, new)
    script: list[EditToken] = []
    i = j = 0
    while i < len(old) and j < len(new):
        if old[i] == new[j]:
            script.append(EditToken(old[i], EditOp.EQUAL, Origin.OLD))
            i += 1
            j += 1
        elif table[i + 1][j] >= table[i][j + 1]:
            script.append(EditToken(old[i], EditOp.DELETE, Origin.OLD))
            i += 1
        else:
            script.append(EditToken(new[j], EditOp.INSERT, Origin.NEW))
            j += 1
    for k in range(i, len(old)):
        script.append(EditToken(old[k], EditOp.DELETE, Origin.OLD))
    for k in range(j, len(new)):
        script.append(EditToken(new[k], EditOp.INSERT, Origin.NEW))
    return script


def old_side(script) -> list[str]:
    """Tokens of the old sequence, reconstructed from the script."""
    return [e.token for e in script if e.op in (EditOp.EQUAL, EditOp.DELETE)]


def new_side(script) -> list[str]:
    """Tokens of the new sequence, reconstructed from the script."""
    return [e.token for e in script if e.op in (EditOp.EQUAL, EditOp.INSERT)]


def flatten_sample(sample, candidate, provider: EmbeddingProvider,
                   max_len: int = DEFAULT_MAX_EDIT_TOKENS) -> FlattenedPair:
    """Diff a sample's code and comment into a FlattenedPair.

    ``candidate`` may be a CandidateComment or a plain string (the
    candidate updated comment).
    """
    text = candidate if isinstance(candidate, str) else candidate.text
    if not sample.old_code.strip() or not sample.old_comment.strip():
        raise MalformedSampleError(
            f"sample {getattr(sample, 'id', '?')} has empty old code or old comment"
        )
    if not text.strip():
        raise MalformedSampleError("candidate comment text is empty")
    code = token_diff(
        subword_tokenize(sample.old_code, provider),
        subword_tokenize(sample.new_code, provider),
    )
    comment = token_diff(
        subword_tokenize(sample.old_comment, provider),
        subword_tokenize(text, provider),
    )
    return FlattenedPair(
        code_change=tuple(_truncate(code, max_len, "code")),
        comment_change=tuple(_truncate(comment, max_len, "comment")),
    )


def _truncate(script: list[EditToken], max_len: int, which: str) -> list[EditToken]:
    if len(script) <= max_len:
        return script
    dropped = len(script) - max_len
    log.info("truncating %s change sequence: dropped %d tail tokens", which, dropped)
    return script[:max_len]


def embed_edit_tokens(seq, provider: EmbeddingProvider) -> np.ndarray:
    """Matrix of shape (len(seq), provider.dimension + 4).

    Row i = concat(token embedding, op one-hot, origin flag).
    """
    width = provider.dimension + 4
    if len(seq) == 0:
        return np.zeros((0, width), dtype=np.float32)
    token_rows = embed_tokens(
        TokenSequence(tuple(e.token for e in seq)), provider
    )
    # TokenSequence here is just a carrier; embed_tokens embeds every entry
    suffix = np.array(
        [(*_OP_ONE_HOT[e.op], _ORIGIN_FLAG[e.origin]) for e in seq],
        dtype=np.float32,
    )
    return np.concatenate([token_rows, suffix], axis=1)
