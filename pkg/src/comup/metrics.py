"""Evaluation metrics for updated comments, plus the update-type taxonomy.

All word-level metrics (Aed, Red, BLEU-4, METEOR, ROUGE-L) operate on
whitespace words after formatting has been stripped; the exact-match
Accuracy additionally camel-splits and lowercases tokens before
comparing.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum

from .errors import ContractError
from .stemming import porter_stem
from .textnorm import strip_formatting
from .tokenize import camel_case_split, sentence_embed


def words(text: str) -> list[str]:
    """Whitespace words of the formatting-stripped text."""
    return strip_formatting(text).split()


def protocol_tokens(text: str) -> list[str]:
    """Normalized tokens of the exact-match protocol: strip formatting,
    camel-split every word, lowercase."""
    toks = []
    for word in words(text):
        toks.extend(sub.lower() for sub in camel_case_split(word))
    return toks


def accuracy(c_up: str, c_gt: str) -> int:
    """1 iff the normalized token sequences match exactly, else 0."""
    return int(protocol_tokens(c_up) == protocol_tokens(c_gt))


def _levenshtein(a: list, b: list) -> int:
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, start=1):
        cur = [i]
        for j, y in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y)))
        prev = cur
    return prev[-1]


def aed(c_up: str, c_gt: str) -> int:
    """Word-level edit distance between updated comment and ground truth."""
    return _levenshtein(words(c_up), words(c_gt))


def red(c_up: str, c_gt: str, c_old: str) -> float | None:
    """Aed(c_up, c_gt) / Aed(c_old, c_gt); None when the denominator is 0
    (the sample is red-undefined and excluded from averages)."""
    denom = aed(c_old, c_gt)
    if denom == 0:
        return None
    return aed(c_up, c_gt) / denom


def bleu4(c_up: str, c_gt: str) -> float:
    """Sentence-level BLEU with n<=4, brevity penalty, and add-one
    smoothing on the n>1 precisions."""
    hyp, ref = words(c_up), words(c_gt)
    if not hyp or not ref:
        return 0.0
    log_sum = 0.0
    for n in range(1, 5):
        hyp_ngrams = Counter(tuple(hyp[i:i + n]) for i in range(len(hyp) - n + 1))
        ref_ngrams = Counter(tuple(ref[i:i + n]) for i in range(len(ref) - n + 1))
        overlap = sum((hyp_ngrams & ref_ngrams).values())
        total = sum(hyp_ngrams.values())
        if n == 1:
            if overlap == 0 or total == 0:
                return 0.0
            p = overlap / total
        else:
            p = (overlap + 1) / (total + 1)
        log_sum += math.log(p) / 4
    bp = 1.0 if len(hyp) > len(ref) else math.exp(1 - len(ref) / max(len(hyp), 1))
    return bp * math.exp(log_sum)


def _meteor_align(hyp: list[str], ref: list[str]):
    """Two-stage unigram alignment (exact, then stems); returns the list
    of (hyp_index, ref_index) matches in hyp order."""
    matches: list[tuple[int, int]] = []
    used_ref: set[int] = set()
    matched_hyp: set[int] = set()
    for key in (lambda w: w, porter_stem):
        hyp_keys = [key(w) for w in hyp]
        ref_keys = [key(w) for w in ref]
        for i, hk in enumerate(hyp_keys):
            if i in matched_hyp:
                continue
            for j, rk in enumerate(ref_keys):
                if j not in used_ref and hk == rk:
                    matches.append((i, j))
                    used_ref.add(j)
                    matched_hyp.add(i)
                    break
    matches.sort()
    return matches


def _chunk_count(matches) -> int:
    chunks = 0
    prev = None
    for hi, ri in matches:
        if prev is None or hi != prev[0] + 1 or ri != prev[1] + 1:
            chunks += 1
        prev = (hi, ri)
    return chunks


def meteor(c_up: str, c_gt: str, synonyms=None) -> float:
    """Unigram-alignment metric: F_mean = 10PR/(R+9P) with a fragmentation
    penalty 0.5*(chunks/matches)^3.

    ``synonyms``: optional callable word -> synonym-set for a third match
    stage; off by default (no external lexical resource shipped).
    """
    hyp, ref = words(c_up), words(c_gt)
    if not hyp or not ref:
        return 0.0
    matches = _meteor_align(hyp, ref)
    if synonyms is not None:
        matched_hyp = {i for i, _ in matches}
        used_ref = {j for _, j in matches}
        for i, w in enumerate(hyp):
            if i in matched_hyp:
                continue
            syns = {s.lower() for s in synonyms(w)} | {w.lower()}
            for j, r in enumerate(ref):
                if j not in used_ref and r.lower() in syns:
                    matches.append((i, j))
                    used_ref.add(j)
                    break
        matches.sort()
    m = len(matches)
    if m == 0:
        return 0.0
    precision = m / len(hyp)
    recall = m / len(ref)
    f_mean = 10 * precision * recall / (recall + 9 * precision)
    penalty = 0.5 * (_chunk_count(matches) / m) ** 3
    return f_mean * (1 - penalty)


def _lcs_len(a: list, b: list) -> int:
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[-1]))
        prev = cur
    return prev[-1]


def rouge_l_f1(c_up: str, c_gt: str) -> float:
    """F1 over the word-level longest common subsequence."""
    hyp, ref = words(c_up), words(c_gt)
    if not hyp or not ref:
        return 0.0
    lcs = _lcs_len(hyp, ref)
    if lcs == 0:
        return 0.0
    p = lcs / len(hyp)
    r = lcs / len(ref)
    return 2 * p * r / (p + r)


def _cosine(a, b) -> float:
    import numpy as np  # noqa: PLC0415

    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def sentence_sim(c_up: str, c_gt: str, provider) -> float:
    """Cosine similarity of sentence embeddings."""
    return _cosine(sentence_embed(c_up, provider), sentence_embed(c_gt, provider))


# --- update-type taxonomy ---------------------------------------------------

class SourceType(str, Enum):
    CODE_IND = "CodeInd"
    NON_CODE_IND = "NonCodeInd"


class CountType(str, Enum):
    SINGLE_TOKEN = "SingleToken"
    SINGLE_SUB_TOKEN = "SingleSubToken"
    MULTI_TOKENS = "MultiTokens"


@dataclass(frozen=True)
class UpdateType:
    source: SourceType
    count: CountType


def _word_opcodes(old: list[str], new: list[str]):
    from difflib import SequenceMatcher  # noqa: PLC0415

    return SequenceMatcher(a=old, b=new, autojunk=False).get_opcodes()


def _code_subtokens(word: str) -> set[str]:
    """Lowercased camel sub-tokens of the alphanumeric runs of a word."""
    subs = set()
    run = []
    for ch in word + "\x00":
        if ch.isalnum():
            run.append(ch)
        elif run:
            for sub in camel_case_split("".join(run)):
                subs.add(sub.lower())
            run = []
    return subs


def classify_update_type(sample) -> UpdateType:
    """Classify a ground-truth comment update along the source and
    granularity axes.

    COUNT: number of changed words between old and new comment; a single
    changed word whose difference is confined to one camel sub-token is
    SingleSubToken. SOURCE: CodeInd iff every inserted comment sub-token
    occurs among sub-tokens inserted by the code change.
    """
    if sample.new_comment is None:
        raise ContractError(f"sample {sample.id!r} has no ground-truth comment")
    old_words = words(sample.old_comment)
    new_words = words(sample.new_comment)
    opcodes = [op for op in _word_opcodes(old_words, new_words) if op[0] != "equal"]
    if not opcodes:
        raise ContractError(
            f"sample {sample.id!r}: comment unchanged after normalization"
        )

    changed = sum(max(i2 - i1, j2 - j1) for _, i1, i2, j1, j2 in opcodes)
    if changed >= 2:
        count = CountType.MULTI_TOKENS
    else:
        tag, i1, i2, j1, j2 = opcodes[0]
        count = CountType.SINGLE_TOKEN
        if tag == "replace":
            old_subs = camel_case_split(old_words[i1])
            new_subs = camel_case_split(new_words[j1])
            if (len(old_subs) == len(new_subs) and len(old_subs) >= 2
                    and sum(a != b for a, b in zip(old_subs, new_subs)) == 1):
                count = CountType.SINGLE_SUB_TOKEN

    inserted_comment_subs: set[str] = set()
    for tag, i1, i2, j1, j2 in opcodes:
        for w in new_words[j1:j2]:
            inserted_comment_subs |= _code_subtokens(w)

    inserted_code_subs: set[str] = set()
    old_code_words = sample.old_code.split()
    new_code_words = sample.new_code.split()
    for tag, i1, i2, j1, j2 in _word_opcodes(old_code_words, new_code_words):
        if tag in ("replace", "insert"):
            for w in new_code_words[j1:j2]:
                inserted_code_subs |= _code_subtokens(w)

    if inserted_comment_subs <= inserted_code_subs:
        source = SourceType.CODE_IND
    else:
        source = SourceType.NON_CODE_IND
    return UpdateType(source=source, count=count)


# --- corpus-level reporting -------------------------------------------------

@dataclass
class MetricRow:
    id: str
    accuracy: int
    aed: int
    red: float | None
    bleu4: float
    meteor: float
    f1: float
    sentence_sim: float
    update_type: UpdateType | None = None


@dataclass
class MetricReport:
    rows: list[MetricRow]
    averages: dict[str, float]
    red_undefined: int
    crosstab: dict[tuple[str, str], dict[str, float]] = field(default_factory=dict)

    def summary_lines(self) -> list[str]:
        lines = [
            f"samples: {len(self.rows)}",
            *(f"{name}: {value:.4f}" for name, value in self.averages.items()),
            f"red-undefined: {self.red_undefined}",
        ]
        for (src, cnt), cell in sorted(self.crosstab.items()):
            lines.append(
                f"type {src}/{cnt}: n={cell['n']} accuracy={cell['accuracy']:.4f}"
            )
        return lines

    def crosstab_table(self, sep: str = "\t") -> str:
        header = sep.join(["source", "count", "n", "correct", "accuracy"])
        body = [
            sep.join([src, cnt, str(cell["n"]), str(cell["correct"]),
                      f"{cell['accuracy']:.4f}"])
            for (src, cnt), cell in sorted(self.crosstab.items())
        ]
        return "\n".join([header, *body])


def evaluate_corpus(predictions: dict[str, str], gold, provider) -> MetricReport:
    """Score predictions against gold samples; averages are arithmetic
    means over rows (Red over rows where it is defined)."""
    gold_by_id = {s.id: s for s in gold}
    missing = sorted(set(gold_by_id) ^ set(predictions))
    if missing:
        raise ContractError(f"prediction/gold id mismatch: {', '.join(missing)}")

    rows = []
    for sid in sorted(gold_by_id):
        sample = gold_by_id[sid]
        pred = predictions[sid]
        gt = sample.new_comment
        if gt is None:
            raise ContractError(f"gold sample {sid!r} has no ground-truth comment")
        try:
            utype = classify_update_type(sample)
        except ContractError:
            utype = None
        rows.append(MetricRow(
            id=sid,
            accuracy=accuracy(pred, gt),
            aed=aed(pred, gt),
            red=red(pred, gt, sample.old_comment),
            bleu4=bleu4(pred, gt),
            meteor=meteor(pred, gt),
            f1=rouge_l_f1(pred, gt),
            sentence_sim=sentence_sim(pred, gt, provider),
            update_type=utype,
        ))

    def mean(values):
        vals = list(values)
        return sum(vals) / len(vals) if vals else 0.0

    red_rows = [r.red for r in rows if r.red is not None]
    averages = {
        "accuracy": mean(r.accuracy for r in rows),
        "aed": mean(r.aed for r in rows),
        "red": mean(red_rows),
        "bleu4": mean(r.bleu4 for r in rows),
        "meteor": mean(r.meteor for r in rows),
        "f1": mean(r.f1 for r in rows),
        "sentence_sim": mean(r.sentence_sim for r in rows),
    }

    crosstab: dict[tuple[str, str], dict[str, float]] = {}
    for row in rows:
        if row.update_type is None:
            continue
        key = (row.update_type.source.value, row.update_type.count.value)
        cell = crosstab.setdefault(key, {"n": 0, "correct": 0, "accuracy": 0.0})
        cell["n"] += 1
        cell["correct"] += row.accuracy
    for cell in crosstab.values():
        cell["accuracy"] = cell["correct"] / cell["n"]

    return MetricReport(
        rows=rows,
        averages=averages,
        red_undefined=sum(1 for r in rows if r.red is None),
        crosstab=crosstab,
    )
