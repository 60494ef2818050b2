"""Walkthrough: generating candidate comments under several prompt
strategies and labeling them into contrastive training groups.

A deterministic mock backend stands in for a hosted LLM, so the demo
runs offline; its replies are derived from the prompt text.

Run:  python3 demos/03_augment_groups.py
"""

import re
import tempfile
from pathlib import Path

from comup.augment import augment_dataset, save_groups
from comup.data import CommentUpdateSample
from comup.llm import MockBackend, ResponseCache
from comup.prompt import PromptStrategy
from comup.retrieve import build_index
from comup.tokenize import HashEmbeddingProvider

provider = HashEmbeddingProvider(dimension=24, seed=9)

WORDS = ["alpha", "bravo", "charlie", "delta", "echo", "foxtrot"]
corpus = [
    CommentUpdateSample(
        id=f"demo{i}",
        old_code="int f ( ) { return a ; }",
        old_comment="does the thing",
        new_code=f"int f ( ) {{ return {w} ; }}",
        new_comment=f"does the thing {w}",
    )
    for i, w in enumerate(WORDS)
]


def fake_llm(req):
    """Zero-shot gets it right; the other strategies drift."""
    marker = re.findall(r"return (\w+) ;", req.prompt)[-1]
    shots = req.prompt.count("Here is an example of a comment update:")
    if shots == 0:
        return f"does the thing {marker}"
    wrong = WORDS[(WORDS.index(marker) + shots) % len(WORDS)]
    return f"does the thing {wrong}"


strategies = [PromptStrategy(shots=k, temperature=0.2, model_id="demo-model")
              for k in (0, 1, 3, 5)]
backend = MockBackend(responder=fake_llm)

with tempfile.TemporaryDirectory() as tmp:
    cache = ResponseCache(Path(tmp) / "responses.jsonl")
    index = build_index(corpus, provider)
    groups_iter, summary = augment_dataset(corpus, strategies, backend, cache,
                                           index, provider)
    groups = list(groups_iter)
    out = Path(tmp) / "groups.jsonl"
    save_groups(groups, out)

    print(f"samples in: {summary.samples_in}  groups out: "
          f"{summary.groups_out}  discarded: {summary.discarded}")
    for group in groups[:2]:
        print(f"\ngroup {group.id}:")
        print(f"  positive: {group.positive!r}")
        for neg in group.negatives:
            print(f"  negative ({neg.shots}-shot): {neg.text!r}")
