"""Walkthrough: the complete update-then-rank pipeline driven through the
command-line interface, offline, in a temporary directory.

Steps: build a fixture corpus and prompt-keyed mock replies, then run
augment -> train -> update -> evaluate and show the artifacts.

Run:  python3 demos/06_full_pipeline_cli.py
"""

import json
import re
import tempfile
from pathlib import Path

from comup import cli
from comup.data import CommentUpdateSample, save_dataset
from comup.prompt import PromptStrategy, build_update_prompt
from comup.retrieve import build_index, top_k_similar
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

strategies = [PromptStrategy(shots=k, temperature=0.2, model_id="demo-model")
              for k in (0, 1)]


def reply_for(prompt):
    """Zero-shot answers correctly, one-shot drifts by one word."""
    marker = re.findall(r"return (\w+) ;", prompt)[-1]
    if prompt.count("Here is an example of a comment update:") == 0:
        return f"does the thing {marker}"
    wrong = WORDS[(WORDS.index(marker) + 1) % len(WORDS)]
    return f"does the thing {wrong}"


with tempfile.TemporaryDirectory() as tmp:
    tmp = Path(tmp)
    dataset = tmp / "dataset.jsonl"
    save_dataset(corpus, dataset)

    # Precompute every prompt the pipeline will issue so the mock
    # backend can serve the whole run from a fixture file.
    index = build_index(corpus, provider)
    by_id = {s.id: s for s in corpus}
    fixtures = tmp / "fixtures.jsonl"
    with open(fixtures, "w", encoding="utf-8") as fh:
        for sample in corpus:
            for strategy in strategies:
                demo_ids = top_k_similar(index, sample.new_code,
                                         strategy.shots, provider,
                                         exclude_id=sample.id)
                prompt = build_update_prompt(
                    sample, [by_id[i] for i in reversed(demo_ids)], strategy)
                fh.write(json.dumps({"model_id": strategy.model_id,
                                     "prompt": prompt,
                                     "response": reply_for(prompt)}) + "\n")

    config = tmp / "config.json"
    config.write_text(json.dumps({
        "provider": {"provider": "stub", "dimension": 24, "seed": 9},
        "backend": {"kind": "mock", "fixtures": str(fixtures)},
        "paths": {"cache": str(tmp / "cache")},
        "strategies": {"shots": [0, 1], "temperature": 0.2,
                       "models": ["demo-model"]},
        "ranker": {"embed_dim": 28, "d_model": 32, "attention_heads": 4,
                   "ffn_dim": 64, "proj_dim": 16, "epochs": 5,
                   "checkpoint_every": 30},
        "seed": 42,
    }))

    groups = tmp / "groups.jsonl"
    checkpoint = tmp / "ranker.bin"
    predictions = tmp / "predictions.jsonl"

    for argv in (
        ["augment", "--config", str(config), "--dataset", str(dataset),
         "--out", str(groups)],
        ["train", "--config", str(config), "--groups", str(groups),
         "--val", str(groups), "--out", str(checkpoint)],
        ["update", "--config", str(config), "--dataset", str(dataset),
         "--checkpoint", str(checkpoint), "--out", str(predictions)],
        ["evaluate", "--config", str(config), "--pred", str(predictions),
         "--gold", str(dataset)],
    ):
        print(f"$ comup {' '.join(argv[:1])} ...")
        assert cli.main(argv) == 0
        print()

    print("one prediction record:")
    first = json.loads(predictions.read_text().splitlines()[0])
    print(json.dumps(first, indent=2))
