"""Walkthrough: training the dual-encoder ranker on a small separable
fixture and using it to pick the best candidate comment.

The fixture is learnable by construction: the code change inserts a
marker word and the positive comment inserts the same word, so the
cross-attention between the code-change and comment-change sequences
carries real signal. Takes ~30 s on a laptop CPU.

Run:  python3 demos/04_train_and_rank.py
"""

import random

from comup.augment import AugmentedGroup, CandidateComment
from comup.rank import RankerConfig, rank_candidates, random_rank, train
from comup.tokenize import HashEmbeddingProvider

provider = HashEmbeddingProvider(dimension=24, seed=9)
MARKERS = ["alpha", "bravo", "charlie", "delta", "echo", "foxtrot",
           "golf", "hotel"]


def make_group(i):
    rng = random.Random(i)
    marker = MARKERS[i % len(MARKERS)]
    others = rng.sample([m for m in MARKERS if m != marker], 3)
    return AugmentedGroup(
        id=f"g{i:04d}",
        old_code="int f ( ) { return a ; }",
        old_comment="does the thing",
        new_code=f"int f ( ) {{ return {marker} ; }}",
        positive=f"does the thing {marker}",
        negatives=tuple(
            CandidateComment(text=f"does the thing {o}", model_id="demo",
                             shots=k, temperature=0.2, label="negative")
            for k, o in enumerate(others)
        ),
    )


train_groups = [make_group(i) for i in range(200)]
val_groups = [make_group(1000 + i) for i in range(20)]

config = RankerConfig(
    embed_dim=provider.dimension + 4, d_model=32, attention_heads=4,
    ffn_dim=64, proj_dim=16, epochs=20, learning_rate=1e-4,
    checkpoint_every=1000, seed=42,
)
model, history = train(train_groups, val_groups, config, provider)
for record in history:
    print(f"  {record.instances:5d} instances  train {record.train_loss:.4f}"
          f"  val {record.val_loss:.4f}")

correct = rand_correct = 0
for i, group in enumerate(val_groups):
    candidates = [group.positive] + [n.text for n in group.negatives]
    random.Random(i).shuffle(candidates)
    ranked = rank_candidates(group.context_sample, candidates, model, provider)
    correct += ranked[0][0] == group.positive
    # decorrelate from the shuffle above, which also used seed i
    rand_correct += random_rank(candidates, seed=9999 - i)[0] == group.positive

n = len(val_groups)
print(f"\ntrained top-1 accuracy: {correct / n:.2f}")
print(f"random  top-1 accuracy: {rand_correct / n:.2f}")
