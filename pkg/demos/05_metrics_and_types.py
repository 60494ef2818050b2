"""Walkthrough: the evaluation metrics and the update-type taxonomy.

Run:  python3 demos/05_metrics_and_types.py
"""

from comup.data import CommentUpdateSample
from comup.metrics import (
    accuracy,
    aed,
    bleu4,
    classify_update_type,
    evaluate_corpus,
    meteor,
    red,
    rouge_l_f1,
)
from comup.tokenize import HashEmbeddingProvider

provider = HashEmbeddingProvider(dimension=24, seed=9)

gt = "returns the user count as a long"
old = "returns the user count"
for candidate in (
    gt,                                      # exact
    "```java\nReturns the userCount as a long\n```",  # formatting noise
    "returns the user total as a long",      # one word off
    old,                                     # unchanged
):
    print(f"candidate: {candidate!r}")
    print(f"  accuracy {accuracy(candidate, gt)}  "
          f"aed {aed(candidate, gt)}  "
          f"red {red(candidate, gt, old)}  "
          f"bleu4 {bleu4(candidate, gt):.3f}  "
          f"meteor {meteor(candidate, gt):.3f}  "
          f"rougeL {rouge_l_f1(candidate, gt):.3f}")
print()

# Update types cross source (is the inserted comment text traceable to
# tokens the code change inserted?) with change size.
samples = [
    CommentUpdateSample(id="a", old_code="List<K> get ( )",
                        new_code="Map<K> get ( )",
                        old_comment="returns the list",
                        new_comment="returns the map"),
    CommentUpdateSample(id="b", old_code="int getFoo ( )",
                        new_code="int getBar ( )",
                        old_comment="calls getFoo",
                        new_comment="calls getBar"),
    CommentUpdateSample(id="c", old_code="int f ( ) { return n ; }",
                        new_code="int f ( ) { return n + 1 ; }",
                        old_comment="returns the item count",
                        new_comment="completely different sentence rewrite"),
]
for sample in samples:
    utype = classify_update_type(sample)
    print(f"{sample.id}: {utype.source.value} / {utype.count.value}")
print()

# Corpus-level report with per-type accuracy crosstab.
predictions = {s.id: s.new_comment for s in samples}
report = evaluate_corpus(predictions, samples, provider)
for line in report.summary_lines():
    print(line)
