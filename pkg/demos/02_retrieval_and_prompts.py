"""Walkthrough: embedding-similarity retrieval and k-shot prompt
construction.

Run:  python3 demos/02_retrieval_and_prompts.py
"""

from comup.data import CommentUpdateSample
from comup.prompt import PromptStrategy, build_update_prompt
from comup.retrieve import build_index, top_k_similar
from comup.tokenize import HashEmbeddingProvider

provider = HashEmbeddingProvider(dimension=24, seed=9)

corpus = [
    CommentUpdateSample(
        id=f"demo{i}",
        old_code=f"int get{name} ( ) {{ return {name.lower()} ; }}",
        old_comment=f"returns the {name.lower()}",
        new_code=f"long get{name} ( ) {{ return {name.lower()} ; }}",
        new_comment=f"returns the {name.lower()} as a long",
    )
    for i, name in enumerate(["Count", "Size", "Total", "Index", "Offset"])
]

index = build_index(corpus, provider)
query = corpus[0]
neighbors = top_k_similar(index, query.new_code, 3, provider,
                          exclude_id=query.id)
print("nearest neighbors of", query.id, "->", neighbors)
print()

# Demonstrations go most-similar-last so the closest example sits
# nearest the query in the prompt.
by_id = {s.id: s for s in corpus}
demos = [by_id[i] for i in reversed(neighbors)]
strategy = PromptStrategy(shots=3, temperature=0.2, model_id="demo-model")
prompt = build_update_prompt(query, demos, strategy)
print(prompt)
