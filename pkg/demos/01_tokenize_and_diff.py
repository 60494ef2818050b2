"""Walkthrough: subword tokenization, identifier splitting, and the
edit-token diff that feeds the ranker.

Run:  python3 demos/01_tokenize_and_diff.py
"""

from comup.flatten import embed_edit_tokens, token_diff
from comup.tokenize import (
    HashEmbeddingProvider,
    camel_case_split,
    detokenize,
    subword_tokenize,
)

provider = HashEmbeddingProvider(dimension=24, seed=9)

# Identifier splitting handles camel case, acronym runs and digit
# boundaries; this is the normalization behind the exact-match metric.
for identifier in ("getName", "HTTPServer2x", "parseJSONResponse"):
    print(f"{identifier:22s} -> {camel_case_split(identifier)}")
print()

# Subword tokenization is reversible: detokenize(tokenize(x)) == x.
line = "int getCount ( ) { return this.count ; }"
seq = subword_tokenize(line, provider)
print("tokens:", seq.tokens)
print("round trip ok:", detokenize(seq) == line)
print()

# The token-level diff produces a minimal edit script of
# (token, operation, origin) triplets; replacements decompose into
# deletes followed by inserts.
old = subword_tokenize("returns the list of users", provider).content_tokens
new = subword_tokenize("returns the map of users", provider).content_tokens
script = token_diff(old, new)
for tok in script:
    print(f"  {tok.op.value:6s} {tok.origin.value:3s} {tok.token!r}")

# Each edit token embeds as provider-vector + one-hot(op) + origin flag,
# so the matrix is provider.dimension + 4 wide.
matrix = embed_edit_tokens(script, provider)
print("embedded edit script shape:", matrix.shape)
