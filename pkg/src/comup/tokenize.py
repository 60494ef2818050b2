"""Subword tokenization and embedding providers.

Code and comments go through one uniform tokenizer so that downstream
diffing and ranking never care which kind of text they are looking at.
Two providers ship: a deterministic hash-based stub (no model downloads,
used by all tests) and an adapter for a pretrained bidirectional encoder
loaded from a local path.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, ProviderContractError

START_SENTINEL = "<s>"
END_SENTINEL = "</s>"
SPACE_MARKER = "Ġ"  # "Ġ", marks a token preceded by a single space


@dataclass(frozen=True)
class TokenSequence:
    """An ordered subword sequence including start/end sentinels."""

    tokens: tuple[str, ...]

    def __len__(self):
        return len(self.tokens)

    def __iter__(self):
        return iter(self.tokens)

    @property
    def content_tokens(self) -> tuple[str, ...]:
        """Tokens with the sentinels dropped."""
        return self.tokens[1:-1]


def camel_case_split(token: str) -> list[str]:
    """Split an identifier at camel-case and digit boundaries.

    Total and concatenation-preserving: ``"".join(camel_case_split(t)) == t``
    for every string. An uppercase run followed by a lowercase letter is
    treated as ACRONYM + Word ("HTTPServer" -> "HTTP", "Server").
    """
    if not token:
        return []
    pieces = []
    start = 0
    for i in range(1, len(token)):
        prev, cur = token[i - 1], token[i]
        boundary = False
        if prev.islower() and cur.isupper():
            boundary = True
        elif prev.isalpha() and cur.isdigit():
            boundary = True
        elif prev.isdigit() and cur.isalpha():
            boundary = True
        elif prev.isupper() and cur.islower():
            # ACRONYM + Word: split before the last uppercase of the run
            if i >= 2 and token[i - 2].isupper():
                pieces.append(token[start:i - 1])
                start = i - 1
        if boundary:
            pieces.append(token[start:i])
            start = i
    pieces.append(token[start:])
    return [p for p in pieces if p]


def _split_word_runs(chunk: str) -> list[str]:
    """Split a whitespace-free chunk into alphanumeric words and symbol runs."""
    runs = []
    start = 0
    for i in range(1, len(chunk)):
        if chunk[i].isalnum() != chunk[i - 1].isalnum():
            runs.append(chunk[start:i])
            start = i
    runs.append(chunk[start:])
    return runs


class EmbeddingProvider:
    """Deterministic mapping from tokens/texts to fixed-width vectors."""

    name: str
    dimension: int
    kind: str

    def tokenize(self, text: str) -> TokenSequence:
        raise NotImplementedError

    def token_vector(self, token: str) -> np.ndarray:
        raise NotImplementedError

    def sentence_vector(self, text: str) -> np.ndarray:
        raise NotImplementedError

    @property
    def identity(self) -> dict:
        """Stable identity fields recorded in persistent artifacts."""
        return {"name": self.name, "dimension": self.dimension}


class HashEmbeddingProvider(EmbeddingProvider):
    """Stub provider: each distinct string maps to a seeded pseudo-random
    unit vector via a 64-bit stable hash. Same (seed, input) always gives
    the same vector, across processes and platforms."""

    kind = "deterministic-stub"

    def __init__(self, dimension: int = 64, seed: int = 0):
        if dimension <= 0:
            raise ConfigurationError("embedding dimension must be positive")
        self.name = f"stub-{dimension}d"
        self.dimension = dimension
        self.seed = int(seed)

    def _vector_for(self, key: str) -> np.ndarray:
        digest = hashlib.blake2b(
            key.encode("utf-8"), digest_size=8,
            key=self.seed.to_bytes(8, "little", signed=False),
        ).digest()
        rng = np.random.Generator(np.random.PCG64(int.from_bytes(digest, "little")))
        vec = rng.standard_normal(self.dimension)
        norm = np.linalg.norm(vec)
        if norm == 0.0:  # unreachable for dimension >= 1 in practice
            vec[0] = 1.0
            norm = 1.0
        return (vec / norm).astype(np.float32)

    def tokenize(self, text: str) -> TokenSequence:
        tokens = [START_SENTINEL]
        i = 0
        pending_space = False
        while i < len(text):
            if text[i].isspace():
                j = i
                while j < len(text) and text[j].isspace():
                    j += 1
                run = text[i:j]
                if run == " ":
                    pending_space = True
                else:
                    # uncommon whitespace kept literally so round-trips hold
                    tokens.append(run)
                    pending_space = False
                i = j
                continue
            j = i
            while j < len(text) and not text[j].isspace():
                j += 1
            chunk = text[i:j]
            first = True
            for run in _split_word_runs(chunk):
                subs = camel_case_split(run) if run[0].isalnum() else [run]
                for sub in subs:
                    if first and pending_space:
                        tokens.append(SPACE_MARKER + sub)
                    else:
                        tokens.append(sub)
                    first = False
            pending_space = False
            i = j
        tokens.append(END_SENTINEL)
        return TokenSequence(tuple(tokens))

    def token_vector(self, token: str) -> np.ndarray:
        return self._vector_for("tok\x00" + token)

    def sentence_vector(self, text: str) -> np.ndarray:
        return self._vector_for("sent\x00" + text)

    @property
    def identity(self) -> dict:
        return {"name": self.name, "dimension": self.dimension, "seed": self.seed}


class PretrainedEncoderProvider(EmbeddingProvider):
    """Adapter for a pretrained bidirectional code/text encoder loaded from
    a local path. Token vectors come from the encoder's static input
    embedding table (context-free); sentence vectors are mean-pooled
    hidden states."""

    kind = "pretrained-encoder"

    def __init__(self, model_path: str, name: str | None = None):
        try:
            from transformers import AutoModel, AutoTokenizer  # noqa: PLC0415
        except ImportError as exc:
            raise ConfigurationError(
                "pretrained-encoder provider requires the 'transformers' package"
            ) from exc
        try:
            self._tokenizer = AutoTokenizer.from_pretrained(model_path)
            self._model = AutoModel.from_pretrained(model_path)
        except Exception as exc:
            raise ConfigurationError(
                f"pretrained-encoder provider could not load model at {model_path!r}"
            ) from exc
        self._model.eval()
        self.name = name or f"pretrained:{model_path}"
        self.dimension = int(self._model.config.hidden_size)

    def tokenize(self, text: str) -> TokenSequence:
        toks = self._tokenizer.tokenize(text)
        return TokenSequence((START_SENTINEL, *toks, END_SENTINEL))

    def token_vector(self, token: str) -> np.ndarray:
        import torch  # noqa: PLC0415

        idx = self._tokenizer.convert_tokens_to_ids(token)
        with torch.no_grad():
            vec = self._model.get_input_embeddings().weight[idx]
        return vec.cpu().numpy().astype(np.float32)

    def sentence_vector(self, text: str) -> np.ndarray:
        import torch  # noqa: PLC0415

        enc = self._tokenizer(text, return_tensors="pt", truncation=True)
        with torch.no_grad():
            hidden = self._model(**enc).last_hidden_state[0]
        return hidden.mean(dim=0).cpu().numpy().astype(np.float32)


def provider_from_config(config: dict) -> EmbeddingProvider:
    """Build a provider from a structured config mapping.

    Stub: {"provider": "stub", "dimension": int, "seed": int}
    Pretrained: {"provider": "pretrained", "model_path": str}
    """
    kind = config.get("provider")
    if kind == "stub":
        if "seed" not in config:
            raise ConfigurationError("stub provider config requires a fixed 'seed'")
        return HashEmbeddingProvider(
            dimension=int(config.get("dimension", 64)), seed=int(config["seed"])
        )
    if kind == "pretrained":
        if "model_path" not in config:
            raise ConfigurationError("pretrained provider config requires 'model_path'")
        return PretrainedEncoderProvider(config["model_path"], name=config.get("name"))
    raise ConfigurationError(f"unknown embedding provider {kind!r}")


def subword_tokenize(text: str, provider: EmbeddingProvider) -> TokenSequence:
    return provider.tokenize(text)


def detokenize(seq: TokenSequence) -> str:
    """Invert tokenization modulo leading/trailing whitespace."""
    parts = []
    for tok in seq:
        if tok in (START_SENTINEL, END_SENTINEL):
            continue
        if tok.startswith(SPACE_MARKER):
            parts.append(" " + tok[len(SPACE_MARKER):])
        else:
            parts.append(tok)
    return "".join(parts).strip()


def embed_tokens(seq: TokenSequence, provider: EmbeddingProvider) -> np.ndarray:
    """Row i is the provider's embedding of token i."""
    if len(seq) == 0:
        return np.zeros((0, provider.dimension), dtype=np.float32)
    rows = []
    for tok in seq:
        vec = np.asarray(provider.token_vector(tok))
        if vec.shape != (provider.dimension,):
            raise ProviderContractError(
                f"provider {provider.name} emitted shape {vec.shape} for token "
                f"{tok!r}, expected ({provider.dimension},)"
            )
        rows.append(vec)
    return np.stack(rows).astype(np.float32)


def sentence_embed(text: str, provider: EmbeddingProvider) -> np.ndarray:
    vec = np.asarray(provider.sentence_vector(text))
    if vec.shape != (provider.dimension,):
        raise ProviderContractError(
            f"provider {provider.name} emitted sentence vector of shape "
            f"{vec.shape}, expected ({provider.dimension},)"
        )
    return vec
