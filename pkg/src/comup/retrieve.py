"""Exact nearest-example retrieval over sentence embeddings of new code."""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ComupError, ConfigurationError
from .tokenize import EmbeddingProvider, sentence_embed


class IndexError_(ComupError):
    """Index construction or persistence failure."""


@dataclass
class ExampleIndex:
    """Immutable (id, new-code embedding) table for one provider."""

    ids: list[str]
    vectors: np.ndarray  # (n, dim), float32
    provider_identity: dict

    def __len__(self):
        return len(self.ids)


def build_index(corpus, provider: EmbeddingProvider) -> ExampleIndex:
    if not corpus:
        raise IndexError_("cannot build an index over an empty corpus")
    ids = [s.id for s in corpus]
    if len(set(ids)) != len(ids):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        raise IndexError_(f"duplicate sample ids in corpus: {', '.join(dupes)}")
    vectors = np.stack([sentence_embed(s.new_code, provider) for s in corpus])
    return ExampleIndex(
        ids=ids,
        vectors=vectors.astype(np.float32),
        provider_identity=provider.identity,
    )


def top_k_similar(index: ExampleIndex, query_new_code: str, k: int,
                  provider: EmbeddingProvider,
                  exclude_id: str | None = None) -> list[str]:
    """Ids of the <=k corpus entries most cosine-similar to the query's
    new code, descending; ties broken by ascending id. Exact search."""
    if k <= 0:
        return []
    query = sentence_embed(query_new_code, provider)
    qnorm = np.linalg.norm(query)
    norms = np.linalg.norm(index.vectors, axis=1)
    denom = norms * (qnorm if qnorm > 0 else 1.0)
    denom[denom == 0] = 1.0
    sims = index.vectors @ query / denom
    order = sorted(
        range(len(index.ids)),
        key=lambda i: (-float(sims[i]), index.ids[i]),
    )
    result = []
    for i in order:
        if exclude_id is not None and index.ids[i] == exclude_id:
            continue
        result.append(index.ids[i])
        if len(result) == k:
            break
    return result


_MAGIC = b"COMUPIDX"


def save_index(index: ExampleIndex, path: str | Path) -> None:
    """Binary sidecar: magic, JSON header line, then (id, vector) records."""
    header = dict(index.provider_identity)
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        for sid, vec in zip(index.ids, index.vectors):
            raw = sid.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(np.asarray(vec, dtype="<f4").tobytes())


def load_index(path: str | Path, provider: EmbeddingProvider) -> ExampleIndex:
    """Load a persisted index; refuses on provider mismatch."""
    with open(path, "rb") as fh:
        if fh.read(len(_MAGIC)) != _MAGIC:
            raise IndexError_(f"{path}: not an index file")
        header = json.loads(fh.readline().decode("utf-8"))
        if header != provider.identity:
            raise ConfigurationError(
                f"index at {path} was built with provider {header}, "
                f"got {provider.identity}"
            )
        dim = int(header["dimension"])
        ids, rows = [], []
        while True:
            lenbuf = fh.read(2)
            if not lenbuf:
                break
            (idlen,) = struct.unpack("<H", lenbuf)
            ids.append(fh.read(idlen).decode("utf-8"))
            vec = np.frombuffer(fh.read(4 * dim), dtype="<f4")
            if vec.size != dim:
                raise IndexError_(f"{path}: truncated vector record")
            rows.append(vec)
    return ExampleIndex(
        ids=ids,
        vectors=np.stack(rows) if rows else np.zeros((0, dim), np.float32),
        provider_identity=header,
    )
