import numpy as np
import pytest

from comup.data import CommentUpdateSample
from comup.errors import ConfigurationError
from comup.retrieve import (
    IndexError_,
    build_index,
    load_index,
    save_index,
    top_k_similar,
)
from comup.tokenize import HashEmbeddingProvider, sentence_embed

from conftest import make_sample


def corpus_of(n):
    return [make_sample(i) for i in range(n)]


def test_index_cardinality(provider):
    index = build_index(corpus_of(3), provider)
    assert len(index) == 3


def test_index_rebuild_bit_identical(provider):
    corpus = corpus_of(4)
    a = build_index(corpus, provider)
    b = build_index(corpus, HashEmbeddingProvider(dimension=24, seed=9))
    assert np.array_equal(a.vectors, b.vectors)


def test_index_entries_match_sentence_embed(provider):
    corpus = corpus_of(3)
    index = build_index(corpus, provider)
    for i, sample in enumerate(corpus):
        assert np.array_equal(index.vectors[i],
                              sentence_embed(sample.new_code, provider))


def test_duplicate_ids_rejected(provider):
    corpus = corpus_of(2) + [make_sample(0)]
    with pytest.raises(IndexError_, match="s0000"):
        build_index(corpus, provider)


def test_empty_corpus_rejected(provider):
    with pytest.raises(IndexError_):
        build_index([], provider)


def test_k_zero(provider):
    index = build_index(corpus_of(3), provider)
    assert top_k_similar(index, "anything", 0, provider) == []


def test_exact_query_ranks_first(provider):
    corpus = corpus_of(5)
    index = build_index(corpus, provider)
    result = top_k_similar(index, corpus[2].new_code, 3, provider)
    assert result[0] == corpus[2].id


def test_matches_brute_force_oracle(provider):
    corpus = corpus_of(5)
    index = build_index(corpus, provider)
    query = "int g ( ) { return q ; }"
    qv = sentence_embed(query, provider)

    def cosine(v):
        return float(np.dot(v, qv) / (np.linalg.norm(v) * np.linalg.norm(qv)))

    oracle = [s.id for s in sorted(
        corpus, key=lambda s: (-cosine(sentence_embed(s.new_code, provider)), s.id)
    )][:3]
    assert top_k_similar(index, query, 3, provider) == oracle


def test_tie_break_by_ascending_id(provider):
    # identical new code gives identical vectors, so similarity ties
    twin_a = CommentUpdateSample(id="zz", old_code="c", old_comment="x",
                                 new_code="same code", new_comment=None)
    twin_b = CommentUpdateSample(id="aa", old_code="c", old_comment="x",
                                 new_code="same code", new_comment=None)
    index = build_index([twin_a, twin_b], provider)
    assert top_k_similar(index, "same code", 2, provider) == ["aa", "zz"]


def test_exclude_id_never_returned(provider):
    corpus = corpus_of(5)
    index = build_index(corpus, provider)
    for k in range(6):
        result = top_k_similar(index, corpus[0].new_code, k, provider,
                               exclude_id=corpus[0].id)
        assert corpus[0].id not in result
        assert len(result) == min(k, len(corpus) - 1)


def test_k_exceeding_corpus_returns_all(provider):
    corpus = corpus_of(3)
    index = build_index(corpus, provider)
    assert len(top_k_similar(index, "query", 99, provider)) == 3


def test_save_load_round_trip(provider, tmp_path):
    corpus = corpus_of(4)
    index = build_index(corpus, provider)
    path = tmp_path / "corpus.idx"
    save_index(index, path)
    loaded = load_index(path, provider)
    assert loaded.ids == index.ids
    assert np.array_equal(loaded.vectors, index.vectors)
    assert top_k_similar(loaded, corpus[1].new_code, 2, provider) == \
        top_k_similar(index, corpus[1].new_code, 2, provider)


def test_load_refuses_provider_mismatch(provider, tmp_path):
    index = build_index(corpus_of(2), provider)
    path = tmp_path / "corpus.idx"
    save_index(index, path)
    other = HashEmbeddingProvider(dimension=24, seed=10)
    with pytest.raises(ConfigurationError):
        load_index(path, other)
