import hashlib
import json
import re
from pathlib import Path

import pytest

from comup.data import save_dataset
from comup.errors import PipelineError
from comup.llm import MockBackend, ResponseCache
from comup.pipeline import run_update
from comup.prompt import PromptStrategy, build_update_prompt
from comup.rank import DualEncoderRanker, RankerConfig
from comup.retrieve import build_index, top_k_similar
from comup import cli

from conftest import make_sample

import torch


def strategies(shots=(0, 1)):
    return [PromptStrategy(shots=k, temperature=0.2, model_id="mock-model")
            for k in shots]


def tiny_ranker(provider):
    torch.manual_seed(0)
    return DualEncoderRanker(RankerConfig(
        embed_dim=provider.dimension + 4, d_model=32, attention_heads=4,
        ffn_dim=64, proj_dim=16, dropout=0.0))


@pytest.fixture
def corpus(provider):
    return [make_sample(i) for i in range(6)]


@pytest.fixture
def bits(provider, corpus, tmp_path):
    index = build_index(corpus, provider)
    cache = ResponseCache(tmp_path / "cache.jsonl")
    by_id = {s.id: s for s in corpus}
    return index, cache, by_id


def test_run_update_ranks_and_returns_top(provider, corpus, bits):
    index, cache, by_id = bits
    replies = {0: "does the thing alpha", 1: "does something else"}

    def responder(r):
        shots = r.prompt.count("Here is an example of a comment update:")
        return replies[shots]

    backend = MockBackend(responder=responder)
    model = tiny_ranker(provider)
    result = run_update(corpus[0], strategies(), backend, cache, index, by_id,
                        provider, model)
    assert result.id == corpus[0].id
    assert len(result.ranked) == 2
    scores = [r["score"] for r in result.ranked]
    assert scores == sorted(scores, reverse=True)
    assert result.final_comment == result.ranked[0]["text"]
    assert {"text", "score", "model_id", "shots", "temperature"} <= \
        set(result.ranked[0])


def test_run_update_single_candidate_skips_ranking(provider, corpus, bits):
    index, cache, by_id = bits
    backend = MockBackend(responder=lambda r: "one identical reply")
    result = run_update(corpus[0], strategies(), backend, cache, index, by_id,
                        provider, model=None)
    assert result.final_comment == "one identical reply"
    assert result.ranked[0]["score"] is None


def test_run_update_needs_model_for_multiple(provider, corpus, bits):
    index, cache, by_id = bits
    replies = iter(["first reply", "second reply"])
    backend = MockBackend(responder=lambda r: next(replies))
    with pytest.raises(PipelineError, match="no ranker checkpoint"):
        run_update(corpus[0], strategies(), backend, cache, index, by_id,
                   provider, model=None)


# --- command line -----------------------------------------------------------

def write_fixtures(dataset, strats, provider, reply_fn, path):
    """Precompute every prompt the pipeline will issue and map it to a
    reply, so the mock backend can serve a full run from a file."""
    index = build_index(dataset, provider)
    by_id = {s.id: s for s in dataset}
    with open(path, "w", encoding="utf-8") as fh:
        for sample in dataset:
            for strat in strats:
                demo_ids = top_k_similar(index, sample.new_code, strat.shots,
                                         provider, exclude_id=sample.id)
                demos = [by_id[i] for i in reversed(demo_ids)]
                prompt = build_update_prompt(sample, demos, strat)
                fh.write(json.dumps({
                    "model_id": strat.model_id, "prompt": prompt,
                    "response": reply_fn(sample, strat),
                }) + "\n")


@pytest.fixture
def cli_env(provider, corpus, tmp_path):
    dataset_path = tmp_path / "dataset.jsonl"
    save_dataset(corpus, dataset_path)
    fixtures_path = tmp_path / "fixtures.jsonl"
    write_fixtures(
        corpus, strategies(), provider,
        lambda s, st: f"a wrong comment for {st.shots} shots", fixtures_path,
    )
    config = {
        "provider": {"provider": "stub", "dimension": 24, "seed": 9},
        "backend": {"kind": "mock", "fixtures": str(fixtures_path)},
        "paths": {"cache": str(tmp_path / "cache")},
        "strategies": {"shots": [0, 1], "temperature": 0.2,
                       "models": ["mock-model"]},
        "ranker": {"embed_dim": 28, "d_model": 32, "attention_heads": 4,
                   "ffn_dim": 64, "proj_dim": 16, "dropout": 0.0,
                   "epochs": 2, "checkpoint_every": 50},
        "seed": 7,
    }
    config_path = tmp_path / "config.json"
    config_path.write_text(json.dumps(config))
    return dataset_path, config_path, tmp_path


def sha(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def test_cli_augment_writes_groups_and_manifest(cli_env, capsys):
    dataset, config, tmp = cli_env
    out = tmp / "groups.jsonl"
    assert cli.main(["augment", "--config", str(config), "--dataset",
                     str(dataset), "--out", str(out)]) == 0
    assert "augment: samples=6 groups=6 discarded=0" in capsys.readouterr().out
    assert out.exists()
    manifest = json.loads((tmp / "groups.jsonl.manifest.json").read_text())
    assert manifest["seed"] == 7
    assert str(dataset) in manifest["input_digests"]
    assert manifest["input_digests"][str(dataset)] == sha(dataset)


def test_cli_augment_rerun_byte_identical(cli_env):
    dataset, config, tmp = cli_env
    outs = []
    for name in ("g1.jsonl", "g2.jsonl"):
        out = tmp / name
        assert cli.main(["augment", "--config", str(config), "--dataset",
                         str(dataset), "--out", str(out)]) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]


def test_cli_train_deterministic_checkpoints(cli_env):
    dataset, config, tmp = cli_env
    groups = tmp / "groups.jsonl"
    cli.main(["augment", "--config", str(config), "--dataset", str(dataset),
              "--out", str(groups)])
    digests = []
    for name in ("ck1.bin", "ck2.bin"):
        out = tmp / name
        assert cli.main(["train", "--config", str(config), "--groups",
                         str(groups), "--val", str(groups), "--out",
                         str(out)]) == 0
        assert (tmp / (name + ".trainlog.jsonl")).exists()
        digests.append(sha(out))
    assert digests[0] == digests[1]


def test_cli_update_end_to_end(cli_env, capsys):
    dataset, config, tmp = cli_env
    groups = tmp / "groups.jsonl"
    ckpt = tmp / "ranker.bin"
    cli.main(["augment", "--config", str(config), "--dataset", str(dataset),
              "--out", str(groups)])
    cli.main(["train", "--config", str(config), "--groups", str(groups),
              "--out", str(ckpt)])
    out = tmp / "pred.jsonl"
    assert cli.main(["update", "--config", str(config), "--dataset",
                     str(dataset), "--checkpoint", str(ckpt), "--out",
                     str(out)]) == 0
    lines = [json.loads(l) for l in out.read_text().splitlines()]
    assert len(lines) == 6
    for rec in lines:
        assert rec["final_comment"]
        assert rec["final_comment"] == rec["candidates"][0]["text"]
        assert len(rec["candidates"]) == 2
    assert (tmp / "pred.jsonl.manifest.json").exists()


def test_cli_update_single_strategy_needs_no_checkpoint(cli_env):
    dataset, config, tmp = cli_env
    fixtures = tmp / "single.jsonl"
    corpus_samples = [make_sample(i) for i in range(6)]
    from comup.tokenize import HashEmbeddingProvider

    provider = HashEmbeddingProvider(dimension=24, seed=9)
    write_fixtures(corpus_samples, strategies((0,)), provider,
                   lambda s, st: "a single reply", fixtures)
    cfg = json.loads(Path(config).read_text())
    cfg["backend"]["fixtures"] = str(fixtures)
    cfg["strategies"]["shots"] = [0]
    single_config = tmp / "single_config.json"
    single_config.write_text(json.dumps(cfg))
    out = tmp / "pred_single.jsonl"
    assert cli.main(["update", "--config", str(single_config), "--dataset",
                     str(dataset), "--out", str(out)]) == 0
    recs = [json.loads(l) for l in out.read_text().splitlines()]
    assert all(r["candidates"][0]["score"] is None for r in recs)


def test_cli_evaluate_perfect_predictions(cli_env, capsys, corpus):
    dataset, config, tmp = cli_env
    pred = tmp / "pred.jsonl"
    with open(pred, "w") as fh:
        for s in corpus:
            fh.write(json.dumps({"id": s.id,
                                 "final_comment": s.new_comment}) + "\n")
    out = tmp / "report.jsonl"
    assert cli.main(["evaluate", "--config", str(config), "--pred", str(pred),
                     "--gold", str(dataset), "--out", str(out)]) == 0
    stdout = capsys.readouterr().out
    assert re.search(r"accuracy\s*[:=]?\s*1\.0", stdout)
    lines = out.read_text().splitlines()
    assert len(lines) == len(corpus) + 1  # per-sample rows + summary
    summary = json.loads(lines[-1])
    assert summary["summary"]["accuracy"] == 1.0


def test_cli_type_prints_rows_and_totals(cli_env, capsys, corpus):
    dataset, config, tmp = cli_env
    assert cli.main(["type", "--dataset", str(dataset)]) == 0
    out_lines = capsys.readouterr().out.splitlines()
    sample_lines = [l for l in out_lines if not l.startswith("total")]
    total_lines = [l for l in out_lines if l.startswith("total")]
    assert len(sample_lines) == len(corpus)
    assert sum(int(l.split("\t")[-1]) for l in total_lines) == len(corpus)


def test_cli_retrieve_index_and_query(cli_env, capsys, corpus):
    dataset, config, tmp = cli_env
    idx = tmp / "corpus.idx"
    assert cli.main(["retrieve", "--config", str(config), "--dataset",
                     str(dataset), "--out", str(idx)]) == 0
    assert idx.exists()
    capsys.readouterr()
    assert cli.main(["retrieve", "--config", str(config), "--dataset",
                     str(dataset), "--query-id", corpus[0].id, "-k", "3"]) == 0
    ids = capsys.readouterr().out.split()
    assert len(ids) == 3
    assert corpus[0].id not in ids


def test_cli_retrieve_query_file(cli_env, capsys, corpus):
    dataset, config, tmp = cli_env
    query = tmp / "query.txt"
    query.write_text(corpus[0].new_code)
    assert cli.main(["retrieve", "--config", str(config), "--dataset",
                     str(dataset), "--query-file", str(query), "-k", "2"]) == 0
    ids = capsys.readouterr().out.split()
    assert len(ids) == 2


def test_cli_domain_error_exit_code(cli_env, capsys):
    dataset, config, tmp = cli_env
    pred = tmp / "bad_pred.jsonl"
    pred.write_text(json.dumps({"id": "nonexistent", "final_comment": "x"}) + "\n")
    assert cli.main(["evaluate", "--config", str(config), "--pred", str(pred),
                     "--gold", str(dataset)]) == 1
    err = capsys.readouterr().err
    assert err.startswith("error: ")


def test_cli_missing_dataset_error(cli_env, capsys):
    dataset, config, tmp = cli_env
    assert cli.main(["type", "--dataset", str(tmp / "missing.jsonl")]) == 1
