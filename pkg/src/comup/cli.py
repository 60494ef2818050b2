"""Command-line entry point: augment / train / update / evaluate / type /
retrieve subcommands over the persistent file formats."""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

from . import augment as aug
from . import metrics as met
from . import rank as rk
from . import retrieve as ret
from .data import load_dataset
from .errors import ComupError, ConfigurationError
from .llm import HttpChatBackend, MockBackend, ResponseCache
from .pipeline import run_update
from .prompt import DEFAULT_SHOTS, DEFAULT_TEMPERATURE, PROMPT_VERSION, PromptStrategy
from .tokenize import provider_from_config


def _sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _write_manifest(out_path: Path, config: dict, seed: int | None,
                    inputs: list[str | Path]) -> None:
    manifest = {
        "config_digest": hashlib.sha256(
            json.dumps(config, sort_keys=True).encode("utf-8")
        ).hexdigest(),
        "prompt_version": PROMPT_VERSION,
        "seed": seed,
        "input_digests": {str(p): _sha256_file(p) for p in sorted(map(str, inputs))},
    }
    manifest_path = out_path.with_name(out_path.name + ".manifest.json")
    manifest_path.write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def _build_backend(config: dict, models_hint: set[str] | None = None):
    backend_cfg = config.get("backend", {})
    kind = backend_cfg.get("kind", "mock")
    if kind == "mock":
        fixtures = backend_cfg.get("fixtures")
        if fixtures:
            return MockBackend.from_fixture_file(fixtures)
        return MockBackend(models=models_hint)
    if kind == "http":
        return HttpChatBackend(
            endpoint=backend_cfg["endpoint"],
            api_key_env=backend_cfg.get("api_key_env", "COMUP_API_KEY"),
            max_retries=int(backend_cfg.get("max_retries", 3)),
        )
    raise ConfigurationError(f"unknown backend kind {kind!r}")


def _strategies(config: dict, args) -> list[PromptStrategy]:
    strat_cfg = config.get("strategies", {})
    shots = strat_cfg.get("shots", list(DEFAULT_SHOTS))
    temperature = strat_cfg.get("temperature", DEFAULT_TEMPERATURE)
    model_ids = strat_cfg.get("models", ["mock-model"])
    if getattr(args, "shots", None):
        shots = [int(s) for s in args.shots.split(",")]
    if getattr(args, "temperature", None) is not None:
        temperature = args.temperature
    if getattr(args, "models", None):
        model_ids = args.models.split(",")
    return [
        PromptStrategy(shots=k, temperature=temperature, model_id=m)
        for m in model_ids
        for k in shots
    ]


def _provider(config: dict):
    provider_cfg = config.get("provider", {"provider": "stub", "dimension": 64,
                                           "seed": 0})
    return provider_from_config(provider_cfg)


def _seed(config: dict, args) -> int:
    if getattr(args, "seed", None) is not None:
        return args.seed
    return int(config.get("seed", 42))


def _cache(config: dict, args) -> ResponseCache:
    cache_dir = getattr(args, "cache_dir", None) or config.get("paths", {}).get(
        "cache", ".comup-cache"
    )
    return ResponseCache(Path(cache_dir) / "responses.jsonl")


def cmd_augment(args) -> int:
    config = _load_config(args.config)
    provider = _provider(config)
    seed = _seed(config, args)
    strategies = _strategies(config, args)
    dataset = load_dataset(args.dataset)
    backend = _build_backend(config)
    cache = _cache(config, args)
    index = ret.build_index(dataset, provider)
    groups_iter, summary = aug.augment_dataset(
        dataset, strategies, backend, cache, index, provider, seed=seed
    )
    out = Path(args.out)
    aug.save_groups(groups_iter, out)
    inputs = [args.dataset] + ([args.config] if args.config else [])
    _write_manifest(out, config, seed, inputs)
    print(
        f"augment: samples={summary.samples_in} groups={summary.groups_out} "
        f"discarded={summary.discarded}"
    )
    return 0


def cmd_train(args) -> int:
    config = _load_config(args.config)
    provider = _provider(config)
    seed = _seed(config, args)
    groups = aug.load_groups(args.groups)
    val_groups = aug.load_groups(args.val) if args.val else []
    ranker_cfg = dict(config.get("ranker", {}))
    ranker_cfg.setdefault("embed_dim", provider.dimension + 4)
    ranker_cfg["seed"] = seed
    rcfg = rk.RankerConfig(**ranker_cfg)
    out = Path(args.out)
    model, _history = rk.train(
        groups, val_groups, rcfg, provider,
        log_path=out.with_name(out.name + ".trainlog.jsonl"),
    )
    rk.save_checkpoint(model, provider, out)
    inputs = [args.groups] + ([args.val] if args.val else []) \
        + ([args.config] if args.config else [])
    _write_manifest(out, config, seed, inputs)
    print(f"train: groups={len(groups)} checkpoint={out}")
    return 0


def cmd_update(args) -> int:
    config = _load_config(args.config)
    provider = _provider(config)
    seed = _seed(config, args)
    strategies = _strategies(config, args)
    dataset = load_dataset(args.dataset)
    corpus = load_dataset(args.corpus) if args.corpus else dataset
    corpus_by_id = {s.id: s for s in corpus}
    index = ret.build_index(corpus, provider)
    backend = _build_backend(config)
    cache = _cache(config, args)
    model = rk.load_checkpoint(args.checkpoint, provider) if args.checkpoint else None
    out = Path(args.out)
    with open(out, "w", encoding="utf-8") as fh:
        for sample in dataset:
            result = run_update(
                sample, strategies, backend, cache, index, corpus_by_id,
                provider, model, seed=seed,
            )
            fh.write(json.dumps(
                {"id": result.id, "final_comment": result.final_comment,
                 "candidates": result.ranked},
                ensure_ascii=False,
            ) + "\n")
    inputs = [args.dataset] + [p for p in (args.corpus, args.checkpoint,
                                           args.config) if p]
    _write_manifest(out, config, seed, inputs)
    print(f"update: samples={len(dataset)} out={out}")
    return 0


def _load_predictions(path: str | Path) -> dict[str, str]:
    preds = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                rec = json.loads(line)
                preds[str(rec["id"])] = rec.get("final_comment", rec.get("text", ""))
    return preds


def cmd_evaluate(args) -> int:
    config = _load_config(args.config)
    provider = _provider(config)
    predictions = _load_predictions(args.pred)
    gold = load_dataset(args.gold)
    report = met.evaluate_corpus(predictions, gold, provider)
    for line in report.summary_lines():
        print(line)
    if args.out:
        out = Path(args.out)
        with open(out, "w", encoding="utf-8") as fh:
            for row in report.rows:
                rec = {
                    "id": row.id, "accuracy": row.accuracy, "aed": row.aed,
                    "red": row.red, "bleu4": row.bleu4, "meteor": row.meteor,
                    "f1": row.f1, "sentence_sim": row.sentence_sim,
                }
                if row.update_type is not None:
                    rec["source_type"] = row.update_type.source.value
                    rec["count_type"] = row.update_type.count.value
                fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
            fh.write(json.dumps({"summary": report.averages,
                                 "red_undefined": report.red_undefined},
                                ensure_ascii=False) + "\n")
        _write_manifest(out, config, None, [args.pred, args.gold])
    return 0


def cmd_type(args) -> int:
    dataset = load_dataset(args.dataset)
    counts: dict[tuple[str, str], int] = {}
    for sample in dataset:
        utype = met.classify_update_type(sample)
        key = (utype.source.value, utype.count.value)
        counts[key] = counts.get(key, 0) + 1
        print(f"{sample.id}\t{utype.source.value}\t{utype.count.value}")
    for (src, cnt), n in sorted(counts.items()):
        print(f"total\t{src}/{cnt}\t{n}")
    return 0


def cmd_retrieve(args) -> int:
    config = _load_config(args.config)
    provider = _provider(config)
    corpus = load_dataset(args.dataset)
    index = ret.build_index(corpus, provider)
    if args.out:
        ret.save_index(index, args.out)
        _write_manifest(Path(args.out), config, None, [args.dataset])
        print(f"retrieve: indexed {len(index)} samples -> {args.out}")
        return 0
    corpus_by_id = {s.id: s for s in corpus}
    if args.query_id:
        query = corpus_by_id[args.query_id].new_code
        exclude = args.query_id
    else:
        query = Path(args.query_file).read_text(encoding="utf-8")
        exclude = None
    for sid in ret.top_k_similar(index, query, args.k, provider,
                                 exclude_id=exclude):
        print(sid)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="comup",
        description="Update-then-rank pipeline for code comment maintenance",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True, seed=True):
        if config:
            p.add_argument("--config", help="JSON pipeline config")
        if seed:
            p.add_argument("--seed", type=int, help="override config seed")

    p = sub.add_parser("augment", help="build ranking training groups")
    common(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--models")
    p.add_argument("--shots")
    p.add_argument("--temperature", type=float)
    p.add_argument("--cache-dir")
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("train", help="train the ranking model")
    common(p)
    p.add_argument("--groups", required=True)
    p.add_argument("--val")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("update", help="run the full update pipeline")
    common(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--corpus", help="retrieval corpus (default: the dataset)")
    p.add_argument("--checkpoint")
    p.add_argument("--out", required=True)
    p.add_argument("--models")
    p.add_argument("--shots")
    p.add_argument("--temperature", type=float)
    p.add_argument("--cache-dir")
    p.set_defaults(func=cmd_update)

    p = sub.add_parser("evaluate", help="score predictions against gold")
    common(p, seed=False)
    p.add_argument("--pred", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("type", help="classify ground-truth update types")
    p.add_argument("--dataset", required=True)
    p.set_defaults(func=cmd_type)

    p = sub.add_parser("retrieve", help="build or query the example index")
    common(p, seed=False)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", help="persist the index to this path")
    p.add_argument("--query-id")
    p.add_argument("--query-file")
    p.add_argument("-k", type=int, default=5)
    p.set_defaults(func=cmd_retrieve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ComupError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
