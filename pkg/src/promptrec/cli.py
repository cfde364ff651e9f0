"""Command-line entry point wiring all stages into reproducible runs."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import embeddings, id_registry, pipeline, semantic_ids
from ._util import ConfigError, DataError, atomic_write_text
from .corpus import load_corpus_dir, save_corpus
from .decoder import IdTrie, recommend
from .evaluation import model_ranker, render_sweep, run_experiment, sweep_homogeneity
from .lm import load_checkpoint

logger = logging.getLogger(__name__)


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # usage problems exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _data_dir(value: str | None) -> Path:
    return Path(value or os.environ.get("T2T_DATA_DIR", "runs"))


def _build_parser() -> _Parser:
    parser = _Parser(prog="promptrec", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log stage progress")
    sub = parser.add_subparsers(dest="command", required=True)

    corpus_p = sub.add_parser("corpus", help="generate or validate corpora")
    corpus_sub = corpus_p.add_subparsers(dest="corpus_command", required=True)
    synth = corpus_sub.add_parser("synth", help="generate a planted-genre corpus")
    synth.add_argument("--config", help="JSON config file")
    synth.add_argument("--seed", type=int, default=7)
    synth.add_argument("--out", required=True)
    validate = corpus_sub.add_parser("validate", help="check corpus invariants")
    validate.add_argument("dir")

    embed = sub.add_parser("embed", help="train track embeddings")
    embed_sub = embed.add_subparsers(dest="embed_command", required=True)
    etrain = embed_sub.add_parser("train")
    etrain.add_argument("--corpus", required=True)
    etrain.add_argument("--provenance", choices=("cf", "text"), default="cf")
    etrain.add_argument("--config")
    etrain.add_argument("--seed", type=int, default=7)
    etrain.add_argument("--out", required=True)

    semid = sub.add_parser("semid", help="learn the sparse-coding dictionary")
    semid_sub = semid.add_subparsers(dest="semid_command", required=True)
    slearn = semid_sub.add_parser("learn")
    slearn.add_argument("--embeddings", required=True)
    slearn.add_argument("--s", type=int, default=64)
    slearn.add_argument("--c", type=int, default=3)
    slearn.add_argument("--iters", type=int, default=30)
    slearn.add_argument("--seed", type=int, default=7)
    slearn.add_argument("--out", required=True)

    reg = sub.add_parser("registry", help="materialize an ID strategy")
    reg_sub = reg.add_subparsers(dest="registry_command", required=True)
    rbuild = reg_sub.add_parser("build")
    rbuild.add_argument("--strategy", required=True, choices=id_registry.STRATEGIES)
    rbuild.add_argument("--corpus", required=True)
    rbuild.add_argument("--embeddings")
    rbuild.add_argument("--dict")
    rbuild.add_argument("--top-k", type=int, default=50000)
    rbuild.add_argument("--counter-base", type=int, default=1000)
    rbuild.add_argument("--seed", type=int, default=7)
    rbuild.add_argument("--out", required=True)

    train_p = sub.add_parser("train", help="train the seq2seq backbone")
    train_p.add_argument("--corpus", required=True)
    train_p.add_argument("--strategy", choices=pipeline.STRATEGY_CHOICES)
    train_p.add_argument("--registry", help="prebuilt registry file (else built from --strategy)")
    train_p.add_argument("--config")
    train_p.add_argument("--epochs", type=int)
    train_p.add_argument("--lr", type=float)
    train_p.add_argument("--batch-size", type=int)
    train_p.add_argument("--seed", type=int, default=7)
    train_p.add_argument("--out", required=True)

    query_p = sub.add_parser("query", help="decode prompts into ranked tracks")
    query_p.add_argument("--checkpoint", required=True)
    query_p.add_argument("--registry", required=True)
    query_p.add_argument("--corpus", required=True)
    query_p.add_argument("--file", help="prompts file, one per line (default: stdin REPL)")
    query_p.add_argument("--k", type=int, default=10)
    query_p.add_argument("--config")

    eval_p = sub.add_parser("eval", help="evaluate a checkpoint on test queries")
    eval_p.add_argument("--corpus", required=True)
    eval_p.add_argument("--checkpoint", required=True)
    eval_p.add_argument("--registry", required=True)
    eval_p.add_argument("--k", type=int, default=10)
    eval_p.add_argument("--config")
    eval_p.add_argument("--seed", type=int, default=7)
    eval_p.add_argument("--out", required=True)

    base_p = sub.add_parser("baseline", help="run a retrieval baseline")
    base_p.add_argument("--corpus", required=True)
    base_p.add_argument("--method", required=True, choices=("popularity", "bm25", "dense-zs", "dense-ft"))
    base_p.add_argument("--k", type=int, default=10)
    base_p.add_argument("--seed", type=int, default=7)
    base_p.add_argument("--out", required=True)

    sweep_p = sub.add_parser("sweep", help="sweep the homogeneity penalty")
    sweep_p.add_argument("--corpus", required=True)
    sweep_p.add_argument("--checkpoint", required=True)
    sweep_p.add_argument("--registry", required=True)
    sweep_p.add_argument("--lambdas", default="0,0.25,0.5,1.0")
    sweep_p.add_argument("--k", type=int, default=10)
    sweep_p.add_argument("--config")
    sweep_p.add_argument("--out", required=True)

    pipe = sub.add_parser("pipeline", help="run all stages for one strategy")
    pipe.add_argument("--strategy", required=True, choices=pipeline.STRATEGY_CHOICES)
    pipe.add_argument("--seed", type=int, default=7)
    pipe.add_argument("--config")
    pipe.add_argument("--out", help="output directory (default $T2T_DATA_DIR/<strategy>-<seed>)")
    return parser


def _load_cfg(path: str | None) -> dict:
    return pipeline.load_config_file(path)


def _cmd_corpus(args) -> int:
    if args.corpus_command == "synth":
        cfg = _load_cfg(args.config)
        corpus = pipeline.synth_corpus(cfg, args.seed)
        save_corpus(corpus, args.out)
        atomic_write_text(
            Path(args.out) / "config.json", json.dumps(cfg, indent=1, sort_keys=True) + "\n"
        )
        print(
            f"wrote corpus: {len(corpus.tracks)} tracks, {len(corpus.playlists)} playlists, "
            f"{len(corpus.train_queries)} train / {len(corpus.test_queries)} test queries"
        )
        return 0
    corpus = load_corpus_dir(args.dir)
    corpus.validate()
    print(f"ok: {len(corpus.tracks)} tracks, {len(corpus.playlists)} playlists")
    return 0


def _cmd_embed(args) -> int:
    cfg = _load_cfg(args.config)
    corpus = load_corpus_dir(args.corpus)
    table = pipeline.build_table(cfg, corpus, args.provenance, args.seed)
    embeddings.save_table(table, args.out)
    print(f"wrote {len(table.rows)} x {table.dim} {table.provenance} embeddings to {args.out}")
    return 0


def _cmd_semid(args) -> int:
    table = embeddings.load_table(args.embeddings)
    dictionary = semantic_ids.learn_dictionary(
        table, s=min(args.s, len(table.rows)), c=args.c, iters=args.iters, seed=args.seed
    )
    semantic_ids.save_dictionary(dictionary, args.out)
    print(
        f"dictionary s={dictionary.s} c={dictionary.c}: "
        f"mean squared reconstruction error {dictionary.final_error:.4f}"
    )
    return 0


def _cmd_registry(args) -> int:
    corpus = load_corpus_dir(args.corpus)
    table = embeddings.load_table(args.embeddings) if args.embeddings else None
    dictionary = semantic_ids.load_dictionary(args.dict) if args.dict else None
    cfg = id_registry.IdStrategyConfig(
        strategy=args.strategy,
        top_k_artists=min(args.top_k, len(corpus.artists)),
        counter_base=args.counter_base,
        seed=args.seed,
    )
    registry = id_registry.build_registry(corpus, cfg, table=table, dictionary=dictionary)
    id_registry.save_registry(registry, args.out)
    print(
        f"wrote {args.strategy} registry: {len(registry.forward)} tracks, "
        f"{len(registry.extra_vocab)} extended tokens"
    )
    return 0


def _cmd_train(args) -> int:
    cfg = _load_cfg(args.config)
    if args.epochs is not None:
        cfg["train"]["epochs"] = args.epochs
    if args.lr is not None:
        cfg["train"]["lr"] = args.lr
    if args.batch_size is not None:
        cfg["train"]["batch_size"] = args.batch_size
    corpus = load_corpus_dir(args.corpus)
    if args.registry:
        registry = id_registry.load_registry(args.registry)
    elif args.strategy:
        registry, _, _ = pipeline.build_registry_for_strategy(cfg, corpus, args.strategy, args.seed)
    else:
        raise ConfigError("train needs --registry or --strategy")
    ckpt = pipeline.train_checkpoint(cfg, corpus, registry, args.seed)
    from .lm import save_checkpoint

    save_checkpoint(ckpt, args.out)
    print(f"trained {len(ckpt.loss_trace)} epochs; final loss {ckpt.loss_trace[-1]:.4f}")
    return 0


def _cmd_query(args) -> int:
    cfg = _load_cfg(args.config)
    ckpt = load_checkpoint(args.checkpoint)
    registry = id_registry.load_registry(args.registry)
    corpus = load_corpus_dir(args.corpus)
    dcfg = pipeline.decode_config(cfg, args.k)
    trie = IdTrie.from_registry(registry, ckpt.tokenizer) if dcfg.trie_constrained else None

    def answer(prompt: str) -> None:
        ranked = recommend(ckpt, registry, prompt, args.k, cfg=dcfg, trie=trie)
        for rank, (tk, score) in enumerate(ranked.entries, start=1):
            track = corpus.tracks[tk]
            artist = corpus.artists[track.artist_key].name
            print(f"{rank}\t{tk}\t{artist}\t{track.title}\t{score:.4f}")

    if args.file:
        for line in Path(args.file).read_text(encoding="utf-8").splitlines():
            if line.strip():
                print(f"# {line}")
                answer(line.strip())
        return 0
    for line in sys.stdin:
        prompt = line.strip()
        if not prompt:
            continue
        answer(prompt)
    return 0


def _cmd_eval(args) -> int:
    cfg = _load_cfg(args.config)
    corpus = load_corpus_dir(args.corpus)
    ckpt = load_checkpoint(args.checkpoint)
    registry = id_registry.load_registry(args.registry)
    dcfg = pipeline.decode_config(cfg, args.k)
    report = run_experiment(
        corpus,
        {"model": model_ranker(ckpt, registry, dcfg)},
        k=args.k,
        seed=args.seed,
        metadata={"registry_fingerprint": registry.fingerprint},
    )
    report.save(args.out)
    result = next(iter(report.methods.values()))
    print(f"hits@{args.k} {result.mean:.4f}  entropy {result.entropy:.3f} bits")
    return 0


def _cmd_baseline(args) -> int:
    corpus = load_corpus_dir(args.corpus)
    rankers = pipeline.baseline_rankers(corpus, (args.method,), args.seed)
    report = run_experiment(corpus, rankers, k=args.k, seed=args.seed)
    report.save(args.out)
    result = report.methods[args.method]
    print(f"{args.method}: hits@{args.k} {result.mean:.4f}")
    return 0


def _cmd_sweep(args) -> int:
    cfg = _load_cfg(args.config)
    corpus = load_corpus_dir(args.corpus)
    ckpt = load_checkpoint(args.checkpoint)
    registry = id_registry.load_registry(args.registry)
    lambdas = [float(x) for x in args.lambdas.split(",") if x.strip()]
    rows = sweep_homogeneity(
        ckpt, registry, corpus, lambdas, k=args.k, base_cfg=pipeline.decode_config(cfg, args.k)
    )
    atomic_write_text(args.out, render_sweep(rows))
    for lam, hits, entropy in rows:
        print(f"lambda={lam}\thits@{args.k}={hits:.4f}\tentropy={entropy:.3f}")
    return 0


def _cmd_pipeline(args) -> int:
    cfg = _load_cfg(args.config)
    out = Path(args.out) if args.out else _data_dir(None) / f"{args.strategy}-seed{args.seed}"
    report, _ = pipeline.run_pipeline(cfg, args.strategy, args.seed, out_dir=out)
    for name, result in report.methods.items():
        print(f"{name}: hits@{report.k} {result.mean:.4f}  entropy {result.entropy:.3f}")
    print(f"artifacts in {out}")
    return 0


_COMMANDS = {
    "corpus": _cmd_corpus,
    "embed": _cmd_embed,
    "semid": _cmd_semid,
    "registry": _cmd_registry,
    "train": _cmd_train,
    "query": _cmd_query,
    "eval": _cmd_eval,
    "baseline": _cmd_baseline,
    "sweep": _cmd_sweep,
    "pipeline": _cmd_pipeline,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.verbose:
            logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (DataError, OSError, RuntimeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
