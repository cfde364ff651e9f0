"""End-to-end runs: config schema, per-stage seeds, artifact layout.

One master seed drives every stage through fixed offsets, so a whole run is
reproducible from (config, strategy, seed). Outputs land in one directory:
the echoed effective config, corpus records, embeddings, dictionary, registry,
checkpoint, report, and sweep table; every write is atomic.
"""

from __future__ import annotations

import copy
import json
import logging
import math
from pathlib import Path

from . import baselines, embeddings, evaluation, id_registry, semantic_ids
from ._util import ConfigError, atomic_write_text
from .corpus import Corpus, SynthConfig, generate_synthetic, save_corpus, split, to_training_pairs
from .decoder import DecodeConfig, IdTrie
from .embeddings import SkipgramConfig
from .evaluation import EvalReport, model_ranker, render_sweep, run_experiment, sweep_homogeneity
from .lm import Checkpoint, ModelConfig, TrainConfig, fit_tokenizer, save_checkpoint, train

logger = logging.getLogger(__name__)

STRATEGY_CHOICES = (
    "content",
    "track-int",
    "artist-int-track-seq",
    "artist-iid-track-seq",
    "semantic-cf",
    "semantic-text",
)

DEFAULT_CONFIG: dict = {
    "corpus": {
        "n_genres": 8,
        "artists_per_genre": 25,
        "tracks_per_artist": 10.0,
        "n_playlists": 5000,
        "playlist_len_min": 10,
        "playlist_len_max": 20,
        "cross_genre_noise": 0.1,
        "zipf_exponent": 0.9,
        "test_fraction": 0.1,
    },
    "embeddings": {
        "dim": 64,
        "window": 5,
        "negatives": 5,
        "epochs": 5,
        "lr_start": 0.025,
        "lr_end": 1e-4,
        "subsample": 0.0,
    },
    "semantic": {
        "s": 0,  # 0 -> max(64, ceil(sqrt(|tracks|)))
        "c": 3,
        "iters": 30,
    },
    "registry": {
        "top_k_artists": 50000,
        "counter_base": 1000,
    },
    "model": {
        "layers": 2,
        "heads": 4,
        "width": 128,
        "ff_width": 512,
        "dropout": 0.1,
        "max_input_len": 64,
        "max_target_len": 24,
    },
    "train": {
        "epochs": 20,
        "lr": 5e-4,
        "batch_size": 64,
        "weight_decay": 0.01,
        "grad_clip": 1.0,
        "base_vocab_size": 4000,
    },
    "decode": {
        "groups": 10,
        "beams_per_group": 2,
        "diversity_penalty": 0.25,
        "trie_constrained": True,
        "length_norm": 0.0,
    },
    "eval": {
        "k": 10,
        "lambdas": [0.0, 0.25, 0.5, 1.0],
        "baselines": True,
        "sweep": False,
    },
}

# Stage seeds derive from the master seed with fixed offsets.
_SEED_SPLIT, _SEED_EMB, _SEED_DICT, _SEED_REG, _SEED_TRAIN = 1, 2, 3, 4, 5


def merge_config(overrides: dict | None) -> dict:
    """Defaults overlaid with `overrides`; unknown keys are rejected by name."""
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    for section, values in (overrides or {}).items():
        if section not in cfg:
            raise ConfigError(f"unknown config section {section!r}")
        if not isinstance(values, dict):
            raise ConfigError(f"config section {section!r} must be an object")
        for key, value in values.items():
            if key not in cfg[section]:
                raise ConfigError(f"unknown config key {section}.{key!r}")
            cfg[section][key] = value
    return cfg


def load_config_file(path: str | Path | None) -> dict:
    if path is None:
        return merge_config(None)
    with open(path, "r", encoding="utf-8") as fh:
        return merge_config(json.load(fh))


def synth_corpus(cfg: dict, seed: int) -> Corpus:
    section = cfg["corpus"]
    synth = SynthConfig(
        n_genres=section["n_genres"],
        artists_per_genre=section["artists_per_genre"],
        tracks_per_artist=section["tracks_per_artist"],
        n_playlists=section["n_playlists"],
        playlist_len_min=section["playlist_len_min"],
        playlist_len_max=section["playlist_len_max"],
        cross_genre_noise=section["cross_genre_noise"],
        zipf_exponent=section["zipf_exponent"],
    )
    corpus = generate_synthetic(synth, seed)
    return split(corpus, section["test_fraction"], seed + _SEED_SPLIT)


def build_table(cfg: dict, corpus: Corpus, provenance: str, seed: int):
    if provenance == "cf":
        section = cfg["embeddings"]
        return embeddings.build_cf_table(
            corpus,
            SkipgramConfig(
                dim=section["dim"],
                window=section["window"],
                negatives=section["negatives"],
                epochs=section["epochs"],
                lr_start=section["lr_start"],
                lr_end=section["lr_end"],
                subsample=section["subsample"],
                seed=seed + _SEED_EMB,
            ),
        )
    if provenance == "text":
        return embeddings.build_text_table(
            corpus, dim=cfg["embeddings"]["dim"], seed=seed + _SEED_EMB
        )
    raise ConfigError(f"unknown embedding provenance {provenance!r}")


def dictionary_size(cfg: dict, n_items: int) -> int:
    s = cfg["semantic"]["s"]
    if s == 0:
        s = max(64, math.isqrt(max(n_items - 1, 0)) + 1)
    return min(s, n_items)


def build_registry_for_strategy(cfg: dict, corpus: Corpus, strategy: str, seed: int):
    """(registry, table, dictionary); the last two are None off the semantic path."""
    if strategy not in STRATEGY_CHOICES:
        raise ConfigError(f"unknown strategy {strategy!r}; expected one of {STRATEGY_CHOICES}")
    reg_seed = seed + _SEED_REG
    section = cfg["registry"]
    if strategy == "content":
        return id_registry.build_content(corpus), None, None
    if strategy == "track-int":
        return id_registry.build_track_int(corpus, reg_seed, section["counter_base"]), None, None
    if strategy == "artist-int-track-seq":
        return (
            id_registry.build_artist_int_track_seq(corpus, reg_seed, section["counter_base"]),
            None,
            None,
        )
    if strategy == "artist-iid-track-seq":
        top_k = min(section["top_k_artists"], len(corpus.artists))
        return (
            id_registry.build_artist_iid_track_seq(corpus, top_k, reg_seed, section["counter_base"]),
            None,
            None,
        )
    provenance = "cf" if strategy == "semantic-cf" else "text"
    table = build_table(cfg, corpus, provenance, seed)
    s = dictionary_size(cfg, len(table.rows))
    dictionary = semantic_ids.learn_dictionary(
        table, s=s, c=cfg["semantic"]["c"], iters=cfg["semantic"]["iters"], seed=seed + _SEED_DICT
    )
    return id_registry.build_semantic(corpus, table, dictionary), table, dictionary


def train_checkpoint(cfg: dict, corpus: Corpus, registry, seed: int) -> Checkpoint:
    pairs = to_training_pairs(corpus.train_queries, registry)
    tokenizer = fit_tokenizer(
        [q.text for q in corpus.train_queries],
        registry,
        base_vocab_size=cfg["train"]["base_vocab_size"],
    )
    msec, tsec = cfg["model"], cfg["train"]
    mcfg = ModelConfig(
        layers=msec["layers"],
        heads=msec["heads"],
        width=msec["width"],
        ff_width=msec["ff_width"],
        dropout=msec["dropout"],
        max_input_len=msec["max_input_len"],
        max_target_len=msec["max_target_len"],
        seed=seed + _SEED_TRAIN,
    )
    tcfg = TrainConfig(
        epochs=tsec["epochs"],
        lr=tsec["lr"],
        batch_size=tsec["batch_size"],
        weight_decay=tsec["weight_decay"],
        grad_clip=tsec["grad_clip"],
        seed=seed + _SEED_TRAIN,
    )
    model, losses = train(pairs, tokenizer, mcfg, tcfg)
    return Checkpoint.from_training(tokenizer, model, tcfg, registry.fingerprint, losses)


def decode_config(cfg: dict, k: int) -> DecodeConfig:
    section = cfg["decode"]
    dcfg = DecodeConfig(
        groups=section["groups"],
        beams_per_group=section["beams_per_group"],
        diversity_penalty=section["diversity_penalty"],
        max_target_len=cfg["model"]["max_target_len"],
        trie_constrained=section["trie_constrained"],
        length_norm=section["length_norm"],
    )
    dcfg.validate(k)
    return dcfg


def baseline_rankers(corpus: Corpus, which: tuple[str, ...], seed: int) -> dict[str, evaluation.Ranker]:
    rankers: dict[str, evaluation.Ranker] = {}
    if "popularity" in which:
        rankers["popularity"] = lambda q, k: baselines.popularity_retrieve(corpus, k)
    if "bm25" in which:
        index = baselines.InvertedIndex(baselines.build_documents(corpus))
        rankers["bm25"] = lambda q, k: baselines.bm25_retrieve(index, q.text, k, corpus)
    if "dense-zs" in which or "dense-ft" in which:
        zs = baselines.DenseRetriever(corpus, seed=seed)
        if "dense-zs" in which:
            rankers["dense-zs"] = lambda q, k: zs.retrieve(q.text, k)
        if "dense-ft" in which:
            ft = baselines.DenseRetriever(corpus, seed=seed)
            ft.fine_tune(corpus)
            rankers["dense-ft"] = lambda q, k: ft.retrieve(q.text, k)
    return rankers


def run_pipeline(
    cfg: dict,
    strategy: str,
    seed: int,
    out_dir: str | Path | None = None,
    corpus: Corpus | None = None,
) -> tuple[EvalReport, dict]:
    """Run every stage for one strategy; returns (report, artifacts).

    `artifacts` holds the in-memory objects (corpus, registry, checkpoint,
    trie, sweep rows) so callers can reuse them without reloading.
    """
    cfg = merge_config(cfg) if cfg else merge_config(None)
    if corpus is None:
        corpus = synth_corpus(cfg, seed)
    registry, table, dictionary = build_registry_for_strategy(cfg, corpus, strategy, seed)
    ckpt = train_checkpoint(cfg, corpus, registry, seed)

    k = cfg["eval"]["k"]
    dcfg = decode_config(cfg, k)
    trie = IdTrie.from_registry(registry, ckpt.tokenizer) if dcfg.trie_constrained else None
    methods: dict[str, evaluation.Ranker] = {
        f"model:{strategy}": model_ranker(ckpt, registry, dcfg, trie=trie)
    }
    if cfg["eval"]["baselines"]:
        methods.update(
            baseline_rankers(corpus, ("popularity", "bm25", "dense-zs", "dense-ft"), seed)
        )
    report = run_experiment(
        corpus,
        methods,
        k=k,
        seed=seed,
        metadata={
            "strategy": strategy,
            "corpus_fingerprint": corpus.fingerprint(),
            "registry_fingerprint": registry.fingerprint,
            "config": cfg,
        },
    )

    sweep_rows = None
    if cfg["eval"]["sweep"]:
        sweep_rows = sweep_homogeneity(
            ckpt, registry, corpus, cfg["eval"]["lambdas"], k=k, base_cfg=dcfg
        )

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        atomic_write_text(out / "config.json", json.dumps(cfg, indent=1, sort_keys=True) + "\n")
        atomic_write_text(
            out / "fingerprints.json",
            json.dumps(
                {
                    "corpus": corpus.fingerprint(),
                    "registry": registry.fingerprint,
                    "strategy": strategy,
                    "seed": seed,
                },
                indent=1,
                sort_keys=True,
            )
            + "\n",
        )
        save_corpus(corpus, out / "corpus")
        if table is not None:
            embeddings.save_table(table, out / "embeddings.tsv")
        if dictionary is not None:
            semantic_ids.save_dictionary(dictionary, out / "dictionary.txt")
        id_registry.save_registry(registry, out / "registry.tsv")
        save_checkpoint(ckpt, out / "checkpoint.bin")
        report.save(out / "report.json")
        if sweep_rows is not None:
            atomic_write_text(out / "sweep.tsv", render_sweep(sweep_rows))

    artifacts = {
        "corpus": corpus,
        "registry": registry,
        "table": table,
        "dictionary": dictionary,
        "checkpoint": ckpt,
        "trie": trie,
        "sweep": sweep_rows,
        "config": cfg,
    }
    return report, artifacts
