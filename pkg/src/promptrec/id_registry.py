"""Materialized ID strategies: bidirectional track <-> ID-string maps.

Five strategies are supported. `content` concatenates artist name and title;
the integer family assigns seeded random integers (optionally hierarchical,
optionally with top-K artist integers promoted to single vocabulary tokens);
`semantic` delegates to the learned sparse-coding IDs. Reverse buckets are
sorted by popularity (descending) so collision resolution follows catalog
prominence.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._util import ConfigError, DataError, atomic_write_text, stable_hash
from .corpus import Corpus
from .embeddings import EmbeddingTable
from .semantic_ids import Dictionary, assign_semantic_ids, collision_stats, token_lexicon

logger = logging.getLogger(__name__)

STRATEGIES = ("content", "track-int", "artist-int-track-seq", "artist-iid-track-seq", "semantic")
DEFAULT_COUNTER_BASE = 1000


@dataclass(frozen=True)
class IdStrategyConfig:
    strategy: str = "semantic"
    top_k_artists: int = 50000
    counter_base: int = DEFAULT_COUNTER_BASE
    semantic_s: int = 64
    semantic_c: int = 3
    embedding_provenance: str = "cf"
    seed: int = 0

    def validate(self) -> None:
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown strategy {self.strategy!r}; expected one of {STRATEGIES}")
        if self.counter_base < 1:
            raise ConfigError(f"counter_base must be >= 1, got {self.counter_base}")
        if self.top_k_artists < 1:
            raise ConfigError(f"top_k_artists must be >= 1, got {self.top_k_artists}")


@dataclass
class IdRegistry:
    strategy: str
    forward: dict[str, str]  # track_key -> id string
    reverse: dict[str, list[str]] = field(default_factory=dict)  # id -> track_keys, popularity desc
    extra_vocab: tuple[str, ...] = ()
    fingerprint: str = ""
    _normalized: dict[str, str] = field(default_factory=dict, repr=False)

    def resolve(self, id_string: str) -> list[str]:
        """Tracks for an ID, best first; unknown IDs give an empty list.

        For the content strategy a normalized (casefolded, whitespace-collapsed)
        lookup backstops the exact one - the entity-resolution step for
        free-text identifiers.
        """
        hit = self.reverse.get(id_string)
        if hit is not None:
            return list(hit)
        if self.strategy == "content":
            alt = self._normalized.get(_normalize(id_string))
            if alt is not None:
                return list(self.reverse[alt])
        return []


def _normalize(text: str) -> str:
    return re.sub(r"\s+", " ", text.casefold().strip())


def _finish(
    strategy: str,
    corpus: Corpus,
    forward: dict[str, str],
    extra_vocab: tuple[str, ...],
    params: dict,
) -> IdRegistry:
    popularity = {tk: t.popularity for tk, t in corpus.tracks.items()}
    buckets: dict[str, list[str]] = {}
    for tk, id_string in forward.items():
        buckets.setdefault(id_string, []).append(tk)
    reverse = {
        id_string: sorted(keys, key=lambda tk: (-popularity[tk], tk))
        for id_string, keys in buckets.items()
    }
    fingerprint = stable_hash(
        {"strategy": strategy, "corpus": corpus.fingerprint(), "params": params}
    )
    registry = IdRegistry(
        strategy=strategy,
        forward=forward,
        reverse=reverse,
        extra_vocab=extra_vocab,
        fingerprint=fingerprint,
    )
    if strategy == "content":
        normalized: dict[str, str] = {}
        for id_string in reverse:
            normalized.setdefault(_normalize(id_string), id_string)
        registry._normalized = normalized
    return registry


def build_content(corpus: Corpus) -> IdRegistry:
    """IDs are `artist name_track title`; collisions are legal but warned about."""
    forward = {
        tk: f"{corpus.artists[t.artist_key].name}_{t.title}" for tk, t in corpus.tracks.items()
    }
    registry = _finish("content", corpus, forward, (), {})
    collisions = {i: keys for i, keys in registry.reverse.items() if len(keys) > 1}
    if collisions:
        worst = max(collisions.values(), key=len)
        logger.warning(
            "content IDs collide for %d tracks across %d IDs (largest bucket %d: %r); "
            "these tracks are not uniquely identified",
            sum(len(k) for k in collisions.values()), len(collisions), len(worst), worst,
        )
    return registry


def build_track_int(corpus: Corpus, seed: int = 0, counter_base: int = DEFAULT_COUNTER_BASE) -> IdRegistry:
    """Each track gets a distinct random integer, rendered as plain digits."""
    keys = sorted(corpus.tracks)
    rng = np.random.default_rng(seed)
    ints = rng.permutation(len(keys)) + counter_base
    forward = {tk: str(int(v)) for tk, v in zip(keys, ints)}
    return _finish("track-int", corpus, forward, (), {"seed": seed, "base": counter_base})


def _artist_ints(corpus: Corpus, seed: int, counter_base: int) -> dict[str, int]:
    keys = sorted(corpus.artists)
    rng = np.random.default_rng(seed)
    ints = rng.permutation(len(keys)) + counter_base
    return {ak: int(v) for ak, v in zip(keys, ints)}


def _track_sequences(corpus: Corpus, counter_base: int) -> dict[str, int]:
    """Per-artist sequential counters in order of first appearance in train
    pairs (query order, then label order); tracks unseen in train follow in
    ascending track_key order."""
    first_seen: list[str] = []
    seen: set[str] = set()
    for q in corpus.train_queries:
        for tk in q.relevant_track_keys:
            if tk not in seen:
                seen.add(tk)
                first_seen.append(tk)
    for tk in sorted(corpus.tracks):
        if tk not in seen:
            seen.add(tk)
            first_seen.append(tk)

    counters: dict[str, int] = {}
    sequences: dict[str, int] = {}
    for tk in first_seen:
        ak = corpus.tracks[tk].artist_key
        nxt = counters.get(ak, counter_base)
        sequences[tk] = nxt
        counters[ak] = nxt + 1
    return sequences


def build_artist_int_track_seq(
    corpus: Corpus, seed: int = 0, counter_base: int = DEFAULT_COUNTER_BASE
) -> IdRegistry:
    """`<artist int>_<track sequence>` with both sides rendered as digits."""
    artist_ints = _artist_ints(corpus, seed, counter_base)
    seqs = _track_sequences(corpus, counter_base)
    forward = {
        tk: f"{artist_ints[t.artist_key]}_{seqs[tk]}" for tk, t in corpus.tracks.items()
    }
    return _finish(
        "artist-int-track-seq", corpus, forward, (), {"seed": seed, "base": counter_base}
    )


def build_artist_iid_track_seq(
    corpus: Corpus,
    top_k: int = 50000,
    seed: int = 0,
    counter_base: int = DEFAULT_COUNTER_BASE,
) -> IdRegistry:
    """Like artist-int-track-seq, but the top-K popular artists' integers are
    single vocabulary tokens (`<1001>_1001`)."""
    if top_k < 1:
        raise ConfigError(f"top_k must be >= 1, got {top_k}")
    artist_ints = _artist_ints(corpus, seed, counter_base)
    seqs = _track_sequences(corpus, counter_base)

    artist_pop: dict[str, int] = {ak: 0 for ak in corpus.artists}
    for t in corpus.tracks.values():
        artist_pop[t.artist_key] += t.popularity
    ranked = sorted(corpus.artists, key=lambda ak: (-artist_pop[ak], ak))
    promoted = set(ranked[:top_k])
    extra_vocab = tuple(f"<{artist_ints[ak]}>" for ak in ranked[:top_k])

    forward = {}
    for tk, t in corpus.tracks.items():
        head = (
            f"<{artist_ints[t.artist_key]}>"
            if t.artist_key in promoted
            else str(artist_ints[t.artist_key])
        )
        forward[tk] = f"{head}_{seqs[tk]}"
    return _finish(
        "artist-iid-track-seq", corpus, forward, extra_vocab,
        {"seed": seed, "base": counter_base, "top_k": top_k},
    )


def build_semantic(corpus: Corpus, table: EmbeddingTable, dictionary: Dictionary) -> IdRegistry:
    """Learned sparse-coding IDs; tracks without an embedding fall back to a
    digits ID so the registry stays total over the corpus."""
    ids = assign_semantic_ids(table, dictionary)
    missing = sorted(set(corpus.tracks) - set(ids))
    forward = dict(ids)
    for offset, tk in enumerate(missing):
        forward[tk] = str(DEFAULT_COUNTER_BASE + len(ids) + offset)
    if missing:
        logger.warning("%d tracks lack embeddings; assigned integer fallback IDs", len(missing))
    colliding, largest = collision_stats(ids)
    logger.info(
        "semantic IDs: %d/%d tracks share an ID with another track (largest bucket %d)",
        colliding, len(ids), largest,
    )
    extra_vocab = tuple(token_lexicon(dictionary.s))
    return _finish(
        "semantic", corpus, forward, extra_vocab,
        {
            "s": dictionary.s, "c": dictionary.c, "dict_seed": dictionary.seed,
            "provenance": table.provenance, "table": table.fingerprint(),
        },
    )


def build_registry(
    corpus: Corpus,
    cfg: IdStrategyConfig,
    table: EmbeddingTable | None = None,
    dictionary: Dictionary | None = None,
) -> IdRegistry:
    cfg.validate()
    if cfg.strategy == "content":
        return build_content(corpus)
    if cfg.strategy == "track-int":
        return build_track_int(corpus, cfg.seed, cfg.counter_base)
    if cfg.strategy == "artist-int-track-seq":
        return build_artist_int_track_seq(corpus, cfg.seed, cfg.counter_base)
    if cfg.strategy == "artist-iid-track-seq":
        top_k = min(cfg.top_k_artists, len(corpus.artists))
        return build_artist_iid_track_seq(corpus, top_k, cfg.seed, cfg.counter_base)
    if table is None or dictionary is None:
        raise ConfigError("semantic strategy needs an embedding table and a dictionary")
    return build_semantic(corpus, table, dictionary)


def resolve(registry: IdRegistry, id_string: str) -> list[str]:
    return registry.resolve(id_string)


def save_registry(registry: IdRegistry, path: str | Path) -> None:
    lines = [f"{registry.strategy} {registry.fingerprint}"]
    # Rows grouped by ID in bucket (popularity) order so a lossless reverse
    # map can be rebuilt on load without the corpus at hand.
    for id_string in registry.reverse:
        for tk in registry.reverse[id_string]:
            lines.append(f"{tk}\t{id_string}")
    lines.append("#VOCAB")
    lines.extend(registry.extra_vocab)
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_registry(path: str | Path) -> IdRegistry:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split(" ", 1)
        if len(header) != 2 or header[0] not in STRATEGIES:
            raise DataError(f"{path}: bad registry header")
        strategy, fingerprint = header
        forward: dict[str, str] = {}
        reverse: dict[str, list[str]] = {}
        extra_vocab: list[str] = []
        in_vocab = False
        for lineno, raw in enumerate(fh, start=2):
            line = raw.rstrip("\n")
            if not line:
                continue
            if line == "#VOCAB":
                in_vocab = True
                continue
            if in_vocab:
                extra_vocab.append(line)
                continue
            tk, sep, id_string = line.partition("\t")
            if not sep:
                raise DataError(f"{path}:{lineno}: expected tab-separated row")
            if tk in forward:
                raise DataError(f"{path}:{lineno}: duplicate track_key {tk!r}")
            forward[tk] = id_string
            reverse.setdefault(id_string, []).append(tk)
    registry = IdRegistry(
        strategy=strategy, forward=forward, reverse=reverse,
        extra_vocab=tuple(extra_vocab), fingerprint=fingerprint,
    )
    if strategy == "content":
        normalized: dict[str, str] = {}
        for id_string in reverse:
            normalized.setdefault(_normalize(id_string), id_string)
        registry._normalized = normalized
    return registry
