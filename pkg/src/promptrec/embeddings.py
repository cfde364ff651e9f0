"""Track embedding tables: co-occurrence skip-gram and deterministic text vectors.

The cf table comes from skip-gram with negative sampling over playlist track
sequences (single-threaded update order, so a seed pins the result exactly).
The text table is TF-IDF over whitespace unigrams followed by a seeded random
projection - a deterministic stand-in for a sentence encoder that preserves
the cf-vs-text comparison without pretrained weights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kernels
from ._util import ConfigError, DataError, atomic_write_text, stable_hash
from .corpus import Corpus, LabeledQuery, Playlist, Track

EMBEDDING_MAGIC = "T2TEMB1"


@dataclass
class EmbeddingTable:
    dim: int
    rows: dict[str, np.ndarray]
    provenance: str  # "cf" or "text"

    def __post_init__(self):
        for key, vec in self.rows.items():
            if vec.shape != (self.dim,):
                raise DataError(f"embedding for {key!r} has shape {vec.shape}, expected ({self.dim},)")
            if not np.all(np.isfinite(vec)):
                raise DataError(f"embedding for {key!r} has non-finite components")

    def matrix(self, keys: Sequence[str] | None = None) -> tuple[list[str], np.ndarray]:
        """Rows stacked in a deterministic order; returns (keys, matrix)."""
        ordered = list(keys) if keys is not None else list(self.rows)
        return ordered, np.stack([self.rows[k] for k in ordered]).astype(np.float64)

    def fingerprint(self) -> str:
        return stable_hash(
            {
                "dim": self.dim,
                "provenance": self.provenance,
                "rows": {k: [float(np.float32(x)) for x in v] for k, v in self.rows.items()},
            }
        )


def save_table(table: EmbeddingTable, path: str | Path) -> None:
    lines = [EMBEDDING_MAGIC, f"{len(table.rows)} {table.dim} {table.provenance}"]
    for key, vec in table.rows.items():
        floats = " ".join(np.format_float_positional(np.float32(x), unique=True, trim="0") for x in vec)
        lines.append(f"{key}\t{floats}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_table(path: str | Path) -> EmbeddingTable:
    with open(path, "r", encoding="utf-8") as fh:
        magic = fh.readline().strip()
        if magic != EMBEDDING_MAGIC:
            raise DataError(f"{path}: bad magic {magic!r}, expected {EMBEDDING_MAGIC!r}")
        header = fh.readline().split()
        if len(header) != 3:
            raise DataError(f"{path}: malformed header")
        count, dim, provenance = int(header[0]), int(header[1]), header[2]
        rows: dict[str, np.ndarray] = {}
        for lineno, line in enumerate(fh, start=3):
            if not line.strip():
                continue
            key, _, rest = line.partition("\t")
            vec = np.array([np.float32(x) for x in rest.split()], dtype=np.float32)
            if vec.shape != (dim,):
                raise DataError(f"{path}:{lineno}: expected {dim} components, got {vec.shape[0]}")
            rows[key] = vec
        if len(rows) != count:
            raise DataError(f"{path}: header promised {count} rows, found {len(rows)}")
    return EmbeddingTable(dim=dim, rows=rows, provenance=provenance)


# ---------------------------------------------------------------------------
# Skip-gram with negative sampling
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SkipgramConfig:
    dim: int = 64
    window: int = 5
    negatives: int = 5
    epochs: int = 5
    lr_start: float = 0.025
    lr_end: float = 1e-4
    subsample: float = 0.0  # frequency threshold; 0 disables
    seed: int = 0

    def validate(self) -> None:
        if self.dim < 8:
            raise ConfigError(f"dim must be >= 8, got {self.dim}")
        if self.window < 1:
            raise ConfigError(f"window must be >= 1, got {self.window}")
        if self.negatives < 1:
            raise ConfigError(f"negatives must be >= 1, got {self.negatives}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")


def _count_pairs(lengths: np.ndarray, window: int) -> int:
    total = 0
    for n in lengths:
        n = int(n)
        for i in range(n):
            total += min(i, window) + min(n - 1 - i, window)
    return total


def train_skipgram(
    playlists: Sequence[Playlist],
    cfg: SkipgramConfig,
    kernel=None,
) -> EmbeddingTable:
    """Learn input-side track vectors from playlist co-occurrence.

    Every ordered (center, context) pair within `cfg.window` of a playlist is
    a positive example; negatives are drawn from the unigram^(3/4)
    distribution. All randomness is pre-drawn from one seeded generator, so a
    given (playlists, cfg, seed) yields a bit-identical table per backend.
    """
    cfg.validate()
    if kernel is None:
        kernel = kernels
    usable = [p for p in playlists if len(p.track_keys) >= 1]
    if not usable or not any(len(p.track_keys) >= 2 for p in usable):
        raise DataError("skip-gram needs at least one playlist with >= 2 tracks")

    vocab: dict[str, int] = {}
    for p in usable:
        for tk in p.track_keys:
            if tk not in vocab:
                vocab[tk] = len(vocab)
    n = len(vocab)

    seqs = [np.array([vocab[tk] for tk in p.track_keys], dtype=np.int32) for p in usable]
    counts = np.zeros(n, dtype=np.int64)
    for s in seqs:
        np.add.at(counts, s, 1)
    noise = counts.astype(np.float64) ** 0.75
    cum = np.cumsum(noise)

    rng = np.random.default_rng(cfg.seed)
    syn0 = ((rng.random((n, cfg.dim), dtype=np.float64) - 0.5) / cfg.dim).astype(np.float32)
    syn1 = np.zeros((n, cfg.dim), dtype=np.float32)

    # Materialize each epoch's (possibly subsampled) stream up front so the
    # total step count - and with it the linear lr decay - is fixed before
    # any update runs.
    epoch_streams: list[tuple[np.ndarray, np.ndarray]] = []
    for _ in range(cfg.epochs):
        if cfg.subsample > 0.0:
            total = counts.sum()
            freq = counts / total
            keep = np.minimum(1.0, np.sqrt(cfg.subsample / np.maximum(freq, 1e-12)))
            kept_seqs = []
            for s in seqs:
                mask = rng.random(len(s)) < keep[s]
                kept = s[mask]
                if len(kept) >= 1:
                    kept_seqs.append(kept)
            streams = kept_seqs if kept_seqs else [np.empty(0, dtype=np.int32)]
        else:
            streams = seqs
        seq = np.concatenate(streams) if streams else np.empty(0, dtype=np.int32)
        offsets = np.zeros(len(streams) + 1, dtype=np.int64)
        np.cumsum([len(s) for s in streams], out=offsets[1:])
        epoch_streams.append((seq.astype(np.int32), offsets))

    pair_counts = [_count_pairs(np.diff(off), cfg.window) for _, off in epoch_streams]
    total_steps = sum(pair_counts)

    step0 = 0
    for (seq, offsets), n_pairs in zip(epoch_streams, pair_counts):
        draws = rng.random(n_pairs * cfg.negatives)
        negs = np.searchsorted(cum, draws * cum[-1], side="right").astype(np.int32)
        kernel.train_epoch(
            syn0, syn1, seq, offsets, cfg.window, negs, cfg.negatives,
            cfg.lr_start, cfg.lr_end, step0, total_steps,
        )
        step0 += n_pairs

    rows = {tk: syn0[idx].copy() for tk, idx in vocab.items()}
    return EmbeddingTable(dim=cfg.dim, rows=rows, provenance="cf")


def skipgram_pair_loss(
    center: np.ndarray, context: np.ndarray, negatives: np.ndarray
) -> tuple[float, np.ndarray, np.ndarray, np.ndarray]:
    """Negative-sampling loss for one example with analytic gradients.

    Returns (loss, d_center, d_context, d_negatives); float64 throughout, for
    checking against finite differences.
    """
    center = np.asarray(center, dtype=np.float64)
    context = np.asarray(context, dtype=np.float64)
    negatives = np.asarray(negatives, dtype=np.float64)

    def sigmoid(x: float) -> float:
        return 1.0 / (1.0 + math.exp(-x))

    f_pos = sigmoid(float(center @ context))
    loss = -math.log(max(f_pos, 1e-300))
    d_center = (f_pos - 1.0) * context
    d_context = (f_pos - 1.0) * center
    d_negatives = np.zeros_like(negatives)
    for i in range(negatives.shape[0]):
        f_neg = sigmoid(float(center @ negatives[i]))
        loss -= math.log(max(1.0 - f_neg, 1e-300))
        d_center = d_center + f_neg * negatives[i]
        d_negatives[i] = f_neg * center
    return loss, d_center, d_context, d_negatives


# ---------------------------------------------------------------------------
# Deterministic text embeddings
# ---------------------------------------------------------------------------

def track_text(track: Track, train_queries: Sequence[LabeledQuery]) -> str:
    """Concatenation of every train query text whose relevant set holds the track."""
    parts = [q.text for q in train_queries if track.track_key in q.relevant_track_keys]
    return " ".join(parts)


class TextEncoder:
    """TF-IDF over lowercased whitespace unigrams + seeded random projection.

    Fit once on a document collection; `encode` then maps any text (queries
    included) into the same space. Vectors are L2-normalized; empty or fully
    out-of-vocabulary text maps to the zero vector.
    """

    def __init__(self, dim: int = 64, seed: int = 0):
        if dim < 8:
            raise ConfigError(f"dim must be >= 8, got {dim}")
        self.dim = dim
        self.seed = seed
        self.vocab: dict[str, int] = {}
        self.idf: np.ndarray | None = None
        self._projection: np.ndarray | None = None

    @staticmethod
    def _terms(text: str) -> list[str]:
        return text.lower().split()

    def fit(self, texts: Sequence[str]) -> "TextEncoder":
        df: dict[str, int] = {}
        for text in texts:
            for term in set(self._terms(text)):
                df[term] = df.get(term, 0) + 1
        self.vocab = {term: i for i, term in enumerate(sorted(df))}
        n = len(texts)
        self.idf = np.array(
            [math.log((1 + n) / (1 + df[t])) + 1.0 for t in sorted(df)], dtype=np.float64
        )
        rng = np.random.default_rng(self.seed)
        self._projection = rng.standard_normal((len(self.vocab), self.dim)) / math.sqrt(self.dim)
        return self

    def encode(self, texts: Sequence[str]) -> np.ndarray:
        if self._projection is None:
            raise RuntimeError("TextEncoder.encode called before fit")
        out = np.zeros((len(texts), self.dim), dtype=np.float64)
        for row, text in enumerate(texts):
            tf: dict[int, int] = {}
            for term in self._terms(text):
                idx = self.vocab.get(term)
                if idx is not None:
                    tf[idx] = tf.get(idx, 0) + 1
            if not tf:
                continue
            idxs = np.array(sorted(tf), dtype=np.int64)
            weights = np.array([tf[i] for i in idxs], dtype=np.float64) * self.idf[idxs]
            vec = weights @ self._projection[idxs]
            norm = float(np.linalg.norm(vec))
            if norm > 0:
                out[row] = vec / norm
        return out.astype(np.float32)


def embed_texts(texts, dim: int = 64, seed: int = 0) -> EmbeddingTable:
    """Text-provenance embedding table; `texts` is a key->text mapping or a
    plain sequence (then rows are keyed by position)."""
    if isinstance(texts, dict):
        keys, values = list(texts), list(texts.values())
    else:
        values = list(texts)
        keys = [str(i) for i in range(len(values))]
    encoder = TextEncoder(dim=dim, seed=seed).fit(values)
    vectors = encoder.encode(values)
    return EmbeddingTable(dim=dim, rows={k: vectors[i] for i, k in enumerate(keys)}, provenance="text")


def build_text_table(corpus: Corpus, dim: int = 64, seed: int = 0) -> EmbeddingTable:
    # Inverted pass over queries; same result as track_text per track.
    parts: dict[str, list[str]] = {tk: [] for tk in corpus.tracks}
    for q in corpus.train_queries:
        text = q.text
        for tk in q.relevant_track_keys:
            parts[tk].append(text)
    return embed_texts({tk: " ".join(p) for tk, p in parts.items()}, dim=dim, seed=seed)


def build_cf_table(corpus: Corpus, cfg: SkipgramConfig) -> EmbeddingTable:
    return train_skipgram(corpus.train_playlists, cfg)
