"""Retrieval baselines over track pseudo-documents.

Each track is represented by the titles of the train playlists it appears in,
comma-space joined in train order. Popularity ignores the query entirely; BM25
scores the documents through an inverted index; the dense baseline ranks by
cosine in the deterministic text-embedding space, optionally fine-tuning a
linear projection with in-batch-negative cross-entropy.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from ._util import ConfigError, DataError
from .corpus import Corpus
from .decoder import RankedList
from .embeddings import TextEncoder

BM25_K1 = 1.2
BM25_B = 0.75

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class TrackDocument:
    track_key: str
    text: str


def build_documents(corpus: Corpus) -> list[TrackDocument]:
    """One pseudo-document per track: train playlist titles, comma-space joined."""
    titles: dict[str, list[str]] = {tk: [] for tk in corpus.tracks}
    for playlist in corpus.train_playlists:
        for tk in playlist.track_keys:
            titles[tk].append(playlist.title)
    return [TrackDocument(tk, ", ".join(parts)) for tk, parts in titles.items()]


class InvertedIndex:
    def __init__(self, documents: list[TrackDocument]):
        self.doc_keys = [d.track_key for d in documents]
        self.postings: dict[str, list[tuple[str, int]]] = {}
        self.doc_len: dict[str, int] = {}
        for doc in documents:
            terms = tokenize(doc.text)
            self.doc_len[doc.track_key] = len(terms)
            counts: dict[str, int] = {}
            for term in terms:
                counts[term] = counts.get(term, 0) + 1
            for term, tf in counts.items():
                self.postings.setdefault(term, []).append((doc.track_key, tf))
        for term in self.postings:
            self.postings[term].sort()
        self.n_docs = len(documents)
        self.avg_len = (
            sum(self.doc_len.values()) / self.n_docs if self.n_docs else 0.0
        )

    def idf(self, term: str) -> float:
        df = len(self.postings.get(term, ()))
        return math.log((self.n_docs - df + 0.5) / (df + 0.5) + 1.0)


def bm25_score(index: InvertedIndex, query_terms: list[str], track_key: str) -> float:
    """Direct BM25 evaluation for one document; duplicate query terms accumulate."""
    score = 0.0
    dl = index.doc_len.get(track_key, 0)
    for term in query_terms:
        tf = 0
        for key, f in index.postings.get(term, ()):
            if key == track_key:
                tf = f
                break
        if tf == 0:
            continue
        norm = tf * (BM25_K1 + 1.0) / (tf + BM25_K1 * (1.0 - BM25_B + BM25_B * dl / index.avg_len))
        score += index.idf(term) * norm
    return score


def bm25_retrieve(index: InvertedIndex, query: str, k: int, corpus: Corpus | None = None) -> RankedList:
    """Top-k documents by BM25; an empty query falls back to popularity."""
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    terms = tokenize(query)
    if not terms:
        if corpus is None:
            return RankedList(())
        return popularity_retrieve(corpus, k)
    scores: dict[str, float] = {}
    for term in terms:
        idf = index.idf(term)
        for track_key, tf in index.postings.get(term, ()):
            dl = index.doc_len[track_key]
            norm = tf * (BM25_K1 + 1.0) / (
                tf + BM25_K1 * (1.0 - BM25_B + BM25_B * dl / index.avg_len)
            )
            scores[track_key] = scores.get(track_key, 0.0) + idf * norm
    ranked = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))[:k]
    return RankedList(tuple(ranked))


def popularity_retrieve(corpus: Corpus, k: int) -> RankedList:
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    ranked = sorted(
        corpus.tracks.values(), key=lambda t: (-t.popularity, t.track_key)
    )[:k]
    return RankedList(tuple((t.track_key, float(t.popularity)) for t in ranked))


class DenseRetriever:
    """Cosine ranking in the projected TF-IDF space.

    Zero-shot mode scores raw encoder vectors. `fine_tune` learns a square
    projection with multi-class cross-entropy over in-batch cosine scores,
    pairing every train query with each of its relevant documents.
    """

    def __init__(self, corpus: Corpus, dim: int = 64, seed: int = 0):
        self.documents = build_documents(corpus)
        if not self.documents:
            raise DataError("no documents to index")
        self.keys = [d.track_key for d in self.documents]
        self.encoder = TextEncoder(dim=dim, seed=seed).fit([d.text for d in self.documents])
        self.doc_vecs = self.encoder.encode([d.text for d in self.documents]).astype(np.float64)
        self.dim = dim
        self.seed = seed
        self.projection: np.ndarray | None = None  # set by fine_tune
        self._proj_docs: np.ndarray | None = None

    def _normalized_doc_matrix(self) -> np.ndarray:
        if self.projection is None:
            return self.doc_vecs
        if self._proj_docs is None:
            proj = self.doc_vecs @ self.projection
            norms = np.linalg.norm(proj, axis=1, keepdims=True)
            self._proj_docs = np.divide(proj, norms, out=np.zeros_like(proj), where=norms > 0)
        return self._proj_docs

    def retrieve(self, query: str, k: int) -> RankedList:
        if k < 1:
            raise ConfigError(f"k must be >= 1, got {k}")
        q = self.encoder.encode([query])[0].astype(np.float64)
        if self.projection is not None:
            q = q @ self.projection
            norm = np.linalg.norm(q)
            if norm > 0:
                q = q / norm
        scores = self._normalized_doc_matrix() @ q
        order = sorted(range(len(self.keys)), key=lambda i: (-scores[i], self.keys[i]))[:k]
        return RankedList(tuple((self.keys[i], float(scores[i])) for i in order))

    def fine_tune(
        self,
        corpus: Corpus,
        epochs: int = 5,
        batch_size: int = 64,
        lr: float = 0.05,
        scale: float = 20.0,
    ) -> None:
        doc_index = {k: i for i, k in enumerate(self.keys)}
        pairs = [
            (q.text, doc_index[tk])
            for q in corpus.train_queries
            for tk in q.relevant_track_keys
        ]
        if not pairs:
            raise DataError("no training pairs for fine-tuning")
        q_vecs = self.encoder.encode([text for text, _ in pairs]).astype(np.float64)
        d_vecs = self.doc_vecs[[di for _, di in pairs]]

        rng = np.random.default_rng(self.seed)
        W = np.eye(self.dim, dtype=np.float64)
        for _ in range(epochs):
            order = rng.permutation(len(pairs))
            for start in range(0, len(pairs), batch_size):
                idx = order[start: start + batch_size]
                if len(idx) < 2:
                    continue
                Q, D = q_vecs[idx], d_vecs[idx]
                W -= lr * _mnrl_grad(Q, D, W, scale)
        self.projection = W
        self._proj_docs = None


def _mnrl_grad(Q: np.ndarray, D: np.ndarray, W: np.ndarray, scale: float) -> np.ndarray:
    """Gradient of in-batch-negative cross-entropy over cosine scores wrt W."""
    B = Q.shape[0]
    U = Q @ W
    V = D @ W
    un = np.linalg.norm(U, axis=1, keepdims=True)
    vn = np.linalg.norm(V, axis=1, keepdims=True)
    Uh = np.divide(U, un, out=np.zeros_like(U), where=un > 0)
    Vh = np.divide(V, vn, out=np.zeros_like(V), where=vn > 0)
    S = scale * (Uh @ Vh.T)
    S -= S.max(axis=1, keepdims=True)
    P = np.exp(S)
    P /= P.sum(axis=1, keepdims=True)
    dS = P.copy()
    dS[np.arange(B), np.arange(B)] -= 1.0
    dS *= scale / B
    dUh = dS @ Vh
    dVh = dS.T @ Uh
    # back through the row normalizations
    dU = np.divide(dUh - Uh * (dUh * Uh).sum(axis=1, keepdims=True), un, out=np.zeros_like(U), where=un > 0)
    dV = np.divide(dVh - Vh * (dVh * Vh).sum(axis=1, keepdims=True), vn, out=np.zeros_like(V), where=vn > 0)
    return Q.T @ dU + D.T @ dV


def dense_retrieve(
    corpus: Corpus, query: str, k: int, fine_tuned: bool = False, dim: int = 64, seed: int = 0
) -> RankedList:
    """One-shot convenience wrapper; build a DenseRetriever directly to amortize."""
    retriever = DenseRetriever(corpus, dim=dim, seed=seed)
    if fine_tuned:
        retriever.fine_tune(corpus)
    return retriever.retrieve(query, k)
