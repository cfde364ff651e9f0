import math

import numpy as np
import pytest

from promptrec._util import ConfigError
from promptrec.baselines import (
    BM25_B,
    BM25_K1,
    DenseRetriever,
    InvertedIndex,
    TrackDocument,
    bm25_retrieve,
    bm25_score,
    build_documents,
    dense_retrieve,
    popularity_retrieve,
    tokenize,
)
from promptrec.corpus import Artist, Corpus, LabeledQuery, Playlist, Track


@pytest.fixture()
def doc_corpus() -> Corpus:
    artists = [Artist("a1", "Ann"), Artist("a2", "Bob"), Artist("a3", "Cyd")]
    tracks = [
        Track("t1", "a1", "one"),
        Track("t2", "a2", "two"),
        Track("t3", "a3", "three"),
    ]
    playlists = [
        Playlist("p1", "rock", ("t1", "t2")),
        Playlist("p2", "metal", ("t1",)),
        Playlist("p3", "guitar solos", ("t1", "t3")),
    ]
    queries = [LabeledQuery(("rock",), ("t1", "t2"), playlist_key="p1")]
    return Corpus.build(artists, tracks, playlists, queries)


class TestDocuments:
    def test_concatenation_in_train_order(self, doc_corpus):
        docs = {d.track_key: d.text for d in build_documents(doc_corpus)}
        assert docs["t1"] == "rock, metal, guitar solos"
        assert docs["t2"] == "rock"
        assert docs["t3"] == "guitar solos"

    def test_track_in_no_playlist_empty(self):
        artists = [Artist("a1", "Ann")]
        tracks = [Track("t1", "a1", "one"), Track("t2", "a1", "two")]
        playlists = [Playlist("p1", "rock", ("t1",))]
        queries = [LabeledQuery(("rock",), ("t1",), playlist_key="p1")]
        corpus = Corpus.build(artists, tracks, playlists, queries)
        docs = {d.track_key: d.text for d in build_documents(corpus)}
        assert docs["t2"] == ""


class TestBM25:
    def test_hand_evaluated_fixture(self):
        # Three docs; the query term appears once in one average-length doc.
        docs = [
            TrackDocument("d1", "alpha beta gamma"),
            TrackDocument("d2", "delta epsilon zeta"),
            TrackDocument("d3", "eta theta iota"),
        ]
        index = InvertedIndex(docs)
        expected_idf = math.log((3 - 1 + 0.5) / (1 + 0.5) + 1)
        expected = expected_idf * (1 * (BM25_K1 + 1)) / (1 + BM25_K1)
        ranked = bm25_retrieve(index, "alpha", k=3)
        assert ranked.track_keys == ["d1"]
        assert abs(ranked.entries[0][1] - expected) < 1e-9
        assert abs(expected - 0.9808292530117263) < 1e-9
        # direct-evaluation oracle agrees with the inverted-index path
        assert abs(bm25_score(index, tokenize("alpha"), "d1") - expected) < 1e-9

    def test_five_document_oracle(self):
        rng = np.random.default_rng(3)
        words = ["w%d" % i for i in range(12)]
        docs = [
            TrackDocument(f"d{i}", " ".join(rng.choice(words, size=rng.integers(3, 9))))
            for i in range(5)
        ]
        index = InvertedIndex(docs)
        query = "w1 w3 w3 w7"
        ranked = bm25_retrieve(index, query, k=5)
        for track_key, score in ranked.entries:
            assert abs(score - bm25_score(index, tokenize(query), track_key)) < 1e-9

    def test_absent_term_empty_result(self):
        index = InvertedIndex([TrackDocument("d1", "alpha beta")])
        assert len(bm25_retrieve(index, "missing", k=3)) == 0

    def test_duplicate_terms_accumulate(self):
        index = InvertedIndex(
            [TrackDocument("d1", "alpha beta"), TrackDocument("d2", "beta gamma")]
        )
        single = bm25_retrieve(index, "alpha", k=1).entries[0][1]
        double = bm25_retrieve(index, "alpha alpha", k=1).entries[0][1]
        assert abs(double - 2 * single) < 1e-9

    def test_empty_query_popularity_fallback(self, doc_corpus):
        index = InvertedIndex(build_documents(doc_corpus))
        ranked = bm25_retrieve(index, "...", k=2, corpus=doc_corpus)
        assert ranked.track_keys == popularity_retrieve(doc_corpus, 2).track_keys

    def test_tie_break_ascending_key(self):
        index = InvertedIndex(
            [TrackDocument("dz", "alpha"), TrackDocument("da", "alpha")]
        )
        assert bm25_retrieve(index, "alpha", k=2).track_keys == ["da", "dz"]


class TestPopularity:
    def test_ordering_and_ties(self, doc_corpus):
        # popularity: t1 -> 3, t2 -> 1, t3 -> 1 (tie broken by key)
        ranked = popularity_retrieve(doc_corpus, k=2)
        assert ranked.track_keys == ["t1", "t2"]

    def test_k_larger_than_catalog(self, doc_corpus):
        assert len(popularity_retrieve(doc_corpus, k=50)) == 3

    def test_query_invariant(self, doc_corpus):
        a = popularity_retrieve(doc_corpus, k=3)
        b = popularity_retrieve(doc_corpus, k=3)
        assert a.entries == b.entries


class TestDense:
    def test_query_identical_to_document_ranks_first(self, doc_corpus):
        retriever = DenseRetriever(doc_corpus, dim=32, seed=0)
        ranked = retriever.retrieve("rock, metal, guitar solos", k=3)
        assert ranked.track_keys[0] == "t1"
        assert ranked.entries[0][1] > 0.99

    def test_deterministic(self, doc_corpus):
        a = dense_retrieve(doc_corpus, "guitar", 3, fine_tuned=False)
        b = dense_retrieve(doc_corpus, "guitar", 3, fine_tuned=False)
        assert a.entries == b.entries

    def test_fine_tune_improves_training_pairs(self, small_corpus):
        zs = DenseRetriever(small_corpus, dim=64, seed=0)
        ft = DenseRetriever(small_corpus, dim=64, seed=0)
        ft.fine_tune(small_corpus, epochs=4)

        def mean_hits(retriever):
            total = 0.0
            queries = small_corpus.test_queries
            for q in queries:
                ranked = retriever.retrieve(q.text, 10)
                relevant = set(q.relevant_track_keys)
                total += len(set(ranked.track_keys) & relevant) / min(10, len(relevant))
            return total / len(queries)

        assert mean_hits(ft) >= mean_hits(zs) - 0.01

    def test_mnrl_gradient_matches_finite_difference(self):
        from promptrec.baselines import _mnrl_grad

        rng = np.random.default_rng(0)
        Q = rng.standard_normal((5, 6))
        D = rng.standard_normal((5, 6))
        W = np.eye(6) + 0.01 * rng.standard_normal((6, 6))

        def loss(Wx):
            U, V = Q @ Wx, D @ Wx
            Uh = U / np.linalg.norm(U, axis=1, keepdims=True)
            Vh = V / np.linalg.norm(V, axis=1, keepdims=True)
            S = 20.0 * (Uh @ Vh.T)
            S = S - S.max(axis=1, keepdims=True)
            logp = S - np.log(np.exp(S).sum(axis=1, keepdims=True))
            return -np.mean(np.diag(logp))

        grad = _mnrl_grad(Q, D, W, 20.0)
        eps = 1e-6
        for idx in [(0, 0), (2, 3), (5, 5)]:
            Wp = W.copy(); Wp[idx] += eps
            Wm = W.copy(); Wm[idx] -= eps
            fd = (loss(Wp) - loss(Wm)) / (2 * eps)
            assert abs(fd - grad[idx]) < 1e-6 * max(1.0, abs(fd))
