"""Planted-corpus properties of embeddings and learned IDs (no model training)."""

import numpy as np
import pytest

from promptrec.embeddings import SkipgramConfig, train_skipgram
from promptrec.semantic_ids import assign_semantic_ids, collision_stats, learn_dictionary


@pytest.fixture(scope="module")
def planted(default_corpus):
    table = train_skipgram(default_corpus.train_playlists, SkipgramConfig(seed=9))
    dictionary = learn_dictionary(table, s=64, c=3, iters=30, seed=11)
    return default_corpus, table, dictionary


def _genre_of(corpus):
    return {tk: int(t.artist_key[1:]) // 25 for tk, t in corpus.tracks.items()}


class TestCfStructure:
    def test_genre_separation_margin(self, planted):
        corpus, table, _ = planted
        genre_of = _genre_of(corpus)
        keys = list(table.rows)
        M = np.stack([table.rows[k] for k in keys]).astype(np.float64)
        M /= np.linalg.norm(M, axis=1, keepdims=True)
        rng = np.random.default_rng(0)
        same, cross = [], []
        while len(same) < 1000 or len(cross) < 1000:
            i, j = rng.integers(len(keys), size=2)
            if i == j:
                continue
            cos = float(M[i] @ M[j])
            (same if genre_of[keys[i]] == genre_of[keys[j]] else cross).append(cos)
        assert np.mean(same[:1000]) - np.mean(cross[:1000]) >= 0.2

    def test_relative_reconstruction_error(self, planted):
        _, table, dictionary = planted
        keys, X = table.matrix()
        support_err = np.sqrt(dictionary.final_error)
        mean_norm = float(np.linalg.norm(X, axis=1).mean())
        assert support_err / mean_norm < 0.6


class TestSemanticIdStructure:
    def test_prefix_similarity_margin(self, planted):
        corpus, table, dictionary = planted
        ids = assign_semantic_ids(table, dictionary)
        keys = list(ids)
        M = np.stack([table.rows[k] for k in keys]).astype(np.float64)
        M /= np.linalg.norm(M, axis=1, keepdims=True)
        first = {k: ids[k][: ids[k].index(">") + 1] for k in keys}

        by_first: dict[str, list[int]] = {}
        for i, k in enumerate(keys):
            by_first.setdefault(first[k], []).append(i)

        rng = np.random.default_rng(1)
        shared = []
        for members in by_first.values():
            if len(members) < 2:
                continue
            for _ in range(min(40, len(members) * 2)):
                i, j = rng.choice(members, size=2, replace=False)
                shared.append(float(M[i] @ M[j]))
        random_pairs = []
        for _ in range(len(shared)):
            i, j = rng.integers(len(keys), size=2)
            if i != j:
                random_pairs.append(float(M[i] @ M[j]))
        assert np.mean(shared) - np.mean(random_pairs) >= 0.1

    def test_collision_rate_and_bucket_cap(self, planted):
        _, table, dictionary = planted
        ids = assign_semantic_ids(table, dictionary)
        colliding, largest = collision_stats(ids)
        assert colliding / len(ids) < 0.30
        assert largest <= 20

    def test_dictionary_at_item_count_nearly_collision_free(self, planted):
        # the spec sketches s = 2*|tracks|, but learning requires s <= items;
        # at the boundary s == items every track can claim its own atom
        _, table, _ = planted
        n = len(table.rows)
        dictionary = learn_dictionary(table, s=n, c=3, iters=3, seed=5)
        ids = assign_semantic_ids(table, dictionary)
        colliding, _ = collision_stats(ids)
        assert colliding / len(ids) < 0.05
