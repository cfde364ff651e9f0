import numpy as np
import pytest

from promptrec._util import ConfigError
from promptrec.corpus import TURN_SEPARATOR
from promptrec.embeddings import SkipgramConfig, train_skipgram
from promptrec.id_registry import (
    build_artist_iid_track_seq,
    build_artist_int_track_seq,
    build_content,
    build_semantic,
    build_track_int,
)
from promptrec.lm import Tokenizer, fit_tokenizer
from promptrec.semantic_ids import learn_dictionary


@pytest.fixture(scope="module")
def corpus_texts(small_corpus):
    return [q.text for q in small_corpus.train_queries]


class TestBasics:
    def test_roundtrip_plain_text(self, corpus_texts):
        tok = fit_tokenizer(corpus_texts, None, base_vocab_size=500)
        for text in corpus_texts[:50]:
            assert tok.decode(tok.encode(text)) == text

    def test_turn_separator(self, corpus_texts):
        tok = fit_tokenizer(corpus_texts, None, base_vocab_size=500)
        text = "rock anthems | more rock please"
        ids = tok.encode(text)
        assert tok.sep_id in ids
        assert ids.count(tok.sep_id) == 1
        assert tok.decode(ids) == text

    def test_vocab_size_too_small(self, corpus_texts):
        with pytest.raises(ConfigError, match="character inventory"):
            fit_tokenizer(corpus_texts, None, base_vocab_size=5)

    def test_deterministic(self, corpus_texts):
        a = fit_tokenizer(corpus_texts, None, base_vocab_size=400)
        b = fit_tokenizer(corpus_texts, None, base_vocab_size=400)
        assert a.symbols == b.symbols and a.merges == b.merges

    def test_serialization_roundtrip(self, corpus_texts):
        tok = fit_tokenizer(corpus_texts, None, base_vocab_size=400)
        clone = Tokenizer.from_dict(tok.to_dict())
        text = corpus_texts[0]
        assert clone.encode(text) == tok.encode(text)


class TestDigitSplitting:
    def test_integer_id_tokenizes_digit_by_digit(self, small_corpus, corpus_texts):
        registry = build_artist_int_track_seq(small_corpus, seed=0)
        tok = fit_tokenizer(corpus_texts, registry)
        ids = tok.encode("1001_1001")
        strings = [tok.token_string(i) for i in ids]
        assert strings == ["1", "0", "0", "1", "_", "1", "0", "0", "1"]

    def test_track_int_ids_digit_split(self, small_corpus, corpus_texts):
        registry = build_track_int(small_corpus, seed=0)
        tok = fit_tokenizer(corpus_texts, registry)
        some_id = next(iter(registry.forward.values()))
        strings = [tok.token_string(i) for i in tok.encode(some_id)]
        assert strings == list(some_id)

    def test_no_digit_merges_learned(self, corpus_texts):
        texts = corpus_texts + ["1001 1001 1001 1001", "2024 2024 2024"]
        tok = fit_tokenizer(texts, None, base_vocab_size=600)
        for left, right in tok.merges:
            assert not any(ch.isdigit() for ch in left + right)


class TestExtendedVocab:
    def test_semantic_id_three_tokens(self, small_corpus, corpus_texts):
        table = train_skipgram(small_corpus.train_playlists, SkipgramConfig(dim=16, epochs=2, seed=1))
        dictionary = learn_dictionary(table, s=24, c=3, iters=5, seed=2)
        registry = build_semantic(small_corpus, table, dictionary)
        tok = fit_tokenizer(corpus_texts, registry)
        ids = tok.encode("<+4><-0><+7>")
        assert len(ids) == 3
        assert tok.decode(ids) == "<+4><-0><+7>"

    def test_artist_token_atomic(self, small_corpus, corpus_texts):
        registry = build_artist_iid_track_seq(small_corpus, top_k=5, seed=0)
        tok = fit_tokenizer(corpus_texts, registry)
        some_id = next(v for v in registry.forward.values() if v.startswith("<"))
        head = some_id.split("_")[0]
        ids = tok.encode(some_id)
        assert tok.token_string(ids[0]) == head
        assert tok.decode(ids) == some_id

    def test_vocab_size_composition(self, small_corpus, corpus_texts):
        registry = build_artist_iid_track_seq(small_corpus, top_k=5, seed=0)
        plain = fit_tokenizer(corpus_texts, None)
        extended = fit_tokenizer(corpus_texts, registry)
        assert extended.vocab_size >= plain.vocab_size + len(registry.extra_vocab)


class TestRegistryRoundTrips:
    @pytest.mark.parametrize("builder", ["content", "track-int", "artist-iid"])
    def test_encode_decode_identity_on_all_ids(self, small_corpus, corpus_texts, builder):
        registry = {
            "content": build_content,
            "track-int": lambda c: build_track_int(c, seed=0),
            "artist-iid": lambda c: build_artist_iid_track_seq(c, top_k=8, seed=0),
        }[builder](small_corpus)
        tok = fit_tokenizer(corpus_texts, registry)
        for id_string in registry.forward.values():
            assert tok.decode(tok.encode(id_string)) == id_string

    def test_content_ids_longer_than_semantic(self, small_corpus, corpus_texts):
        content = build_content(small_corpus)
        table = train_skipgram(small_corpus.train_playlists, SkipgramConfig(dim=16, epochs=2, seed=1))
        dictionary = learn_dictionary(table, s=24, c=3, iters=5, seed=2)
        semantic = build_semantic(small_corpus, table, dictionary)

        tok_content = fit_tokenizer(corpus_texts, content)
        tok_semantic = fit_tokenizer(corpus_texts, semantic)
        content_lens = [len(tok_content.encode(v)) for v in content.forward.values()]
        semantic_lens = [len(tok_semantic.encode(v)) for v in semantic.forward.values()]
        assert np.mean(semantic_lens) == 3.0
        assert np.mean(content_lens) >= 3 * np.mean(semantic_lens)


class TestSpacingEdgeCases:
    def test_double_space_roundtrip(self):
        texts = ["a  b", "the quick brown fox jumps over a lazy dog"]
        tok = fit_tokenizer(texts, None, base_vocab_size=64)
        for text in ("a  b", "a b", " leading", "trailing ", "fox  jumps   over"):
            assert tok.decode(tok.encode(text)) == text
