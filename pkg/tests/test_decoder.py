import numpy as np
import pytest

from promptrec._util import ConfigError, FingerprintMismatch
from promptrec.decoder import (
    DecodeConfig,
    Hypothesis,
    IdTrie,
    RankedList,
    diverse_beam_search,
    rank_hypotheses,
    recommend,
)
from promptrec.id_registry import IdRegistry
from promptrec.lm import Checkpoint, ModelConfig, TrainConfig, fit_tokenizer, train


@pytest.fixture(scope="module")
def toy_checkpoint():
    """A tiny trained model over 12 atomic-target pairs plus its registry."""
    texts = [
        "upbeat rock anthems", "slow jazz evening", "electronic dance party",
        "calm folk morning", "heavy metal drive", "classical study focus",
        "country road trip", "reggae beach day", "soul kitchen groove",
        "ambient sleep drift", "latin fiesta night", "punk basement show",
    ]
    ids = [f"<g{i // 2}><s{i % 2}>" for i in range(12)]  # two-token ids, shared genre head

    registry = IdRegistry(
        strategy="semantic",
        forward={f"k{i}": ids[i] for i in range(12)},
        reverse={ids[i]: [f"k{i}"] for i in range(12)},
        extra_vocab=tuple(sorted({f"<g{i}>" for i in range(6)} | {f"<s{j}>" for j in range(2)})),
        fingerprint="toyfp",
    )
    # make one collision bucket: two tracks share an id, popularity order fixed
    registry.forward["k12"] = ids[0]
    registry.reverse[ids[0]] = ["k12", "k0"]

    tokenizer = fit_tokenizer(texts, registry, base_vocab_size=200)
    cfg = ModelConfig(layers=1, heads=2, width=32, ff_width=64, dropout=0.0,
                      max_input_len=24, max_target_len=4, seed=0)
    pairs = list(zip(texts, ids))
    model, losses = train(pairs, tokenizer, cfg, TrainConfig(epochs=150, lr=3e-3, batch_size=12, seed=0))
    ckpt = Checkpoint.from_training(tokenizer, model, TrainConfig(), registry.fingerprint, losses)
    return ckpt, registry, texts, ids


class TestTrie:
    def test_soundness_and_completeness(self, toy_checkpoint):
        ckpt, registry, _, ids = toy_checkpoint
        trie = IdTrie.from_registry(registry, ckpt.tokenizer)
        for id_string in set(ids):
            assert trie.accepts(ckpt.tokenizer.encode(id_string))
        assert trie.size == len(registry.reverse)

    def test_mutated_negatives_rejected(self, toy_checkpoint):
        ckpt, registry, _, _ = toy_checkpoint
        trie = IdTrie.from_registry(registry, ckpt.tokenizer)
        rng = np.random.default_rng(0)
        id_token_seqs = [ckpt.tokenizer.encode(i) for i in registry.reverse]
        vocab = ckpt.tokenizer.vocab_size
        rejected = 0
        trials = 0
        while trials < 1000:
            seq = list(id_token_seqs[rng.integers(len(id_token_seqs))])
            mode = rng.integers(3)
            if mode == 0:
                seq[rng.integers(len(seq))] = int(rng.integers(5, vocab))
            elif mode == 1:
                seq.append(int(rng.integers(5, vocab)))
            else:
                seq = seq[: max(1, len(seq) - 1)]
            if any(seq == known for known in id_token_seqs):
                continue
            trials += 1
            rejected += not trie.accepts(seq)
        assert rejected == trials


class TestDiverseBeamSearch:
    def test_lambda_zero_single_group_equals_plain_beam(self, toy_checkpoint):
        ckpt, registry, texts, _ = toy_checkpoint
        cfg = DecodeConfig(groups=1, beams_per_group=4, diversity_penalty=0.0,
                           max_target_len=4, trie_constrained=False)
        got = diverse_beam_search(ckpt, texts[0], cfg)

        # reference: breadth-first plain beam search, width 4
        tokenizer = ckpt.tokenizer
        src = np.array([tokenizer.encode(texts[0])])
        memory, bias = ckpt.model.encode(src)
        beams = [([], 0.0)]
        finished = []
        width = 4
        for _ in range(4):
            if not beams:
                break
            prefixes = np.array([[tokenizer.bos_id] + b for b, _ in beams])
            logp = ckpt.model.next_token_logprobs(memory, bias, prefixes)
            cands = []
            for bi, (toks, score) in enumerate(beams):
                for tok in range(logp.shape[1]):
                    cands.append((toks + [tok], score + float(logp[bi, tok])))
            cands.sort(key=lambda ts: -ts[1])
            beams = []
            # canonical convention: only the top 2*width candidates compete
            for toks, score in cands[: 2 * width]:
                if toks[-1] == tokenizer.eos_id:
                    if len(finished) < width:
                        finished.append((toks[:-1], score))
                elif len(beams) < width:
                    beams.append((toks, score))
                if len(beams) >= width and len(finished) >= width:
                    break
            if len(finished) >= width:
                break
        expected = sorted(
            (tokenizer.decode(t), s) for t, s in finished
        )
        actual = sorted((h.id_string, h.score) for h in got)
        assert [e[0] for e in expected] == [a[0] for a in actual]
        for (_, es), (_, as_) in zip(expected, actual):
            assert abs(es - as_) < 1e-9

    def test_lambda_invariance_single_group(self, toy_checkpoint):
        ckpt, registry, texts, _ = toy_checkpoint
        outs = []
        for lam in (0.0, 0.7, 5.0):
            cfg = DecodeConfig(groups=1, beams_per_group=3, diversity_penalty=lam,
                               max_target_len=4, trie_constrained=True)
            hyps = diverse_beam_search(ckpt, texts[1], cfg, registry=registry)
            outs.append([(h.id_string, round(h.score, 10)) for h in hyps])
        assert outs[0] == outs[1] == outs[2]

    def test_huge_lambda_distinct_first_tokens(self, toy_checkpoint):
        ckpt, registry, texts, _ = toy_checkpoint
        cfg = DecodeConfig(groups=4, beams_per_group=1, diversity_penalty=1e9,
                           max_target_len=4, trie_constrained=True)
        hyps = diverse_beam_search(ckpt, texts[2], cfg, registry=registry)
        first_tokens = [h.tokens[0] for h in hyps]
        assert len(set(first_tokens)) == len(first_tokens)

    def test_trie_constrained_outputs_always_resolve(self, toy_checkpoint):
        ckpt, registry, texts, _ = toy_checkpoint
        cfg = DecodeConfig(groups=3, beams_per_group=2, diversity_penalty=0.3,
                           max_target_len=4, trie_constrained=True)
        for text in texts:
            for hyp in diverse_beam_search(ckpt, text, cfg, registry=registry):
                assert registry.resolve(hyp.id_string), hyp.id_string

    def test_fingerprint_mismatch_rejected(self, toy_checkpoint):
        ckpt, registry, texts, _ = toy_checkpoint
        other = IdRegistry(strategy="semantic", forward=dict(registry.forward),
                           reverse=dict(registry.reverse), extra_vocab=registry.extra_vocab,
                           fingerprint="other")
        with pytest.raises(FingerprintMismatch):
            diverse_beam_search(ckpt, texts[0], DecodeConfig(), registry=other)

    def test_scores_sorted_descending(self, toy_checkpoint):
        ckpt, registry, texts, _ = toy_checkpoint
        cfg = DecodeConfig(groups=3, beams_per_group=2, diversity_penalty=0.2,
                           max_target_len=4, trie_constrained=True)
        hyps = diverse_beam_search(ckpt, texts[0], cfg, registry=registry)
        scores = [h.score for h in hyps]
        assert scores == sorted(scores, reverse=True)


class TestRankedList:
    def test_invariants_enforced(self):
        with pytest.raises(ConfigError):
            RankedList((("a", 1.0), ("a", 0.5)))
        with pytest.raises(ConfigError):
            RankedList((("a", 0.5), ("b", 1.0)))
        ok = RankedList((("a", 1.0), ("b", 0.5)))
        assert ok.track_keys == ["a", "b"]


class TestRankHypotheses:
    def test_collision_bucket_order_and_dedupe(self):
        registry = IdRegistry(
            strategy="semantic",
            forward={},
            reverse={"<x>": ["t_b", "t_a"], "<y>": ["t_a"]},
            extra_vocab=("<x>", "<y>"),
            fingerprint="fp",
        )
        hyps = [
            Hypothesis("<x>", -0.1, (5,), 1),
            Hypothesis("<y>", -0.2, (6,), 1),
        ]
        ranked = rank_hypotheses(hyps, registry, k=10)
        assert ranked.track_keys == ["t_b", "t_a"]

    def test_unresolved_skipped_and_truncation(self):
        registry = IdRegistry(
            strategy="track-int", forward={}, reverse={"1": ["a"], "2": ["b"], "3": ["c"]},
            extra_vocab=(), fingerprint="fp",
        )
        hyps = [
            Hypothesis("junk", -0.05, (1,), 1),
            Hypothesis("2", -0.1, (2,), 1),
            Hypothesis("1", -0.2, (3,), 1),
            Hypothesis("3", -0.3, (4,), 1),
        ]
        ranked = rank_hypotheses(hyps, registry, k=2)
        assert ranked.track_keys == ["b", "a"]


class TestRecommend:
    def test_k_one_singleton(self, toy_checkpoint):
        ckpt, registry, texts, ids = toy_checkpoint
        ranked = recommend(ckpt, registry, texts[3], k=1,
                           cfg=DecodeConfig(groups=2, beams_per_group=2, max_target_len=4))
        assert len(ranked) == 1

    def test_collision_bucket_expansion(self, toy_checkpoint):
        ckpt, registry, texts, ids = toy_checkpoint
        # query 0 maps to ids[0], whose bucket is [k12, k0]
        ranked = recommend(ckpt, registry, texts[0], k=3,
                           cfg=DecodeConfig(groups=2, beams_per_group=2, max_target_len=4))
        keys = ranked.track_keys
        if "k12" in keys and "k0" in keys:
            assert keys.index("k12") < keys.index("k0")

    def test_k_validation(self, toy_checkpoint):
        ckpt, registry, texts, _ = toy_checkpoint
        with pytest.raises(ConfigError):
            recommend(ckpt, registry, texts[0], k=0)

    def test_multi_utterance_query(self, toy_checkpoint):
        ckpt, registry, texts, _ = toy_checkpoint
        ranked = recommend(ckpt, registry, ["slow jazz", "evening please"], k=2,
                           cfg=DecodeConfig(groups=2, beams_per_group=2, max_target_len=4))
        assert len(ranked) >= 1
