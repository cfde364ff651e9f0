import numpy as np
import pytest

from promptrec._util import DataError
from promptrec.lm import (
    Checkpoint,
    Model,
    ModelConfig,
    TrainConfig,
    fit_tokenizer,
    load_checkpoint,
    save_checkpoint,
    step_logits,
    train,
)

TINY = ModelConfig(layers=1, heads=2, width=16, ff_width=32, dropout=0.0,
                   max_input_len=12, max_target_len=10, seed=3)


def _toy_batch(rng, vocab, B=2, S=5, T=4):
    src = rng.integers(5, vocab, size=(B, S))
    tgt_out = rng.integers(5, vocab, size=(B, T))
    tgt_out[0, -1] = 0  # one padded position exercises the loss mask
    tgt_in = np.concatenate([np.full((B, 1), 2), tgt_out[:, :-1]], axis=1)
    return src, tgt_in, tgt_out


class TestGradients:
    """Analytic backprop vs central finite differences at 64-bit."""

    @pytest.mark.parametrize(
        "param",
        ["enc0.attn.wq", "dec0.cross.wk", "enc0.ff.w1", "dec0.ff.w2", "emb", "dec0.ln2.g", "enc.ln.b"],
    )
    def test_fd_agreement(self, param):
        rng = np.random.default_rng(11)
        vocab = 23
        model = Model(TINY, vocab, dtype=np.float64)
        src, tgt_in, tgt_out = _toy_batch(rng, vocab)
        _, grads = model.loss_and_grads(src, tgt_in, tgt_out, train=False)

        tensor = model.params[param]
        flat = tensor.reshape(-1)
        eps = 1e-6
        idxs = rng.choice(flat.size, size=min(6, flat.size), replace=False)
        for idx in idxs:
            orig = flat[idx]
            flat[idx] = orig + eps
            up, _ = model.forward_loss(src, tgt_in, tgt_out, train=False)
            flat[idx] = orig - eps
            down, _ = model.forward_loss(src, tgt_in, tgt_out, train=False)
            flat[idx] = orig
            fd = (up - down) / (2 * eps)
            analytic = grads[param].reshape(-1)[idx]
            denom = max(abs(fd), abs(analytic), 1e-8)
            assert abs(fd - analytic) / denom < 1e-4, (param, idx, fd, analytic)


class TestForwardProperties:
    def test_step_logits_normalized(self):
        model = Model(TINY, 23, dtype=np.float64)
        memory, bias = model.encode(np.array([[5, 6, 7]]))
        logp = model.next_token_logprobs(memory, bias, np.array([[2, 5]]))
        assert abs(np.exp(logp).sum() - 1.0) < 1e-5

    def test_inference_deterministic_with_dropout_config(self):
        cfg = ModelConfig(layers=1, heads=2, width=16, ff_width=32, dropout=0.5,
                          max_input_len=12, max_target_len=10, seed=3)
        model = Model(cfg, 23)
        memory, bias = model.encode(np.array([[5, 6, 7]]))
        a = model.next_token_logprobs(memory, bias, np.array([[2, 5]]))
        b = model.next_token_logprobs(memory, bias, np.array([[2, 5]]))
        assert np.array_equal(a, b)

    def test_causal_masking(self):
        # changing the target token at position j never changes logits <= j
        rng = np.random.default_rng(5)
        model = Model(TINY, 23, dtype=np.float64)
        src = np.array([[5, 6, 7, 8]])
        prefix = np.array([[2, 9, 10, 11]])
        memory, bias = model.encode(src)

        def logits_at(p, upto):
            cache = {}
            h = model._decode_stack(np.array([p[: upto + 1]]), memory, bias, cache, False, None)
            return h[0, -1] @ model.params["emb"].T

        base = prefix[0].copy()
        mutated = base.copy()
        mutated[3] = 12  # mutate target token at the last position
        for upto in range(3):
            np.testing.assert_allclose(
                logits_at(base, upto), logits_at(mutated, upto), rtol=0, atol=0
            )

    def test_batch_permutation_invariance(self):
        rng = np.random.default_rng(7)
        model = Model(TINY, 23, dtype=np.float64)
        src, tgt_in, tgt_out = _toy_batch(rng, 23, B=6)
        loss, _ = model.forward_loss(src, tgt_in, tgt_out, train=False)
        perm = rng.permutation(6)
        loss_p, _ = model.forward_loss(src[perm], tgt_in[perm], tgt_out[perm], train=False)
        assert abs(loss - loss_p) < 1e-6


@pytest.fixture(scope="module")
def toy_setup():
    texts = [
        "upbeat rock anthems", "slow jazz evening", "electronic dance party",
        "calm folk morning", "heavy metal drive", "classical study focus",
        "country road trip", "reggae beach day", "soul kitchen groove",
        "ambient sleep drift",
    ]
    targets = [f"<t{i}>" for i in range(10)]

    class FakeRegistry:
        forward = {f"k{i}": t for i, t in enumerate(targets)}
        extra_vocab = tuple(targets)
        fingerprint = "toy"

    tokenizer = fit_tokenizer(texts, FakeRegistry(), base_vocab_size=200)
    pairs = list(zip(texts, targets))
    return tokenizer, pairs


class TestTraining:
    def test_memorizes_toy_set(self, toy_setup):
        tokenizer, pairs = toy_setup
        cfg = ModelConfig(layers=1, heads=2, width=32, ff_width=64, dropout=0.0,
                          max_input_len=24, max_target_len=4, seed=0)
        model, losses = train(pairs, tokenizer, cfg, TrainConfig(epochs=200, lr=3e-3, batch_size=10, seed=0))
        assert losses[-1] < losses[0]
        hits = 0
        for text, target in pairs:
            src = np.array([tokenizer.encode(text)])
            memory, bias = model.encode(src)
            prefix = [tokenizer.bos_id]
            for _ in range(3):
                logp = model.next_token_logprobs(memory, bias, np.array([prefix]))
                nxt = int(np.argmax(logp[0]))
                if nxt == tokenizer.eos_id:
                    break
                prefix.append(nxt)
            decoded = tokenizer.decode(prefix)
            hits += decoded == target
        assert hits >= 9

    def test_training_deterministic(self, toy_setup):
        tokenizer, pairs = toy_setup
        cfg = ModelConfig(layers=1, heads=2, width=16, ff_width=32, dropout=0.1,
                          max_input_len=16, max_target_len=4, seed=1)
        tcfg = TrainConfig(epochs=3, lr=1e-3, batch_size=4, seed=5)
        m1, l1 = train(pairs, tokenizer, cfg, tcfg)
        m2, l2 = train(pairs, tokenizer, cfg, tcfg)
        assert l1 == l2
        for key in m1.params:
            assert np.array_equal(m1.params[key], m2.params[key])

    def test_target_overflow_names_pair(self, toy_setup):
        tokenizer, pairs = toy_setup
        cfg = ModelConfig(layers=1, heads=2, width=16, ff_width=32, dropout=0.0,
                          max_input_len=16, max_target_len=1, seed=1)
        with pytest.raises(DataError, match="<t0>"):
            train(pairs, tokenizer, cfg, TrainConfig(epochs=1))

    def test_loss_decreases_early(self, toy_setup):
        tokenizer, pairs = toy_setup
        cfg = ModelConfig(layers=1, heads=2, width=32, ff_width=64, dropout=0.0,
                          max_input_len=16, max_target_len=4, seed=0)
        _, losses = train(pairs, tokenizer, cfg, TrainConfig(epochs=3, lr=3e-3, batch_size=10, seed=0))
        assert losses[1] <= losses[0] * 1.05
        assert losses[2] <= losses[1] * 1.05


class TestCheckpoint:
    def test_roundtrip(self, tmp_path):
        texts = ["alpha beta gamma", "delta epsilon"]
        tokenizer = fit_tokenizer(texts, None, base_vocab_size=100)
        cfg = ModelConfig(layers=1, heads=2, width=16, ff_width=32, dropout=0.0,
                          max_input_len=24, max_target_len=8, seed=2)
        model, losses = train(
            [("alpha beta gamma", "delta"), ("delta epsilon", "alpha")],
            tokenizer, cfg, TrainConfig(epochs=2, batch_size=2, seed=0),
        )
        ckpt = Checkpoint.from_training(tokenizer, model, TrainConfig(epochs=2, batch_size=2, seed=0), "fp123", losses)
        path = tmp_path / "model.ckpt"
        save_checkpoint(ckpt, path)
        loaded = load_checkpoint(path)
        assert loaded.registry_fingerprint == "fp123"
        assert loaded.loss_trace == tuple(losses)
        for key in model.params:
            assert np.array_equal(loaded.model.params[key], model.params[key])
        src = tokenizer.encode("alpha beta gamma")
        np.testing.assert_allclose(
            step_logits(loaded, src, []), step_logits(ckpt, src, []), rtol=0, atol=0
        )

    def test_step_logits_validates_lengths(self, tmp_path):
        texts = ["alpha beta"]
        tokenizer = fit_tokenizer(texts, None, base_vocab_size=100)
        cfg = ModelConfig(layers=1, heads=2, width=16, ff_width=32, dropout=0.0,
                          max_input_len=12, max_target_len=8, seed=2)
        model, losses = train([("alpha beta", "alpha")], tokenizer, cfg, TrainConfig(epochs=1, batch_size=1))
        ckpt = Checkpoint.from_training(tokenizer, model, TrainConfig(), "fp", losses)
        with pytest.raises(DataError):
            step_logits(ckpt, [5] * 20, [])
        with pytest.raises(DataError):
            step_logits(ckpt, [5], [6] * 20)
