"""A small encoder-decoder transformer in numpy with handwritten backprop.

Pre-norm residual blocks, sinusoidal positions, GELU feed-forward, shared
source/target embedding tied to the output projection. Written against plain
ndarray ops so training runs in float32 for speed while gradient checks can
instantiate the identical model in float64.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .._util import ConfigError

_NEG = -1e9  # additive mask value; large enough to zero attention in float32


@dataclass(frozen=True)
class ModelConfig:
    layers: int = 2
    heads: int = 4
    width: int = 128
    ff_width: int = 512
    dropout: float = 0.1
    max_input_len: int = 64
    max_target_len: int = 24
    seed: int = 0

    def validate(self) -> None:
        if self.width % self.heads != 0:
            raise ConfigError(f"width {self.width} not divisible by heads {self.heads}")
        for name in ("layers", "heads", "width", "ff_width", "max_input_len", "max_target_len"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")


def sinusoid_table(max_len: int, width: int, dtype) -> np.ndarray:
    pos = np.arange(max_len, dtype=np.float64)[:, None]
    i = np.arange(width // 2, dtype=np.float64)[None, :]
    angles = pos / np.power(10000.0, 2 * i / width)
    table = np.zeros((max_len, width), dtype=np.float64)
    table[:, 0::2] = np.sin(angles)
    table[:, 1::2] = np.cos(angles)
    return table.astype(dtype)


_GELU_K = math.sqrt(2.0 / math.pi)
_GELU_A = 0.044715


def _gelu(x: np.ndarray) -> tuple[np.ndarray, tuple[np.ndarray, np.ndarray]]:
    """tanh-form GELU; returns (y, residuals) so the backward pass can reuse
    the tanh evaluation."""
    dt = x.dtype.type
    x2 = x * x
    t = np.tanh(dt(_GELU_K) * x * (dt(1.0) + dt(_GELU_A) * x2))
    y = dt(0.5) * x * (dt(1.0) + t)
    return y, (t, x2)


def _gelu_grad(x: np.ndarray, residuals: tuple[np.ndarray, np.ndarray]) -> np.ndarray:
    t, x2 = residuals
    dt = x.dtype.type
    du = dt(_GELU_K) * (dt(1.0) + dt(3.0 * _GELU_A) * x2)
    return dt(0.5) * (dt(1.0) + t) + dt(0.5) * x * (dt(1.0) - t * t) * du


class Model:
    """Parameters live in `self.params` (name -> ndarray); grads mirror them."""

    def __init__(self, cfg: ModelConfig, vocab_size: int, dtype=np.float32):
        cfg.validate()
        self.cfg = cfg
        self.vocab_size = vocab_size
        self.dtype = dtype
        self.params: dict[str, np.ndarray] = {}
        self._init_params()
        self.pos_enc = sinusoid_table(cfg.max_input_len, cfg.width, dtype)
        self.pos_dec = sinusoid_table(cfg.max_target_len + 1, cfg.width, dtype)

    # ------------------------------------------------------------------ init
    def _init_params(self) -> None:
        cfg = self.cfg
        rng = np.random.default_rng(cfg.seed)
        d, f = cfg.width, cfg.ff_width

        def xavier(fan_in: int, fan_out: int) -> np.ndarray:
            a = math.sqrt(6.0 / (fan_in + fan_out))
            return (rng.random((fan_in, fan_out)) * 2 * a - a).astype(self.dtype)

        p = self.params
        p["emb"] = (rng.standard_normal((self.vocab_size, d)) / math.sqrt(d)).astype(self.dtype)
        for side, n_layers in (("enc", cfg.layers), ("dec", cfg.layers)):
            for i in range(n_layers):
                base = f"{side}{i}"
                attns = ["attn"] if side == "enc" else ["self", "cross"]
                for attn in attns:
                    for w in ("wq", "wk", "wv", "wo"):
                        p[f"{base}.{attn}.{w}"] = xavier(d, d)
                p[f"{base}.ff.w1"] = xavier(d, f)
                p[f"{base}.ff.b1"] = np.zeros(f, dtype=self.dtype)
                p[f"{base}.ff.w2"] = xavier(f, d)
                p[f"{base}.ff.b2"] = np.zeros(d, dtype=self.dtype)
                n_ln = 2 if side == "enc" else 3
                for j in range(1, n_ln + 1):
                    p[f"{base}.ln{j}.g"] = np.ones(d, dtype=self.dtype)
                    p[f"{base}.ln{j}.b"] = np.zeros(d, dtype=self.dtype)
            p[f"{side}.ln.g"] = np.ones(d, dtype=self.dtype)
            p[f"{side}.ln.b"] = np.zeros(d, dtype=self.dtype)

    def zero_grads(self) -> dict[str, np.ndarray]:
        return {k: np.zeros_like(v) for k, v in self.params.items()}

    # ------------------------------------------------------------- primitives
    def _ln_fwd(self, name: str, x: np.ndarray, cache: dict) -> np.ndarray:
        g, b = self.params[f"{name}.g"], self.params[f"{name}.b"]
        mu = x.mean(axis=-1, keepdims=True)
        var = x.var(axis=-1, keepdims=True)
        inv = 1.0 / np.sqrt(var + 1e-5)
        xhat = (x - mu) * inv
        cache[name] = (xhat, inv)
        return g * xhat + b

    def _ln_bwd(self, name: str, dy: np.ndarray, cache: dict, grads: dict) -> np.ndarray:
        g = self.params[f"{name}.g"]
        xhat, inv = cache[name]
        axes = tuple(range(dy.ndim - 1))
        grads[f"{name}.g"] += (dy * xhat).sum(axis=axes)
        grads[f"{name}.b"] += dy.sum(axis=axes)
        dxhat = dy * g
        mean1 = dxhat.mean(axis=-1, keepdims=True)
        mean2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
        return inv * (dxhat - mean1 - xhat * mean2)

    def _split_heads(self, x: np.ndarray) -> np.ndarray:
        B, T, d = x.shape
        h = self.cfg.heads
        return x.reshape(B, T, h, d // h).transpose(0, 2, 1, 3)

    def _merge_heads(self, x: np.ndarray) -> np.ndarray:
        B, h, T, dk = x.shape
        return x.transpose(0, 2, 1, 3).reshape(B, T, h * dk)

    def _attn_fwd(
        self, name: str, x_q: np.ndarray, x_kv: np.ndarray, bias: np.ndarray | None, cache: dict
    ) -> np.ndarray:
        p = self.params
        Q = x_q @ p[f"{name}.wq"]
        K = x_kv @ p[f"{name}.wk"]
        V = x_kv @ p[f"{name}.wv"]
        Qh, Kh, Vh = self._split_heads(Q), self._split_heads(K), self._split_heads(V)
        scale = 1.0 / math.sqrt(Qh.shape[-1])
        S = (Qh @ Kh.transpose(0, 1, 3, 2)) * scale
        if bias is not None:
            S = S + bias
        S = S - S.max(axis=-1, keepdims=True)
        expS = np.exp(S)
        A = expS / expS.sum(axis=-1, keepdims=True)
        Ch = A @ Vh
        C = self._merge_heads(Ch)
        out = C @ p[f"{name}.wo"]
        cache[name] = (x_q, x_kv, Qh, Kh, Vh, A, C, scale)
        return out

    def _attn_bwd(self, name: str, dout: np.ndarray, cache: dict, grads: dict) -> tuple[np.ndarray, np.ndarray]:
        p = self.params
        x_q, x_kv, Qh, Kh, Vh, A, C, scale = cache[name]
        d = self.cfg.width

        grads[f"{name}.wo"] += C.reshape(-1, d).T @ dout.reshape(-1, d)
        dC = dout @ p[f"{name}.wo"].T
        dCh = self._split_heads(dC)
        dA = dCh @ Vh.transpose(0, 1, 3, 2)
        dVh = A.transpose(0, 1, 3, 2) @ dCh
        dS = A * (dA - (dA * A).sum(axis=-1, keepdims=True))
        dQh = (dS @ Kh) * scale
        dKh = (dS.transpose(0, 1, 3, 2) @ Qh) * scale
        dQ = self._merge_heads(dQh)
        dK = self._merge_heads(dKh)
        dV = self._merge_heads(dVh)
        grads[f"{name}.wq"] += x_q.reshape(-1, d).T @ dQ.reshape(-1, d)
        grads[f"{name}.wk"] += x_kv.reshape(-1, d).T @ dK.reshape(-1, d)
        grads[f"{name}.wv"] += x_kv.reshape(-1, d).T @ dV.reshape(-1, d)
        dx_q = dQ @ p[f"{name}.wq"].T
        dx_kv = dK @ p[f"{name}.wk"].T + dV @ p[f"{name}.wv"].T
        return dx_q, dx_kv

    def _ff_fwd(self, name: str, x: np.ndarray, cache: dict) -> np.ndarray:
        p = self.params
        z = x @ p[f"{name}.w1"] + p[f"{name}.b1"]
        a, residuals = _gelu(z)
        out = a @ p[f"{name}.w2"] + p[f"{name}.b2"]
        cache[name] = (x, z, a, residuals)
        return out

    def _ff_bwd(self, name: str, dout: np.ndarray, cache: dict, grads: dict) -> np.ndarray:
        p = self.params
        x, z, a, residuals = cache[name]
        d_in, d_hidden = p[f"{name}.w1"].shape
        grads[f"{name}.w2"] += a.reshape(-1, d_hidden).T @ dout.reshape(-1, d_in)
        grads[f"{name}.b2"] += dout.sum(axis=tuple(range(dout.ndim - 1)))
        da = dout @ p[f"{name}.w2"].T
        dz = da * _gelu_grad(z, residuals)
        grads[f"{name}.w1"] += x.reshape(-1, d_in).T @ dz.reshape(-1, d_hidden)
        grads[f"{name}.b1"] += dz.sum(axis=tuple(range(dz.ndim - 1)))
        return dz @ p[f"{name}.w1"].T

    def _dropout_fwd(self, key: str, x: np.ndarray, cache: dict, train: bool, rng) -> np.ndarray:
        p = self.cfg.dropout
        if not train or p <= 0.0:
            return x
        mask = (rng.random(x.shape, dtype=np.float32) >= p).astype(self.dtype)
        mask /= self.dtype(1.0 - p)
        cache[key] = mask
        return x * mask

    def _dropout_bwd(self, key: str, dy: np.ndarray, cache: dict) -> np.ndarray:
        mask = cache.get(key)
        return dy if mask is None else dy * mask

    # ---------------------------------------------------------------- encoder
    def _embed(self, ids: np.ndarray, pos: np.ndarray) -> np.ndarray:
        scale = math.sqrt(self.cfg.width)
        return self.params["emb"][ids] * self.dtype(scale) + pos[: ids.shape[1]]

    def encode(
        self, src: np.ndarray, cache: dict | None = None, train: bool = False, rng=None
    ) -> tuple[np.ndarray, np.ndarray]:
        """Returns (memory, src_bias); src_bias masks pad keys, shape (B,1,1,S)."""
        if src.shape[1] > self.cfg.max_input_len:
            raise ConfigError(
                f"input of {src.shape[1]} tokens exceeds max_input_len {self.cfg.max_input_len}"
            )
        cache = cache if cache is not None else {}
        src_bias = np.where(src == 0, self.dtype(_NEG), self.dtype(0.0))[:, None, None, :]
        x = self._embed(src, self.pos_enc)
        x = self._dropout_fwd("enc.embdrop", x, cache, train, rng)
        cache["enc.src"] = src
        for i in range(self.cfg.layers):
            base = f"enc{i}"
            h = self._ln_fwd(f"{base}.ln1", x, cache)
            h = self._attn_fwd(f"{base}.attn", h, h, src_bias, cache)
            x = x + self._dropout_fwd(f"{base}.drop1", h, cache, train, rng)
            h = self._ln_fwd(f"{base}.ln2", x, cache)
            h = self._ff_fwd(f"{base}.ff", h, cache)
            x = x + self._dropout_fwd(f"{base}.drop2", h, cache, train, rng)
        memory = self._ln_fwd("enc.ln", x, cache)
        return memory, src_bias

    def _decode_stack(
        self,
        tgt_in: np.ndarray,
        memory: np.ndarray,
        src_bias: np.ndarray,
        cache: dict,
        train: bool,
        rng,
    ) -> np.ndarray:
        T = tgt_in.shape[1]
        if T > self.cfg.max_target_len + 1:  # +1 for BOS
            raise ConfigError(
                f"target of {T} tokens exceeds max_target_len {self.cfg.max_target_len}"
            )
        causal = np.triu(np.full((T, T), _NEG, dtype=self.dtype), k=1)[None, None, :, :]
        x = self._embed(tgt_in, self.pos_dec)
        x = self._dropout_fwd("dec.embdrop", x, cache, train, rng)
        cache["dec.tgt_in"] = tgt_in
        for i in range(self.cfg.layers):
            base = f"dec{i}"
            h = self._ln_fwd(f"{base}.ln1", x, cache)
            h = self._attn_fwd(f"{base}.self", h, h, causal, cache)
            x = x + self._dropout_fwd(f"{base}.drop1", h, cache, train, rng)
            h = self._ln_fwd(f"{base}.ln2", x, cache)
            h = self._attn_fwd(f"{base}.cross", h, memory, src_bias, cache)
            x = x + self._dropout_fwd(f"{base}.drop2", h, cache, train, rng)
            h = self._ln_fwd(f"{base}.ln3", x, cache)
            h = self._ff_fwd(f"{base}.ff", h, cache)
            x = x + self._dropout_fwd(f"{base}.drop3", h, cache, train, rng)
        return self._ln_fwd("dec.ln", x, cache)

    # ----------------------------------------------------------------- train
    def forward_loss(
        self,
        src: np.ndarray,
        tgt_in: np.ndarray,
        tgt_out: np.ndarray,
        train: bool = True,
        rng=None,
    ) -> tuple[float, dict]:
        """Teacher-forced mean cross-entropy over non-pad target positions."""
        cache: dict = {}
        memory, src_bias = self.encode(src, cache, train, rng)
        cache["enc.memory_shape"] = memory.shape
        h = self._decode_stack(tgt_in, memory, src_bias, cache, train, rng)
        logits = h @ self.params["emb"].T
        logits = logits - logits.max(axis=-1, keepdims=True)
        logZ = np.log(np.exp(logits).sum(axis=-1, keepdims=True))
        logp = logits - logZ
        mask = (tgt_out != 0)
        n_tokens = int(mask.sum())
        picked = np.take_along_axis(logp, tgt_out[..., None], axis=-1)[..., 0]
        loss = float(-(picked * mask).astype(np.float64).sum() / max(n_tokens, 1))
        cache["loss"] = (h, logp, mask, n_tokens)
        return loss, cache

    def backward(self, cache: dict) -> dict[str, np.ndarray]:
        grads = self.zero_grads()
        h, logp, mask, n_tokens = cache["loss"]
        tgt_out = cache["tgt_out"]

        B, T, V = logp.shape
        dlogits = np.exp(logp)
        onehot_rows = tgt_out.reshape(-1)
        dlogits = dlogits.reshape(-1, V)
        dlogits[np.arange(B * T), onehot_rows] -= 1.0
        dlogits *= (mask.reshape(-1, 1) / max(n_tokens, 1)).astype(self.dtype)
        dlogits = dlogits.reshape(B, T, V).astype(self.dtype)

        d = self.cfg.width
        grads["emb"] += dlogits.reshape(-1, V).T @ h.reshape(-1, d)
        dh = dlogits @ self.params["emb"]

        dx = self._ln_bwd("dec.ln", dh, cache, grads)
        dmem_total = np.zeros(cache["enc.memory_shape"], dtype=self.dtype)
        for i in reversed(range(self.cfg.layers)):
            base = f"dec{i}"
            dsub = self._dropout_bwd(f"{base}.drop3", dx, cache)
            dff = self._ff_bwd(f"{base}.ff", dsub, cache, grads)
            dx = dx + self._ln_bwd(f"{base}.ln3", dff, cache, grads)
            dsub = self._dropout_bwd(f"{base}.drop2", dx, cache)
            dq, dkv = self._attn_bwd(f"{base}.cross", dsub, cache, grads)
            dmem_total += dkv
            dx = dx + self._ln_bwd(f"{base}.ln2", dq, cache, grads)
            dsub = self._dropout_bwd(f"{base}.drop1", dx, cache)
            dq, dkv = self._attn_bwd(f"{base}.self", dsub, cache, grads)
            dx = dx + self._ln_bwd(f"{base}.ln1", dq + dkv, cache, grads)
        dx = self._dropout_bwd("dec.embdrop", dx, cache)
        self._embed_bwd(cache["dec.tgt_in"], dx, grads)

        dxe = self._ln_bwd("enc.ln", dmem_total, cache, grads)
        for i in reversed(range(self.cfg.layers)):
            base = f"enc{i}"
            dsub = self._dropout_bwd(f"{base}.drop2", dxe, cache)
            dff = self._ff_bwd(f"{base}.ff", dsub, cache, grads)
            dxe = dxe + self._ln_bwd(f"{base}.ln2", dff, cache, grads)
            dsub = self._dropout_bwd(f"{base}.drop1", dxe, cache)
            dq, dkv = self._attn_bwd(f"{base}.attn", dsub, cache, grads)
            dxe = dxe + self._ln_bwd(f"{base}.ln1", dq + dkv, cache, grads)
        dxe = self._dropout_bwd("enc.embdrop", dxe, cache)
        self._embed_bwd(cache["enc.src"], dxe, grads)
        return grads

    def _embed_bwd(self, ids: np.ndarray, dx: np.ndarray, grads: dict) -> None:
        scale = self.dtype(math.sqrt(self.cfg.width))
        flat_ids = ids.reshape(-1)
        flat_dx = (dx * scale).reshape(-1, self.cfg.width)
        np.add.at(grads["emb"], flat_ids, flat_dx)

    def loss_and_grads(
        self, src: np.ndarray, tgt_in: np.ndarray, tgt_out: np.ndarray, train: bool = True, rng=None
    ) -> tuple[float, dict[str, np.ndarray]]:
        loss, cache = self.forward_loss(src, tgt_in, tgt_out, train=train, rng=rng)
        cache["tgt_out"] = tgt_out
        return loss, self.backward(cache)

    # ------------------------------------------------------------- inference
    def next_token_logprobs(
        self, memory: np.ndarray, src_bias: np.ndarray, tgt_prefix: np.ndarray
    ) -> np.ndarray:
        """Log-probabilities over the vocabulary for the next position.

        `tgt_prefix` is (N, T>=1) and already starts with BOS; memory/src_bias
        broadcast over N rows.
        """
        cache: dict = {}
        if memory.shape[0] == 1 and tgt_prefix.shape[0] > 1:
            memory = np.repeat(memory, tgt_prefix.shape[0], axis=0)
            src_bias = np.repeat(src_bias, tgt_prefix.shape[0], axis=0)
        h = self._decode_stack(tgt_prefix, memory, src_bias, cache, train=False, rng=None)
        logits = h[:, -1, :] @ self.params["emb"].T
        logits = (logits - logits.max(axis=-1, keepdims=True)).astype(np.float64)
        return logits - np.log(np.exp(logits).sum(axis=-1, keepdims=True))
