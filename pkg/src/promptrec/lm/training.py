"""Teacher-forced training of the seq2seq backbone on (query, ID) pairs."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass

import numpy as np

from .._util import ConfigError, DataError
from .model import Model, ModelConfig
from .tokenizer import Tokenizer

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    lr: float = 5e-4
    batch_size: int = 64
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    grad_clip: float = 1.0
    seed: int = 0

    def validate(self) -> None:
        for name in ("epochs", "lr", "batch_size", "grad_clip"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay must be >= 0")


class AdamW:
    """Decoupled-weight-decay adaptive moments, one slot pair per parameter."""

    def __init__(self, params: dict[str, np.ndarray], cfg: TrainConfig):
        self.cfg = cfg
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        cfg = self.cfg
        self.t += 1
        b1t = 1.0 - cfg.beta1**self.t
        b2t = 1.0 - cfg.beta2**self.t
        for key, p in params.items():
            g = grads[key]
            m = self.m[key]
            v = self.v[key]
            m *= cfg.beta1
            m += (1.0 - cfg.beta1) * g
            v *= cfg.beta2
            v += (1.0 - cfg.beta2) * g * g
            update = (m / b1t) / (np.sqrt(v / b2t) + 1e-8)
            if cfg.weight_decay > 0:
                update = update + cfg.weight_decay * p
            p -= p.dtype.type(cfg.lr) * update.astype(p.dtype)


def clip_global_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    total = 0.0
    for g in grads.values():
        total += float(np.sum(g.astype(np.float64) ** 2))
    norm = math.sqrt(total)
    if norm > max_norm and norm > 0:
        scale = max_norm / norm
        for g in grads.values():
            g *= g.dtype.type(scale)
    return norm


def encode_pairs(
    pairs: list[tuple[str, str]], tokenizer: Tokenizer, mcfg: ModelConfig
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Tokenize (input, target) pairs; targets carry a trailing EOS."""
    sources, targets = [], []
    for text, target_id in pairs:
        src = tokenizer.encode(text)[: mcfg.max_input_len]
        tgt = tokenizer.encode(target_id) + [tokenizer.eos_id]
        if len(tgt) > mcfg.max_target_len:
            raise DataError(
                f"target {target_id!r} tokenizes to {len(tgt)} tokens, "
                f"over the {mcfg.max_target_len}-token limit"
            )
        sources.append(np.array(src, dtype=np.int64))
        targets.append(np.array(tgt, dtype=np.int64))
    return sources, targets


def _pad_batch(rows: list[np.ndarray], pad: int = 0) -> np.ndarray:
    width = max(len(r) for r in rows)
    out = np.full((len(rows), width), pad, dtype=np.int64)
    for i, r in enumerate(rows):
        out[i, : len(r)] = r
    return out


def train(
    pairs: list[tuple[str, str]],
    tokenizer: Tokenizer,
    mcfg: ModelConfig,
    tcfg: TrainConfig,
    dtype=np.float32,
) -> tuple[Model, list[float]]:
    """Train a fresh model; returns (model, mean loss per epoch)."""
    mcfg.validate()
    tcfg.validate()
    if not pairs:
        raise DataError("no training pairs")
    sources, targets = encode_pairs(pairs, tokenizer, mcfg)

    model = Model(mcfg, tokenizer.vocab_size, dtype=dtype)
    optimizer = AdamW(model.params, tcfg)
    shuffle_rng = np.random.default_rng(tcfg.seed)
    dropout_rng = np.random.default_rng(tcfg.seed + 1)
    bos = tokenizer.bos_id

    n = len(sources)
    losses: list[float] = []
    for epoch in range(tcfg.epochs):
        order = shuffle_rng.permutation(n)
        total_loss = 0.0
        total_batches = 0
        t0 = time.perf_counter()
        for start in range(0, n, tcfg.batch_size):
            idx = order[start: start + tcfg.batch_size]
            src = _pad_batch([sources[i] for i in idx])
            tgt = _pad_batch([targets[i] for i in idx])
            tgt_in = np.concatenate(
                [np.full((len(idx), 1), bos, dtype=np.int64), tgt[:, :-1]], axis=1
            )
            loss, grads = model.loss_and_grads(src, tgt_in, tgt, train=True, rng=dropout_rng)
            clip_global_norm(grads, tcfg.grad_clip)
            optimizer.step(model.params, grads)
            total_loss += loss
            total_batches += 1
        epoch_loss = total_loss / max(total_batches, 1)
        losses.append(epoch_loss)
        logger.info(
            "epoch %d/%d: loss %.4f (%.1fs)",
            epoch + 1, tcfg.epochs, epoch_loss, time.perf_counter() - t0,
        )
    return model, losses
