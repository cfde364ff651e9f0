"""Self-describing checkpoint container: JSON header + raw float32 blobs."""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .._util import DataError, atomic_write_bytes
from .model import Model, ModelConfig
from .tokenizer import Tokenizer
from .training import TrainConfig

CHECKPOINT_MAGIC = b"T2TCKPT1\n"


@dataclass
class Checkpoint:
    tokenizer: Tokenizer
    model: Model
    model_config: ModelConfig
    train_config: TrainConfig
    registry_fingerprint: str
    loss_trace: tuple[float, ...]

    @classmethod
    def from_training(
        cls,
        tokenizer: Tokenizer,
        model: Model,
        tcfg: TrainConfig,
        registry_fingerprint: str,
        loss_trace,
    ) -> "Checkpoint":
        return cls(tokenizer, model, model.cfg, tcfg, registry_fingerprint, tuple(loss_trace))


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> None:
    names = sorted(ckpt.model.params)
    manifest = [
        {"name": n, "shape": list(ckpt.model.params[n].shape)} for n in names
    ]
    header = {
        "model_config": asdict(ckpt.model_config),
        "train_config": asdict(ckpt.train_config),
        "tokenizer": ckpt.tokenizer.to_dict(),
        "registry_fingerprint": ckpt.registry_fingerprint,
        "loss_trace": list(ckpt.loss_trace),
        "vocab_size": ckpt.model.vocab_size,
        "params": manifest,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    chunks = [CHECKPOINT_MAGIC, struct.pack("<Q", len(header_bytes)), header_bytes]
    for n in names:
        chunks.append(np.ascontiguousarray(ckpt.model.params[n], dtype=np.float32).tobytes())
    atomic_write_bytes(path, b"".join(chunks))


def load_checkpoint(path: str | Path) -> Checkpoint:
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise DataError(f"{path}: bad checkpoint magic {magic!r}")
        (header_len,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(header_len).decode("utf-8"))
        mcfg = ModelConfig(**header["model_config"])
        tcfg = TrainConfig(**header["train_config"])
        tokenizer = Tokenizer.from_dict(header["tokenizer"])
        if tokenizer.vocab_size != header["vocab_size"]:
            raise DataError(
                f"{path}: tokenizer vocab {tokenizer.vocab_size} != recorded {header['vocab_size']}"
            )
        model = Model(mcfg, header["vocab_size"], dtype=np.float32)
        for entry in header["params"]:
            name, shape = entry["name"], tuple(entry["shape"])
            if name not in model.params:
                raise DataError(f"{path}: unknown parameter {name!r}")
            if model.params[name].shape != shape:
                raise DataError(
                    f"{path}: parameter {name!r} has shape {shape}, expected {model.params[name].shape}"
                )
            count = int(np.prod(shape))
            blob = fh.read(count * 4)
            if len(blob) != count * 4:
                raise DataError(f"{path}: truncated blob for {name!r}")
            model.params[name] = np.frombuffer(blob, dtype=np.float32).reshape(shape).copy()
    return Checkpoint(
        tokenizer=tokenizer,
        model=model,
        model_config=mcfg,
        train_config=tcfg,
        registry_fingerprint=header["registry_fingerprint"],
        loss_trace=tuple(header["loss_trace"]),
    )


def step_logits(ckpt: Checkpoint, input_tokens: list[int], partial_target: list[int]) -> np.ndarray:
    """Vocabulary log-probabilities for the token after `partial_target`."""
    mcfg = ckpt.model_config
    if len(input_tokens) > mcfg.max_input_len:
        raise DataError(f"input of {len(input_tokens)} tokens exceeds max {mcfg.max_input_len}")
    if len(partial_target) > mcfg.max_target_len:
        raise DataError(f"target of {len(partial_target)} tokens exceeds max {mcfg.max_target_len}")
    src = np.array([input_tokens], dtype=np.int64)
    memory, src_bias = ckpt.model.encode(src)
    prefix = np.array([[ckpt.tokenizer.bos_id] + list(partial_target)], dtype=np.int64)
    return ckpt.model.next_token_logprobs(memory, src_bias, prefix)[0]
