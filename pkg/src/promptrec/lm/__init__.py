"""Trainable seq2seq backbone: tokenizer, model, training loop, checkpoints."""

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint, step_logits
from .model import Model, ModelConfig
from .tokenizer import SPECIALS, Tokenizer, fit_tokenizer
from .training import AdamW, TrainConfig, encode_pairs, train

__all__ = [
    "AdamW",
    "Checkpoint",
    "Model",
    "ModelConfig",
    "SPECIALS",
    "Tokenizer",
    "TrainConfig",
    "encode_pairs",
    "fit_tokenizer",
    "load_checkpoint",
    "save_checkpoint",
    "step_logits",
    "train",
]
