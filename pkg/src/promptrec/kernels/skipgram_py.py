"""Pure-numpy skip-gram negative-sampling epoch.

Reference implementation for the Cython kernel: identical pair enumeration,
negative consumption, and learning-rate schedule, so the two backends apply
the same update sequence (float32 rounding aside). Roughly 30-60x slower.
"""

from __future__ import annotations

import math

import numpy as np

_MAX_EXP = 30.0


def train_epoch(
    syn0: np.ndarray,
    syn1: np.ndarray,
    seq: np.ndarray,
    offsets: np.ndarray,
    window: int,
    negatives: np.ndarray,
    n_negative: int,
    lr_start: float,
    lr_end: float,
    step0: int,
    total_steps: int,
) -> tuple[float, int]:
    """Run one epoch of sequential SGD updates in place; returns (loss sum, n_pairs).

    For every playlist segment seq[offsets[p]:offsets[p+1]], each ordered
    (center, context) pair within `window` is a positive example; the next
    `n_negative` entries of `negatives` are its negatives. A negative equal to
    the context is skipped (no update, but it still consumes its slot).
    """
    denom = max(total_steps - 1, 1)
    lr_span = lr_end - lr_start
    loss = 0.0
    pair_idx = 0
    for p in range(len(offsets) - 1):
        start, end = int(offsets[p]), int(offsets[p + 1])
        for i in range(start, end):
            center = int(seq[i])
            lo = max(start, i - window)
            hi = min(end - 1, i + window)
            for j in range(lo, hi + 1):
                if j == i:
                    continue
                context = int(seq[j])
                lr = lr_start + lr_span * ((step0 + pair_idx) / denom)
                l1 = syn0[center]
                neu1e = np.zeros_like(l1)
                base = pair_idx * n_negative
                for t in range(n_negative + 1):
                    if t == 0:
                        target, label = context, 1.0
                    else:
                        target = int(negatives[base + t - 1])
                        if target == context:
                            continue
                        label = 0.0
                    row = syn1[target]
                    dot = float(np.dot(l1, row))
                    if dot > _MAX_EXP:
                        f = 1.0
                    elif dot < -_MAX_EXP:
                        f = 0.0
                    else:
                        f = 1.0 / (1.0 + math.exp(-dot))
                    g = np.float32((label - f) * lr)
                    loss -= math.log(max(f if label else 1.0 - f, 1e-12))
                    neu1e += g * row
                    row += g * l1
                l1 += neu1e
                pair_idx += 1
    return loss, pair_idx
