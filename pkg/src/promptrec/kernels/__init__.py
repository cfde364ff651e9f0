"""Hot-loop kernels with a compiled core and a pure-numpy fallback.

The skip-gram training loop applies millions of tiny sequential SGD updates,
which is pathological for vectorized numpy. A Cython kernel covers that loop;
when the extension is unavailable (e.g. source checkout without a compiler)
the numpy implementation is selected at import time. Both consume identical
pre-drawn randomness, so they walk the same update sequence and differ only
by float32 rounding. `benchmarks/bench_skipgram.py` compares the two.
"""

from __future__ import annotations

from . import skipgram_py

try:
    from . import _skipgram  # compiled extension

    _impl = _skipgram
    COMPILED = True
except ImportError:  # pragma: no cover - depends on build environment
    _impl = skipgram_py
    COMPILED = False

IMPLEMENTATION = "cython" if COMPILED else "numpy"

train_epoch = _impl.train_epoch


def implementations() -> dict[str, object]:
    """All available kernel backends, keyed by name."""
    out: dict[str, object] = {"numpy": skipgram_py}
    if COMPILED:
        out["cython"] = _impl
    return out
