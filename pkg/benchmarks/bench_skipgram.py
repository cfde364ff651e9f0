"""Compare the compiled skip-gram kernel against the pure-numpy fallback.

Both backends consume identical pre-drawn randomness, so they apply the same
update sequence and should agree to float32 rounding; the interesting number
is the wall-clock ratio.

Run:  python benchmarks/bench_skipgram.py
"""

import os
import time

os.environ.setdefault("OMP_NUM_THREADS", "1")

import numpy as np

from promptrec import kernels
from promptrec.corpus import SynthConfig, generate_synthetic
from promptrec.embeddings import SkipgramConfig, train_skipgram
from promptrec.kernels import skipgram_py


def main() -> None:
    cfg = SynthConfig(
        n_genres=4, artists_per_genre=8, tracks_per_artist=8.0,
        n_playlists=400, playlist_len_min=8, playlist_len_max=12,
    )
    corpus = generate_synthetic(cfg, 7)
    sg = SkipgramConfig(dim=64, window=5, negatives=5, epochs=2, seed=1)
    playlists = corpus.playlists
    n_pairs = sum(
        min(i, sg.window) + min(len(p.track_keys) - 1 - i, sg.window)
        for p in playlists
        for i in range(len(p.track_keys))
    ) * sg.epochs
    print(f"corpus: {len(corpus.tracks)} tracks, {len(playlists)} playlists, "
          f"{n_pairs} pair updates over {sg.epochs} epochs")

    results = {}
    for name, impl in sorted(kernels.implementations().items()):
        t0 = time.perf_counter()
        table = train_skipgram(playlists, sg, kernel=impl)
        elapsed = time.perf_counter() - t0
        results[name] = (elapsed, table)
        print(f"{name:>8}: {elapsed:7.2f}s  ({n_pairs / elapsed / 1e3:8.1f}k pairs/s)")

    if len(results) == 2:
        fast = results["cython"][1]
        slow = results["numpy"][1]
        diffs = [
            float(np.max(np.abs(fast.rows[k].astype(np.float64) - slow.rows[k].astype(np.float64))))
            for k in fast.rows
        ]
        print(f"speedup: {results['numpy'][0] / results['cython'][0]:.1f}x; "
              f"max |difference| across vectors: {max(diffs):.2e}")
    else:
        print("compiled kernel unavailable; fallback only")


if __name__ == "__main__":
    main()
