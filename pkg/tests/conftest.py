import os

# Single-threaded BLAS: faster at this artifact's matrix sizes and keeps
# results bit-reproducible regardless of the host's core count.
os.environ.setdefault("OMP_NUM_THREADS", "1")
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")

import numpy as np
import pytest

from promptrec.corpus import Corpus, SynthConfig, generate_synthetic, split


SMALL_SYNTH = SynthConfig(
    n_genres=4,
    artists_per_genre=6,
    tracks_per_artist=6.0,
    n_playlists=300,
    playlist_len_min=6,
    playlist_len_max=10,
    cross_genre_noise=0.1,
)


@pytest.fixture(scope="session")
def small_corpus() -> Corpus:
    """A few hundred tracks; enough structure for fast integration tests."""
    return split(generate_synthetic(SMALL_SYNTH, 7), 0.15, 8)


@pytest.fixture(scope="session")
def default_corpus() -> Corpus:
    """The full default planted corpus (seed 7), shared across heavy tests."""
    return split(generate_synthetic(SynthConfig(), 7), 0.1, 8)
