"""Catalog data model and corpus construction.

A corpus bundles the track catalog (artists, tracks, playlists) with labeled
recommendation queries. Corpora come from two places: line-delimited record
files (`load_corpus`) or the synthetic generator (`generate_synthetic`), which
plants genre structure so that co-occurrence embeddings and learned IDs have
something real to discover. Track popularity is always recomputed as the
occurrence count over train playlists, never trusted from input.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ._util import ConfigError, DataError, read_jsonl, stable_hash, write_jsonl

TURN_SEPARATOR = " | "


@dataclass(frozen=True)
class Artist:
    artist_key: str
    name: str


@dataclass(frozen=True)
class Track:
    track_key: str
    artist_key: str
    title: str
    popularity: int = 0


@dataclass(frozen=True)
class Playlist:
    playlist_key: str
    title: str
    track_keys: tuple[str, ...]


@dataclass(frozen=True)
class LabeledQuery:
    """A recommendation prompt (one utterance per dialogue turn) with its relevant tracks.

    `relevant_track_keys` keeps label order: training-pair order and sequential
    ID counters depend on it.
    """

    utterances: tuple[str, ...]
    relevant_track_keys: tuple[str, ...]
    playlist_key: str | None = None

    @property
    def text(self) -> str:
        return TURN_SEPARATOR.join(self.utterances)


class Corpus:
    """Immutable after construction; safe for concurrent reads.

    Build via `Corpus.build(...)`, which recomputes popularity from train
    playlists and validates referential integrity.
    """

    def __init__(
        self,
        artists: dict[str, Artist],
        tracks: dict[str, Track],
        playlists: tuple[Playlist, ...],
        train_queries: tuple[LabeledQuery, ...],
        test_queries: tuple[LabeledQuery, ...],
        test_playlist_keys: frozenset[str],
    ):
        self.artists = artists
        self.tracks = tracks
        self.playlists = playlists
        self.train_queries = train_queries
        self.test_queries = test_queries
        self.test_playlist_keys = test_playlist_keys
        self._fingerprint: str | None = None

    @property
    def train_playlists(self) -> tuple[Playlist, ...]:
        return tuple(p for p in self.playlists if p.playlist_key not in self.test_playlist_keys)

    @property
    def test_playlists(self) -> tuple[Playlist, ...]:
        return tuple(p for p in self.playlists if p.playlist_key in self.test_playlist_keys)

    @classmethod
    def build(
        cls,
        artists: Iterable[Artist],
        tracks: Iterable[Track],
        playlists: Iterable[Playlist],
        train_queries: Iterable[LabeledQuery] = (),
        test_queries: Iterable[LabeledQuery] = (),
        test_playlist_keys: Iterable[str] = (),
    ) -> "Corpus":
        artist_map: dict[str, Artist] = {}
        for a in artists:
            if not a.name:
                raise DataError(f"artist {a.artist_key!r} has an empty name")
            if a.artist_key in artist_map:
                raise DataError(f"duplicate artist_key {a.artist_key!r}")
            artist_map[a.artist_key] = a

        track_map: dict[str, Track] = {}
        for t in tracks:
            if t.track_key in track_map:
                raise DataError(f"duplicate track_key {t.track_key!r}")
            if t.artist_key not in artist_map:
                raise DataError(f"track {t.track_key!r} references unknown artist_key {t.artist_key!r}")
            track_map[t.track_key] = t

        corpus = cls(
            artist_map,
            track_map,
            tuple(playlists),
            tuple(train_queries),
            tuple(test_queries),
            frozenset(test_playlist_keys),
        )
        corpus._recompute_popularity()
        corpus.validate()
        return corpus

    def _recompute_popularity(self) -> None:
        counts: dict[str, int] = {k: 0 for k in self.tracks}
        for playlist in self.train_playlists:
            for tk in playlist.track_keys:
                if tk in counts:
                    counts[tk] += 1
        self.tracks = {k: replace(t, popularity=counts[k]) for k, t in self.tracks.items()}

    def validate(self) -> None:
        """Check every invariant; raises DataError on the first violation."""
        seen_playlists: set[str] = set()
        for playlist in self.playlists:
            if playlist.playlist_key in seen_playlists:
                raise DataError(f"duplicate playlist_key {playlist.playlist_key!r}")
            seen_playlists.add(playlist.playlist_key)
            if not playlist.track_keys:
                raise DataError(f"playlist {playlist.playlist_key!r} has no tracks")
            for tk in playlist.track_keys:
                if tk not in self.tracks:
                    raise DataError(
                        f"playlist {playlist.playlist_key!r} references unknown track_key {tk!r}"
                    )
        for label, queries in (("train", self.train_queries), ("test", self.test_queries)):
            for i, q in enumerate(queries):
                if not q.utterances:
                    raise DataError(f"{label} query #{i} has no utterances")
                if not q.relevant_track_keys:
                    raise DataError(f"{label} query #{i} ({q.text!r}) has no relevant tracks")
                if len(set(q.relevant_track_keys)) != len(q.relevant_track_keys):
                    raise DataError(f"{label} query {q.text!r} repeats a relevant track")
                for tk in q.relevant_track_keys:
                    if tk not in self.tracks:
                        raise DataError(f"{label} query {q.text!r} references unknown track_key {tk!r}")
                if q.playlist_key is not None and q.playlist_key not in seen_playlists:
                    raise DataError(f"{label} query {q.text!r} references unknown playlist {q.playlist_key!r}")

        # Popularity must tally with train playlist content.
        total_pop = sum(t.popularity for t in self.tracks.values())
        total_len = sum(len(p.track_keys) for p in self.train_playlists)
        if total_pop != total_len:
            raise DataError(f"popularity sum {total_pop} != train playlist length sum {total_len}")

        if self.test_queries:
            covered = {tk for q in self.train_queries for tk in q.relevant_track_keys}
            for q in self.test_queries:
                for tk in q.relevant_track_keys:
                    if tk not in covered:
                        raise DataError(
                            f"test query {q.text!r} relevant track {tk!r} appears in no train pair"
                        )
            train_texts = {q.text for q in self.train_queries}
            for q in self.test_queries:
                if q.text in train_texts:
                    raise DataError(f"test query text {q.text!r} duplicates a train query")

    def fingerprint(self) -> str:
        if self._fingerprint is None:
            self._fingerprint = stable_hash(
                {
                    "artists": [[a.artist_key, a.name] for a in self.artists.values()],
                    "tracks": [[t.track_key, t.artist_key, t.title] for t in self.tracks.values()],
                    "playlists": [[p.playlist_key, p.title, list(p.track_keys)] for p in self.playlists],
                    "train": [[list(q.utterances), list(q.relevant_track_keys)] for q in self.train_queries],
                    "test": [[list(q.utterances), list(q.relevant_track_keys)] for q in self.test_queries],
                }
            )
        return self._fingerprint


# ---------------------------------------------------------------------------
# Synthetic corpus with planted genre structure
# ---------------------------------------------------------------------------

_GENRE_POOLS: tuple[tuple[str, tuple[str, ...]], ...] = (
    ("rock", ("rock", "guitar", "riffs", "anthems", "garage", "grunge", "amps", "distortion")),
    ("jazz", ("jazz", "swing", "saxophone", "bebop", "blue", "smooth", "horns", "improv")),
    ("electronic", ("electronic", "synth", "techno", "beats", "bass", "rave", "neon", "circuit")),
    ("folk", ("folk", "acoustic", "banjo", "campfire", "roots", "harvest", "porch", "ballads")),
    ("hiphop", ("hiphop", "rap", "flow", "boombap", "rhymes", "street", "cypher", "breaks")),
    ("classical", ("classical", "strings", "sonata", "orchestra", "piano", "symphony", "baroque", "quartet")),
    ("metal", ("metal", "shred", "thrash", "doom", "heavy", "steel", "inferno", "forge")),
    ("country", ("country", "twang", "boots", "highway", "honky", "dust", "rodeo", "prairie")),
    ("reggae", ("reggae", "dub", "island", "skank", "roots", "sunshine", "rhythm", "irie")),
    ("soul", ("soul", "groove", "motown", "velvet", "falsetto", "brass", "shimmer", "heartache")),
    ("ambient", ("ambient", "drone", "glacial", "haze", "drift", "aurora", "weightless", "echoes")),
    ("latin", ("latin", "salsa", "clave", "fiesta", "tropic", "mambo", "caliente", "bailar")),
    ("punk", ("punk", "riot", "spikes", "basement", "snarl", "anarchy", "fast", "loud")),
    ("disco", ("disco", "mirrorball", "funky", "boogie", "strut", "glitter", "nightfever", "groovy")),
    ("blues", ("blues", "delta", "slide", "crossroads", "moan", "juke", "smokey", "lonesome")),
    ("gospel", ("gospel", "choir", "praise", "hallelujah", "spirit", "revival", "clap", "glory")),
)

_MOOD_WORDS = (
    "workout", "study", "focus", "chill", "party", "roadtrip", "morning", "midnight",
    "rainy day", "summer", "winter", "sunday", "dinner", "coding", "running", "slow dancing",
    "late night", "commute", "cleaning", "gaming", "brunch", "bonfire", "spring", "autumn",
)

_TITLE_FILLER = (
    "midnight", "golden", "broken", "electric", "silver", "wild", "lonely", "burning",
    "crystal", "velvet", "neon", "fading", "rising", "hollow", "scarlet", "wandering",
    "river", "city", "heart", "dreams", "shadows", "fire", "rain", "train",
    "summer", "mirror", "thunder", "highway", "garden", "smoke", "echo", "stone",
)

_ARTIST_FIRST = (
    "The", "Young", "Old", "Big", "Little", "Lost", "Golden", "Electric",
    "Broken", "Silent", "Crimson", "Lucky", "Midnight", "Paper", "Iron", "Neon",
)

_ARTIST_SECOND = (
    "Foxes", "Tigers", "Rivers", "Brothers", "Sisters", "Ghosts", "Pilots", "Castles",
    "Wolves", "Saints", "Ramblers", "Sparrows", "Engines", "Harbors", "Motels", "Prophets",
)


@dataclass(frozen=True)
class SynthConfig:
    n_genres: int = 8
    artists_per_genre: int = 25
    tracks_per_artist: float = 10.0  # mean; per-artist counts drawn around it
    n_playlists: int = 5000
    playlist_len_min: int = 10
    playlist_len_max: int = 20
    cross_genre_noise: float = 0.1
    zipf_exponent: float = 0.9  # within-genre sampling weight ~ rank^(-exponent)
    # When > 1, tracks carry a latent mood and a playlist's dominant-genre
    # sampling multiplies weights by this factor for mood-matching tracks;
    # the playlist title's mood word names that mood family. 1.0 disables.
    mood_concentration: float = 1.0

    def validate(self) -> None:
        if self.n_genres < 2:
            raise ConfigError(f"n_genres must be >= 2, got {self.n_genres}")
        if self.artists_per_genre < 2:
            raise ConfigError(f"artists_per_genre must be >= 2, got {self.artists_per_genre}")
        if self.tracks_per_artist < 2:
            raise ConfigError(f"tracks_per_artist must be >= 2, got {self.tracks_per_artist}")
        if self.n_playlists < 100:
            raise ConfigError(f"n_playlists must be >= 100, got {self.n_playlists}")
        if not (0.0 <= self.cross_genre_noise < 1.0):
            raise ConfigError(f"cross_genre_noise must be in [0, 1), got {self.cross_genre_noise}")
        if not (1 <= self.playlist_len_min <= self.playlist_len_max):
            raise ConfigError(
                f"playlist_len_min..playlist_len_max invalid: {self.playlist_len_min}..{self.playlist_len_max}"
            )
        if self.mood_concentration < 1.0:
            raise ConfigError(f"mood_concentration must be >= 1, got {self.mood_concentration}")


def _genre_pool(index: int, rng: np.random.Generator) -> tuple[str, tuple[str, ...]]:
    if index < len(_GENRE_POOLS):
        return _GENRE_POOLS[index]
    # Past the built-in pools, fabricate a genre with pronounceable keywords.
    syllables = ("ba", "ko", "ri", "zu", "me", "ta", "lo", "vi", "sha", "dun")
    name = "".join(rng.choice(len(syllables), size=3).astype(int).astype(str))
    name = "genre" + name
    words = tuple(
        "".join(syllables[i] for i in rng.choice(len(syllables), size=3)) for _ in range(8)
    )
    return name, words


def generate_synthetic(cfg: SynthConfig, seed: int) -> Corpus:
    """Generate a corpus whose playlists cluster around planted genres.

    Each playlist draws ~(1 - cross_genre_noise) of its tracks from one
    dominant genre; its title is templated from that genre's keyword pool plus
    a mood/activity word, and doubles as the labeled query. Identical seeds
    give byte-identical corpora.
    """
    cfg.validate()
    rng = np.random.default_rng(seed)

    genres = [_genre_pool(i, rng) for i in range(cfg.n_genres)]

    moody = cfg.mood_concentration > 1.0
    n_moods = 4
    mood_groups = [
        [w for i, w in enumerate(_MOOD_WORDS) if i % n_moods == m] for m in range(n_moods)
    ]

    artists: list[Artist] = []
    tracks: list[Track] = []
    genre_track_keys: list[list[str]] = [[] for _ in genres]
    track_mood: dict[str, int] = {}
    for gi, (gname, gwords) in enumerate(genres):
        for ai in range(cfg.artists_per_genre):
            artist_key = f"a{len(artists):05d}"
            first = _ARTIST_FIRST[rng.integers(len(_ARTIST_FIRST))]
            second = _ARTIST_SECOND[rng.integers(len(_ARTIST_SECOND))]
            name = f"{first} {gwords[rng.integers(len(gwords))].capitalize()} {second}"
            artists.append(Artist(artist_key, name))
            n_tracks = max(2, int(rng.poisson(cfg.tracks_per_artist)))
            artist_mood = int(rng.integers(n_moods)) if moody else 0
            for _ in range(n_tracks):
                track_key = f"t{len(tracks):06d}"
                n_words = int(rng.integers(3, 7))  # mean 4.5 words per title
                words = []
                for w in range(n_words):
                    pool = gwords if rng.random() < 0.4 else _TITLE_FILLER
                    words.append(pool[rng.integers(len(pool))])
                title = " ".join(words)
                tracks.append(Track(track_key, artist_key, title))
                genre_track_keys[gi].append(track_key)
                if moody:
                    # artists keep a characteristic vibe; tracks mostly inherit it
                    track_mood[track_key] = (
                        artist_mood if rng.random() < 0.7 else int(rng.integers(n_moods))
                    )

    # Within-genre sampling weights: Zipf-like so realized popularity is skewed.
    genre_weights: list[np.ndarray] = []
    for keys in genre_track_keys:
        ranks = rng.permutation(len(keys)) + 1
        w = ranks.astype(np.float64) ** (-cfg.zipf_exponent)
        genre_weights.append(w / w.sum())

    playlists: list[Playlist] = []
    queries: list[LabeledQuery] = []
    for pi in range(cfg.n_playlists):
        gi = int(rng.integers(cfg.n_genres))
        gname, gwords = genres[gi]
        length = int(rng.integers(cfg.playlist_len_min, cfg.playlist_len_max + 1))
        n_dominant = int(np.count_nonzero(rng.random(length) >= cfg.cross_genre_noise))
        n_dominant = min(n_dominant, len(genre_track_keys[gi]))
        dominant_w = genre_weights[gi]
        mood = None
        if moody:
            # mood decided up front; it reweights the dominant-genre draw
            mood_id = int(rng.integers(n_moods))
            mood = mood_groups[mood_id][int(rng.integers(len(mood_groups[mood_id])))]
            boost = np.array(
                [
                    cfg.mood_concentration if track_mood[k] == mood_id else 1.0
                    for k in genre_track_keys[gi]
                ]
            )
            dominant_w = dominant_w * boost
            dominant_w = dominant_w / dominant_w.sum()
        chosen = list(
            rng.choice(genre_track_keys[gi], size=n_dominant, replace=False, p=dominant_w)
        )
        n_other = length - n_dominant
        if n_other > 0:
            other_keys = [k for gj, keys in enumerate(genre_track_keys) if gj != gi for k in keys]
            other_w = np.concatenate([genre_weights[gj] for gj in range(cfg.n_genres) if gj != gi])
            other_w = other_w / other_w.sum()
            chosen += list(rng.choice(other_keys, size=min(n_other, len(other_keys)), replace=False, p=other_w))

        kw = [gwords[i] for i in rng.choice(len(gwords), size=2, replace=False)]
        if mood is None:
            mood = _MOOD_WORDS[rng.integers(len(_MOOD_WORDS))]
        adj = _TITLE_FILLER[rng.integers(len(_TITLE_FILLER))]
        template = int(rng.integers(6))
        if template == 0:
            title = f"{adj} {kw[0]} {kw[1]} for {mood}"
        elif template == 1:
            title = f"{mood} {kw[0]} {adj} mix"
        elif template == 2:
            title = f"best {adj} {kw[0]} {kw[1]} tracks"
        elif template == 3:
            title = f"{kw[0]} vibes for {mood}"
        elif template == 4:
            title = f"{adj} {kw[0]} {mood} session"
        else:
            title = f"{kw[0]} and {kw[1]} for {adj} {mood}"

        playlist_key = f"p{pi:06d}"
        playlists.append(Playlist(playlist_key, title, tuple(chosen)))
        queries.append(LabeledQuery((title,), tuple(chosen), playlist_key=playlist_key))

    return Corpus.build(artists, tracks, playlists, train_queries=queries)


# ---------------------------------------------------------------------------
# File ingestion
# ---------------------------------------------------------------------------

def _require(rec: dict, key: str, path: str | Path, lineno: int) -> object:
    if key not in rec:
        raise DataError(f"{path}:{lineno}: missing field {key!r}")
    return rec[key]


def load_corpus(
    tracks_path: str | Path,
    playlists_path: str | Path,
    queries_path: str | Path | None = None,
    test_queries_path: str | Path | None = None,
) -> Corpus:
    """Load a corpus from line-delimited record files.

    All queries land in the train split unless `test_queries_path` is given;
    use `split` to carve out a test set. Errors cite the offending file line.
    """
    artists: dict[str, Artist] = {}
    tracks: list[Track] = []
    for lineno, rec in read_jsonl(tracks_path):
        track_key = str(_require(rec, "track_key", tracks_path, lineno))
        artist_key = str(_require(rec, "artist_key", tracks_path, lineno))
        title = str(_require(rec, "title", tracks_path, lineno))
        artist_name = str(_require(rec, "artist_name", tracks_path, lineno))
        if artist_key in artists and artists[artist_key].name != artist_name:
            raise DataError(
                f"{tracks_path}:{lineno}: artist_key {artist_key!r} re-declared with a different name"
            )
        artists.setdefault(artist_key, Artist(artist_key, artist_name))
        if any(t.track_key == track_key for t in tracks):
            raise DataError(f"{tracks_path}:{lineno}: duplicate track_key {track_key!r}")
        tracks.append(Track(track_key, artist_key, title))

    track_keys = {t.track_key for t in tracks}
    playlists: list[Playlist] = []
    for lineno, rec in read_jsonl(playlists_path):
        playlist_key = str(_require(rec, "playlist_key", playlists_path, lineno))
        title = str(_require(rec, "title", playlists_path, lineno))
        keys = _require(rec, "track_keys", playlists_path, lineno)
        if not isinstance(keys, list) or not keys:
            raise DataError(f"{playlists_path}:{lineno}: track_keys must be a non-empty list")
        for tk in keys:
            if tk not in track_keys:
                raise DataError(f"{playlists_path}:{lineno}: unknown track_key {tk!r}")
        playlists.append(Playlist(playlist_key, title, tuple(keys)))

    def load_queries(path: str | Path) -> list[LabeledQuery]:
        out = []
        for lineno, rec in read_jsonl(path):
            utterances = _require(rec, "utterances", path, lineno)
            relevant = _require(rec, "relevant_track_keys", path, lineno)
            if not isinstance(utterances, list) or not utterances:
                raise DataError(f"{path}:{lineno}: utterances must be a non-empty list")
            if not isinstance(relevant, list) or not relevant:
                raise DataError(f"{path}:{lineno}: relevant_track_keys must be a non-empty list")
            for tk in relevant:
                if tk not in track_keys:
                    raise DataError(f"{path}:{lineno}: unknown track_key {tk!r}")
            out.append(
                LabeledQuery(
                    tuple(str(u) for u in utterances),
                    tuple(str(t) for t in relevant),
                    playlist_key=rec.get("playlist_key"),
                )
            )
        return out

    train_queries = load_queries(queries_path) if queries_path else []
    test_queries = load_queries(test_queries_path) if test_queries_path else []
    test_playlist_keys = frozenset(
        q.playlist_key for q in test_queries if q.playlist_key is not None
    )
    return Corpus.build(
        artists.values(), tracks, playlists, train_queries, test_queries, test_playlist_keys
    )


def save_corpus(corpus: Corpus, out_dir: str | Path) -> None:
    out = Path(out_dir)
    write_jsonl(
        out / "tracks.jsonl",
        (
            {
                "track_key": t.track_key,
                "artist_key": t.artist_key,
                "title": t.title,
                "artist_name": corpus.artists[t.artist_key].name,
            }
            for t in corpus.tracks.values()
        ),
    )
    write_jsonl(
        out / "playlists.jsonl",
        (
            {"playlist_key": p.playlist_key, "title": p.title, "track_keys": list(p.track_keys)}
            for p in corpus.playlists
        ),
    )
    for name, queries in (("queries_train.jsonl", corpus.train_queries), ("queries_test.jsonl", corpus.test_queries)):
        write_jsonl(
            out / name,
            (
                {
                    "utterances": list(q.utterances),
                    "relevant_track_keys": list(q.relevant_track_keys),
                    **({"playlist_key": q.playlist_key} if q.playlist_key else {}),
                }
                for q in queries
            ),
        )


def load_corpus_dir(corpus_dir: str | Path) -> Corpus:
    d = Path(corpus_dir)
    test_path = d / "queries_test.jsonl"
    return load_corpus(
        d / "tracks.jsonl",
        d / "playlists.jsonl",
        d / "queries_train.jsonl",
        test_path if test_path.exists() else None,
    )


# ---------------------------------------------------------------------------
# Splitting and training pairs
# ---------------------------------------------------------------------------

def split(corpus: Corpus, test_fraction: float, seed: int) -> Corpus:
    """Partition playlists (and their queries) into train/test.

    Any test playlist containing a track absent from every train playlist is
    moved back to train, as is any test query whose relevant tracks would
    otherwise never appear in a train pair, and any test query whose text
    duplicates a train query. Deterministic given (corpus, test_fraction, seed).
    """
    if not (0.0 < test_fraction < 0.5):
        raise ConfigError(f"test_fraction must be in (0, 0.5), got {test_fraction}")
    rng = np.random.default_rng(seed)

    n = len(corpus.playlists)
    order = rng.permutation(n)
    n_test = int(round(test_fraction * n))
    test_keys = {corpus.playlists[i].playlist_key for i in order[:n_test]}

    # Guard 1: no test playlist may hold a track unseen in train playlists.
    train_count: dict[str, int] = {}
    for p in corpus.playlists:
        if p.playlist_key not in test_keys:
            for tk in p.track_keys:
                train_count[tk] = train_count.get(tk, 0) + 1
    for p in corpus.playlists:
        if p.playlist_key in test_keys and any(train_count.get(tk, 0) == 0 for tk in p.track_keys):
            test_keys.discard(p.playlist_key)
            for tk in p.track_keys:
                train_count[tk] = train_count.get(tk, 0) + 1

    all_queries = list(corpus.train_queries) + list(corpus.test_queries)
    playlist_keys = {p.playlist_key for p in corpus.playlists}
    linked = [q for q in all_queries if q.playlist_key in playlist_keys]
    unlinked = [q for q in all_queries if q.playlist_key not in playlist_keys]

    train_q = [q for q in linked if q.playlist_key not in test_keys]
    test_q = [q for q in linked if q.playlist_key in test_keys]
    if unlinked:
        coins = rng.random(len(unlinked))
        for q, c in zip(unlinked, coins):
            (test_q if c < test_fraction else train_q).append(q)

    # Guard 2: every test-relevant track must appear in >= 1 train pair.
    covered = {tk for q in train_q for tk in q.relevant_track_keys}
    kept_test = []
    for q in test_q:
        if all(tk in covered for tk in q.relevant_track_keys):
            kept_test.append(q)
        else:
            train_q.append(q)
            covered.update(q.relevant_track_keys)
            if q.playlist_key is not None:
                test_keys.discard(q.playlist_key)

    # Guard 3: train/test query texts stay disjoint.
    train_texts = {q.text for q in train_q}
    test_q = []
    for q in kept_test:
        if q.text in train_texts:
            train_q.append(q)
            if q.playlist_key is not None:
                test_keys.discard(q.playlist_key)
        else:
            test_q.append(q)

    return Corpus.build(
        corpus.artists.values(),
        corpus.tracks.values(),
        corpus.playlists,
        train_q,
        test_q,
        test_keys,
    )


def to_training_pairs(
    train_queries: Sequence[LabeledQuery], registry
) -> list[tuple[str, str]]:
    """One (input text, target ID) pair per (query, relevant track), in label order."""
    pairs: list[tuple[str, str]] = []
    for q in train_queries:
        text = q.text
        for tk in q.relevant_track_keys:
            target = registry.forward.get(tk)
            if target is None:
                raise DataError(f"track {tk!r} missing from registry {registry.strategy!r}")
            pairs.append((text, target))
    return pairs
