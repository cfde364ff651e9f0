"""Learned track identifiers from sparse codings of embedding vectors.

Every track vector is approximated as a sparse combination of a small learned
dictionary of unit atoms. Sorting the coding's coefficients by magnitude and
keeping signed atom indices yields a fixed-length token ID whose shared
prefixes track similarity in the embedding space.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._util import ConfigError, DataError, atomic_write_text
from .embeddings import EmbeddingTable

DICTIONARY_MAGIC = "T2TDICT1"
PAD_TOKEN = "<pad>"
_COEF_EPS = 1e-10  # coefficients below this are numerically zero


@dataclass
class SparseCoding:
    """Up to c (atom index, coefficient) entries with distinct indices."""

    entries: tuple[tuple[int, float], ...]

    def residual_norm(self, x: np.ndarray, atoms: np.ndarray) -> float:
        recon = np.zeros_like(x)
        for idx, coef in self.entries:
            recon += coef * atoms[idx]
        return float(np.linalg.norm(x - recon))


@dataclass
class Dictionary:
    atoms: np.ndarray  # (s, d), unit rows
    c: int
    seed: int
    iterations: int = 0
    final_error: float = float("nan")
    error_trace: tuple[float, ...] = field(default_factory=tuple)

    @property
    def s(self) -> int:
        return int(self.atoms.shape[0])

    @property
    def d(self) -> int:
        return int(self.atoms.shape[1])

    def validate(self) -> None:
        norms = np.linalg.norm(self.atoms, axis=1)
        if not np.allclose(norms, 1.0, atol=1e-6):
            raise DataError(f"dictionary atoms not unit-norm (max deviation {abs(norms - 1).max():.2e})")
        if not (1 <= self.c <= self.s):
            raise ConfigError(f"need 1 <= c <= s, got c={self.c} s={self.s}")


def sparse_code(x: np.ndarray, dictionary: Dictionary) -> SparseCoding:
    """Orthogonal matching pursuit with at most `dictionary.c` atoms.

    Greedily picks the atom most correlated with the residual, re-solves least
    squares on the selected support, and repeats; stops early when the
    residual correlation is numerically zero (so x = 0 gives an empty coding).
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (dictionary.d,):
        raise DataError(f"vector has shape {x.shape}, dictionary expects ({dictionary.d},)")
    if not np.all(np.isfinite(x)):
        raise DataError("cannot sparse-code a non-finite vector")
    support, coefs = _omp_batch(x[None, :], dictionary.atoms, dictionary.c)
    entries = tuple(
        (int(j), float(a))
        for j, a in zip(support[0], coefs[0])
        if j >= 0 and abs(a) > _COEF_EPS
    )
    return SparseCoding(entries)


def _omp_batch(X: np.ndarray, atoms: np.ndarray, c: int) -> tuple[np.ndarray, np.ndarray]:
    """OMP over the rows of X. Returns (support, coefs), each (n, c); unused
    slots hold index -1 / coefficient 0."""
    n, d = X.shape
    s = atoms.shape[0]
    gram = atoms @ atoms.T
    support = np.full((n, c), -1, dtype=np.int64)
    coefs = np.zeros((n, c), dtype=np.float64)
    residual = X.copy()
    active = np.ones(n, dtype=bool)

    for step in range(c):
        if not active.any():
            break
        corr = residual[active] @ atoms.T
        # Never re-select an atom already on the support.
        rows = np.flatnonzero(active)
        for r, row in enumerate(rows):
            corr[r, support[row, :step][support[row, :step] >= 0]] = 0.0
        best = np.argmax(np.abs(corr), axis=1)
        best_val = np.abs(corr[np.arange(len(rows)), best])
        alive = best_val > 1e-12
        for r, row in enumerate(rows):
            if not alive[r]:
                active[row] = False
                continue
            support[row, step] = best[r]
            sel = support[row, : step + 1]
            G = gram[np.ix_(sel, sel)]
            b = atoms[sel] @ X[row]
            try:
                a = np.linalg.solve(G, b)
            except np.linalg.LinAlgError:
                a = np.linalg.lstsq(atoms[sel].T, X[row], rcond=None)[0]
            coefs[row, : step + 1] = a
            residual[row] = X[row] - a @ atoms[sel]
    return support, coefs


def derive_id(coding: SparseCoding, c: int) -> str:
    """Render a coding as c signed-index tokens, largest |coefficient| first.

    Ties break toward the lower atom index; short codings are padded so every
    ID is exactly c tokens long.
    """
    ordered = sorted(coding.entries, key=lambda e: (-abs(e[1]), e[0]))
    tokens = [f"<{'+' if coef > 0 else '-'}{idx}>" for idx, coef in ordered[:c]]
    tokens += [PAD_TOKEN] * (c - len(tokens))
    return "".join(tokens)


def learn_dictionary(
    table: EmbeddingTable, s: int, c: int, iters: int = 30, seed: int = 0
) -> Dictionary:
    """Alternating sparse coding / block-coordinate atom updates.

    Atoms start as a seeded sample of item vectors (normalized). Each
    iteration re-codes every item, then updates atoms one at a time against
    the residual that excludes them, renormalizing after each update; dead
    atoms are re-seeded from the worst-reconstructed item. Per-item codings
    are kept only if OMP beats a least-squares refit of the previous support,
    which makes the mean reconstruction error non-increasing.
    """
    if c < 1 or c > s:
        raise ConfigError(f"need 1 <= c <= s, got c={c} s={s}")
    if iters < 1:
        raise ConfigError(f"iters must be >= 1, got {iters}")
    keys, X = table.matrix()
    n, d = X.shape
    if n < s:
        raise DataError(f"dictionary size {s} exceeds the {n} embedded items")
    for key, row in zip(keys, X):
        if not np.all(np.isfinite(row)):
            raise DataError(f"non-finite embedding for track {key!r}")

    rng = np.random.default_rng(seed)
    init_rows = rng.choice(n, size=s, replace=False)
    atoms = X[init_rows].copy()
    norms = np.linalg.norm(atoms, axis=1)
    degenerate = norms < 1e-12
    if degenerate.any():
        atoms[degenerate] = rng.standard_normal((int(degenerate.sum()), d))
        norms = np.linalg.norm(atoms, axis=1)
    atoms /= norms[:, None]

    prev_support: np.ndarray | None = None
    support = np.full((n, c), -1, dtype=np.int64)
    coefs = np.zeros((n, c), dtype=np.float64)
    trace: list[float] = []

    for iteration in range(iters):
        support, coefs = _omp_batch(X, atoms, c)
        if prev_support is not None:
            _keep_better_refit(X, atoms, support, coefs, prev_support)
        recon = _reconstruct(atoms, support, coefs)
        errs = np.linalg.norm(X - recon, axis=1) ** 2
        trace.append(float(errs.mean()))

        # Block coordinate descent over atoms.
        for j in range(s):
            mask = (support == j).any(axis=1)
            if not mask.any():
                worst = int(np.argmax(errs))
                vec = X[worst]
                nv = np.linalg.norm(vec)
                atoms[j] = vec / nv if nv > 1e-12 else atoms[j]
                continue
            rows = np.flatnonzero(mask)
            slot = np.argmax(support[rows] == j, axis=1)
            a_j = coefs[rows, slot]
            partial = _reconstruct(atoms, support[rows], coefs[rows])
            partial -= a_j[:, None] * atoms[j]
            direction = a_j @ (X[rows] - partial)
            norm = float(np.linalg.norm(direction))
            if norm > 1e-12:
                atoms[j] = direction / norm
            errs[rows] = np.linalg.norm(X[rows] - partial - a_j[:, None] * atoms[j], axis=1) ** 2
        prev_support = support

    support, coefs = _omp_batch(X, atoms, c)
    if prev_support is not None:
        _keep_better_refit(X, atoms, support, coefs, prev_support)
    final_err = float((np.linalg.norm(X - _reconstruct(atoms, support, coefs), axis=1) ** 2).mean())
    trace.append(final_err)

    return Dictionary(
        atoms=atoms, c=c, seed=seed, iterations=iters,
        final_error=final_err, error_trace=tuple(trace),
    )


def _reconstruct(atoms: np.ndarray, support: np.ndarray, coefs: np.ndarray) -> np.ndarray:
    safe = np.where(support >= 0, support, 0)
    gathered = atoms[safe] * coefs[..., None]
    gathered[support < 0] = 0.0
    return gathered.sum(axis=-2)


def _keep_better_refit(
    X: np.ndarray,
    atoms: np.ndarray,
    support: np.ndarray,
    coefs: np.ndarray,
    prev_support: np.ndarray,
) -> None:
    """Replace a row's fresh OMP coding with a least-squares refit of its
    previous support whenever the refit reconstructs better. Guarantees the
    per-item error never rises across an atom update."""
    new_err = np.linalg.norm(X - _reconstruct(atoms, support, coefs), axis=1) ** 2
    for row in range(X.shape[0]):
        sel = prev_support[row][prev_support[row] >= 0]
        if len(sel) == 0:
            continue
        G = atoms[sel] @ atoms[sel].T
        b = atoms[sel] @ X[row]
        try:
            a = np.linalg.solve(G, b)
        except np.linalg.LinAlgError:
            a = np.linalg.lstsq(atoms[sel].T, X[row], rcond=None)[0]
        err = float(np.linalg.norm(X[row] - a @ atoms[sel]) ** 2)
        if err < new_err[row] - 1e-15:
            support[row, : len(sel)] = sel
            support[row, len(sel):] = -1
            coefs[row, : len(sel)] = a
            coefs[row, len(sel):] = 0.0


def assign_semantic_ids(table: EmbeddingTable, dictionary: Dictionary) -> dict[str, str]:
    """Sparse-code and render an ID for every embedded track."""
    if table.dim != dictionary.d:
        raise DataError(f"table dim {table.dim} != dictionary dim {dictionary.d}")
    keys, X = table.matrix()
    support, coefs = _omp_batch(X, dictionary.atoms, dictionary.c)
    ids: dict[str, str] = {}
    for row, key in enumerate(keys):
        entries = tuple(
            (int(j), float(a))
            for j, a in zip(support[row], coefs[row])
            if j >= 0 and abs(a) > _COEF_EPS
        )
        ids[key] = derive_id(SparseCoding(entries), dictionary.c)
    return ids


def collision_stats(ids: dict[str, str]) -> tuple[int, int]:
    """(number of tracks sharing an ID with another track, largest bucket size)."""
    buckets: dict[str, int] = {}
    for token_id in ids.values():
        buckets[token_id] = buckets.get(token_id, 0) + 1
    colliding = sum(count for count in buckets.values() if count > 1)
    largest = max(buckets.values(), default=0)
    return colliding, largest


def token_lexicon(s: int) -> list[str]:
    """The 2s signed atom tokens plus the pad token, in a stable order."""
    tokens = []
    for j in range(s):
        tokens.append(f"<+{j}>")
        tokens.append(f"<-{j}>")
    tokens.append(PAD_TOKEN)
    return tokens


def save_dictionary(dictionary: Dictionary, path: str | Path) -> None:
    lines = [f"{DICTIONARY_MAGIC} {dictionary.s} {dictionary.c} {dictionary.d} {dictionary.seed}"]
    for row in dictionary.atoms:
        lines.append(" ".join(np.format_float_positional(v, unique=True, trim="0") for v in row))
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_dictionary(path: str | Path) -> Dictionary:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 5 or header[0] != DICTIONARY_MAGIC:
            raise DataError(f"{path}: bad dictionary header")
        s, c, d, seed = int(header[1]), int(header[2]), int(header[3]), int(header[4])
        atoms = np.array([[float(v) for v in fh.readline().split()] for _ in range(s)])
    if atoms.shape != (s, d):
        raise DataError(f"{path}: expected {s}x{d} atoms, got {atoms.shape}")
    dictionary = Dictionary(atoms=atoms, c=c, seed=seed)
    dictionary.validate()
    return dictionary
