"""Diversified beam search over the trained backbone, resolved to ranked tracks.

Decoding runs G beam-search groups in a fixed order; at every step a group's
token log-probabilities are penalized by lambda times how often earlier groups
already picked that token at the same step. An optional trie built from the
registry masks every continuation that cannot complete a valid ID, so each
hypothesis resolves to at least one track.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._util import ConfigError, FingerprintMismatch
from .corpus import TURN_SEPARATOR
from .id_registry import IdRegistry
from .lm.checkpoint import Checkpoint


@dataclass(frozen=True)
class DecodeConfig:
    groups: int = 10
    beams_per_group: int = 2
    diversity_penalty: float = 0.25
    max_target_len: int = 24
    trie_constrained: bool = True
    length_norm: float = 0.0  # exponent; 0 disables length normalization

    def validate(self, k: int = 1) -> None:
        if self.groups < 1 or self.beams_per_group < 1:
            raise ConfigError("groups and beams_per_group must be >= 1")
        if self.groups * self.beams_per_group < k:
            raise ConfigError(
                f"groups*beams_per_group = {self.groups * self.beams_per_group} cannot cover k={k}"
            )
        if not np.isfinite(self.diversity_penalty) or self.diversity_penalty < 0:
            raise ConfigError("diversity_penalty must be finite and >= 0")


@dataclass
class TrieNode:
    children: dict[int, "TrieNode"] = field(default_factory=dict)
    terminal: bool = False


class IdTrie:
    """Prefix tree over the token sequences of every registry ID."""

    def __init__(self):
        self.root = TrieNode()
        self.size = 0

    @classmethod
    def from_registry(cls, registry: IdRegistry, tokenizer) -> "IdTrie":
        trie = cls()
        for id_string in registry.reverse:
            trie.add(tokenizer.encode(id_string))
        return trie

    def add(self, token_ids: list[int]) -> None:
        node = self.root
        for tok in token_ids:
            node = node.children.setdefault(tok, TrieNode())
        if not node.terminal:
            node.terminal = True
            self.size += 1

    def step(self, node: TrieNode, token: int) -> TrieNode | None:
        return node.children.get(token)

    def accepts(self, token_ids: list[int]) -> bool:
        node = self.root
        for tok in token_ids:
            nxt = node.children.get(tok)
            if nxt is None:
                return False
            node = nxt
        return node.terminal


@dataclass
class _Beam:
    tokens: list[int]
    select_score: float  # cumulative score incl. diversity penalties (beam ordering)
    raw_score: float  # cumulative model log-probability (final ranking)
    node: TrieNode | None


@dataclass
class Hypothesis:
    id_string: str
    score: float  # raw log-probability, optionally length-normalized
    tokens: tuple[int, ...]
    steps: int  # decoding steps spent (generated tokens, EOS excluded)


def diverse_beam_search(
    ckpt: Checkpoint,
    query: str | list[str],
    cfg: DecodeConfig,
    registry: IdRegistry | None = None,
    trie: IdTrie | None = None,
) -> list[Hypothesis]:
    """All completed hypotheses for a query, best (raw log-score) first.

    With `cfg.trie_constrained` a registry (or prebuilt trie) must be supplied;
    the checkpoint's registry fingerprint is validated whenever a registry is
    given.
    """
    cfg.validate()
    if registry is not None and ckpt.registry_fingerprint != registry.fingerprint:
        raise FingerprintMismatch(
            f"checkpoint was trained against registry {ckpt.registry_fingerprint[:12]}..., "
            f"got {registry.fingerprint[:12]}..."
        )
    if cfg.trie_constrained:
        if trie is None:
            if registry is None:
                raise ConfigError("trie-constrained decoding needs a registry or a trie")
            trie = IdTrie.from_registry(registry, ckpt.tokenizer)

    tokenizer = ckpt.tokenizer
    text = query if isinstance(query, str) else TURN_SEPARATOR.join(query)
    src_tokens = tokenizer.encode(text)[: ckpt.model_config.max_input_len]
    if not src_tokens:
        src_tokens = [tokenizer.unk_id]
    src = np.array([src_tokens], dtype=np.int64)
    memory, src_bias = ckpt.model.encode(src)

    eos = tokenizer.eos_id
    bos = tokenizer.bos_id
    root = trie.root if trie is not None else None
    max_len = min(cfg.max_target_len, ckpt.model_config.max_target_len)

    groups: list[list[_Beam]] = [
        [_Beam([], 0.0, 0.0, root)] for _ in range(cfg.groups)
    ]
    finished: list[list[tuple[float, _Beam]]] = [[] for _ in range(cfg.groups)]

    for step in range(max_len):
        live = [(g, b) for g in range(cfg.groups) for b in groups[g]]
        if not live:
            break
        prefixes = np.array(
            [[bos] + b.tokens for _, b in live], dtype=np.int64
        )
        logprobs = ckpt.model.next_token_logprobs(memory, src_bias, prefixes)

        row = 0
        step_counts: dict[int, float] = {}
        for g in range(cfg.groups):
            n_live = len(groups[g])
            if n_live == 0:
                continue
            lp = logprobs[row: row + n_live].copy()
            row += n_live

            if trie is not None:
                masked = np.full_like(lp, -np.inf)
                for bi, beam in enumerate(groups[g]):
                    node = beam.node
                    for tok, child in node.children.items():
                        masked[bi, tok] = lp[bi, tok]
                    if node.terminal:
                        masked[bi, eos] = lp[bi, eos]
                lp = masked
                if not np.isfinite(lp).any():
                    raise RuntimeError("all beams dead under the trie mask")

            penalized = lp.copy()
            if cfg.diversity_penalty > 0 and step_counts:
                for tok, count in step_counts.items():
                    penalized[:, tok] -= cfg.diversity_penalty * count

            select = penalized + np.array([[b.select_score] for b in groups[g]])
            flat = select.reshape(-1)
            n_candidates = min(2 * cfg.beams_per_group, np.isfinite(flat).sum())
            if n_candidates == 0:
                raise RuntimeError("all beams dead under the trie mask")
            # argsort on (-score, beam index, token) for a fully deterministic order
            top = np.argsort(-flat, kind="stable")[:n_candidates]

            vocab = lp.shape[1]
            new_beams: list[_Beam] = []
            for flat_idx in top:
                bi, tok = int(flat_idx // vocab), int(flat_idx % vocab)
                if not np.isfinite(flat[flat_idx]):
                    continue
                beam = groups[g][bi]
                raw = beam.raw_score + float(lp[bi, tok])
                sel = float(flat[flat_idx])
                if tok == eos:
                    if len(finished[g]) < cfg.beams_per_group:
                        done = _Beam(beam.tokens, sel, raw, beam.node)
                        finished[g].append((raw, done))
                        step_counts[tok] = step_counts.get(tok, 0.0) + 1.0
                elif len(new_beams) < cfg.beams_per_group:
                    child = trie.step(beam.node, tok) if trie is not None else None
                    new_beams.append(_Beam(beam.tokens + [tok], sel, raw, child))
                    step_counts[tok] = step_counts.get(tok, 0.0) + 1.0
                if len(new_beams) >= cfg.beams_per_group and len(finished[g]) >= cfg.beams_per_group:
                    break
            if len(finished[g]) >= cfg.beams_per_group:
                new_beams = []
            groups[g] = new_beams

    hypotheses: list[Hypothesis] = []
    for g in range(cfg.groups):
        pool = list(finished[g])
        if not pool:
            # length limit hit before EOS; close out the live beams as-is
            pool = [(b.raw_score, b) for b in groups[g]]
        for raw, beam in pool[: cfg.beams_per_group]:
            steps = len(beam.tokens)
            score = raw / (max(steps, 1) ** cfg.length_norm) if cfg.length_norm else raw
            hypotheses.append(
                Hypothesis(
                    id_string=ckpt.tokenizer.decode(list(beam.tokens)),
                    score=score,
                    tokens=tuple(beam.tokens),
                    steps=steps,
                )
            )
    hypotheses.sort(key=lambda h: (-h.score, h.id_string))
    return hypotheses


@dataclass
class RankedList:
    entries: tuple[tuple[str, float], ...]  # (track_key, score), scores non-increasing

    def __post_init__(self):
        keys = [tk for tk, _ in self.entries]
        if len(set(keys)) != len(keys):
            raise ConfigError("RankedList entries repeat a track")
        scores = [s for _, s in self.entries]
        if any(a < b for a, b in zip(scores, scores[1:])):
            raise ConfigError("RankedList scores must be non-increasing")

    @property
    def track_keys(self) -> list[str]:
        return [tk for tk, _ in self.entries]

    def __len__(self) -> int:
        return len(self.entries)


def rank_hypotheses(hypotheses: list[Hypothesis], registry: IdRegistry, k: int) -> RankedList:
    """Resolve hypotheses in score order, flatten collision buckets
    (popularity order), deduplicate keeping the first occurrence, cut at k."""
    seen: set[str] = set()
    out: list[tuple[str, float]] = []
    for hyp in hypotheses:
        for tk in registry.resolve(hyp.id_string):
            if tk not in seen:
                seen.add(tk)
                out.append((tk, hyp.score))
                if len(out) == k:
                    return RankedList(tuple(out))
    return RankedList(tuple(out))


def recommend(
    ckpt: Checkpoint,
    registry: IdRegistry,
    query: str | list[str],
    k: int,
    cfg: DecodeConfig | None = None,
    trie: IdTrie | None = None,
) -> RankedList:
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    cfg = cfg or DecodeConfig()
    cfg.validate(k)
    hypotheses = diverse_beam_search(ckpt, query, cfg, registry=registry, trie=trie)
    return rank_hypotheses(hypotheses, registry, k)
