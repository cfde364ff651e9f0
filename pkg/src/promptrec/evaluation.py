"""Metrics, paired significance tests, experiment orchestration.

Hits@k is capped recall: |top-k ∩ relevant| / min(k, |relevant|). Diversity is
the Shannon entropy (bits) of the artist pool across all predictions. Paired
two-sided Student t-tests get Bonferroni adjustment; the t CDF is computed via
the regularized incomplete beta function (continued fraction), so reports are
reproducible bit-for-bit with no external dependencies.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

from ._util import ConfigError, DataError, atomic_write_text
from .corpus import Corpus, LabeledQuery
from .decoder import DecodeConfig, IdTrie, RankedList, diverse_beam_search, rank_hypotheses


def hits_at_k(ranked: RankedList, relevant: set[str] | Sequence[str], k: int = 10) -> float:
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    relevant = set(relevant)
    if not relevant:
        raise DataError("empty relevant set")
    top = ranked.track_keys[:k]
    return len(set(top) & relevant) / min(k, len(relevant))


def artist_entropy(ranked_lists: Sequence[RankedList], corpus: Corpus) -> float:
    """Shannon entropy (bits) of the pooled predicted-artist multiset."""
    counts: dict[str, int] = {}
    for ranked in ranked_lists:
        for tk in ranked.track_keys:
            ak = corpus.tracks[tk].artist_key
            counts[ak] = counts.get(ak, 0) + 1
    total = sum(counts.values())
    if total == 0:
        raise DataError("no predictions to pool")
    h = 0.0
    for count in counts.values():
        p = count / total
        h -= p * math.log2(p)
    return h


# ---------------------------------------------------------------------------
# Student t-test with Bonferroni correction
# ---------------------------------------------------------------------------

def _betacf(a: float, b: float, x: float) -> float:
    # Lentz's continued fraction for the incomplete beta function.
    max_iter, eps, fpmin = 300, 3e-16, 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < fpmin:
        d = fpmin
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < fpmin:
            d = fpmin
        c = 1.0 + aa / c
        if abs(c) < fpmin:
            c = fpmin
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < fpmin:
            d = fpmin
        c = 1.0 + aa / c
        if abs(c) < fpmin:
            c = fpmin
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            break
    return h


def betainc_regularized(a: float, b: float, x: float) -> float:
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    log_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_sf_two_sided(t: float, dof: int) -> float:
    """Two-sided tail probability of Student's t."""
    if dof < 1:
        raise ConfigError(f"degrees of freedom must be >= 1, got {dof}")
    return betainc_regularized(dof / 2.0, 0.5, dof / (dof + t * t))


def paired_ttest_bonferroni(
    scores_a: Sequence[float], scores_b: Sequence[float], m_comparisons: int = 1
) -> float:
    """Adjusted p-value for paired per-query scores.

    Zero-variance differences short-circuit: p=1 when the mean difference is
    also zero, p=0 otherwise.
    """
    if len(scores_a) != len(scores_b):
        raise ConfigError("paired scores must have equal length")
    n = len(scores_a)
    if n < 2:
        raise ConfigError("need at least 2 paired scores")
    if m_comparisons < 1:
        raise ConfigError("m_comparisons must be >= 1")
    diffs = [a - b for a, b in zip(scores_a, scores_b)]
    mean = sum(diffs) / n
    var = sum((d - mean) ** 2 for d in diffs) / (n - 1)
    if var == 0.0:
        return 1.0 if mean == 0.0 else 0.0
    t = mean / math.sqrt(var / n)
    p = t_sf_two_sided(t, n - 1)
    return min(1.0, p * m_comparisons)


# ---------------------------------------------------------------------------
# Experiment orchestration
# ---------------------------------------------------------------------------

Ranker = Callable[[LabeledQuery, int], RankedList]


@dataclass
class MethodResult:
    name: str
    per_query: list[float]
    mean: float
    entropy: float


@dataclass
class EvalReport:
    k: int
    methods: dict[str, MethodResult] = field(default_factory=dict)
    significance: dict[str, float] = field(default_factory=dict)  # "a vs b" -> adjusted p
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "methods": {
                name: {
                    "mean": r.mean,
                    "entropy": r.entropy,
                    "per_query": r.per_query,
                }
                for name, r in sorted(self.methods.items())
            },
            "significance": dict(sorted(self.significance.items())),
            "metadata": self.metadata,
        }

    def render(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1, ensure_ascii=False) + "\n"

    def save(self, path: str | Path) -> None:
        atomic_write_text(path, self.render())

    @classmethod
    def load(cls, path: str | Path) -> "EvalReport":
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
        report = cls(k=data["k"], metadata=data.get("metadata", {}))
        for name, entry in data["methods"].items():
            report.methods[name] = MethodResult(
                name=name,
                per_query=list(entry["per_query"]),
                mean=entry["mean"],
                entropy=entry["entropy"],
            )
        report.significance = dict(data.get("significance", {}))
        return report


def run_experiment(
    corpus: Corpus,
    methods: dict[str, Ranker],
    k: int = 10,
    seed: int = 0,
    metadata: dict | None = None,
) -> EvalReport:
    """Evaluate each method over every test query; fill the pairwise
    significance matrix when two or more methods are supplied."""
    if not corpus.test_queries:
        raise DataError("corpus has no test queries")
    report = EvalReport(k=k, metadata={"seed": seed, **(metadata or {})})
    for name, ranker in methods.items():
        per_query: list[float] = []
        lists: list[RankedList] = []
        for q in corpus.test_queries:
            ranked = ranker(q, k)
            lists.append(ranked)
            per_query.append(hits_at_k(ranked, set(q.relevant_track_keys), k))
        mean = sum(per_query) / len(per_query)
        entropy = artist_entropy([r for r in lists if len(r)], corpus) if any(len(r) for r in lists) else 0.0
        report.methods[name] = MethodResult(name, per_query, mean, entropy)

    names = list(report.methods)
    pairs = [(a, b) for i, a in enumerate(names) for b in names[i + 1:]]
    for a, b in pairs:
        report.significance[f"{a} vs {b}"] = paired_ttest_bonferroni(
            report.methods[a].per_query, report.methods[b].per_query, m_comparisons=len(pairs)
        )
    return report


def model_ranker(ckpt, registry, cfg: DecodeConfig, trie: IdTrie | None = None) -> Ranker:
    """Ranker closure over a trained checkpoint (trie built once)."""
    if cfg.trie_constrained and trie is None:
        trie = IdTrie.from_registry(registry, ckpt.tokenizer)

    def rank(query: LabeledQuery, k: int) -> RankedList:
        hyps = diverse_beam_search(ckpt, query.text, cfg, registry=registry, trie=trie)
        return rank_hypotheses(hyps, registry, k)

    return rank


def sweep_homogeneity(
    ckpt,
    registry,
    corpus: Corpus,
    lambda_values: Sequence[float],
    k: int = 10,
    base_cfg: DecodeConfig | None = None,
) -> list[tuple[float, float, float]]:
    """(lambda, hits@k, pooled artist entropy) per penalty value."""
    if not lambda_values:
        raise ConfigError("lambda_values must be non-empty")
    base = base_cfg or DecodeConfig()
    rows: list[tuple[float, float, float]] = []
    trie = IdTrie.from_registry(registry, ckpt.tokenizer) if base.trie_constrained else None
    for lam in lambda_values:
        cfg = DecodeConfig(
            groups=base.groups,
            beams_per_group=base.beams_per_group,
            diversity_penalty=lam,
            max_target_len=base.max_target_len,
            trie_constrained=base.trie_constrained,
            length_norm=base.length_norm,
        )
        ranker = model_ranker(ckpt, registry, cfg, trie=trie)
        hits: list[float] = []
        lists: list[RankedList] = []
        for q in corpus.test_queries:
            ranked = ranker(q, k)
            lists.append(ranked)
            hits.append(hits_at_k(ranked, set(q.relevant_track_keys), k))
        rows.append(
            (
                float(lam),
                sum(hits) / len(hits),
                artist_entropy([r for r in lists if len(r)], corpus),
            )
        )
    return rows


def render_sweep(rows: list[tuple[float, float, float]]) -> str:
    lines = ["lambda\thits\tentropy"]
    for lam, hits, entropy in rows:
        lines.append(f"{lam}\t{hits}\t{entropy}")
    return "\n".join(lines) + "\n"
