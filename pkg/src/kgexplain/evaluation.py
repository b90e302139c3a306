"""Context splitting and fidelity metrics (ROC-AUC, S-MRR, O-MRR)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import DataError
from .kg import Fact, KnowledgeGraph


@dataclass(frozen=True)
class FidelityRecord:
    """Fidelity of one surrogate on its held-out split. Metrics are None
    when undefined (e.g. single-class test labels, no ranking queries)."""

    roc_auc: float | None
    s_mrr: float | None
    o_mrr: float | None
    test_size: int
    scope: str

    def __post_init__(self):
        for name in ("roc_auc", "s_mrr", "o_mrr"):
            v = getattr(self, name)
            if v is not None and not (0.0 <= v <= 1.0):
                raise ValueError(f"{name} out of [0, 1]: {v}")
        if self.test_size < 1:
            raise ValueError("test_size must be >= 1")


def split_context(context, test_fraction: float = 0.3, seed: int = 0):
    """Stratified train/test split that keeps each true fact and its
    corruptions on the same side (split by corruption group)."""
    from .scoping import Context  # local import: scoping depends on kg only

    if not isinstance(context, Context):
        raise TypeError("split_context expects a Context")
    if not (0.0 < test_fraction < 1.0):
        raise ValueError("test_fraction must be in (0, 1)")
    facts = context.facts
    if len(facts) < 4:
        raise DataError(f"context too small to split ({len(facts)} facts)")
    labels = {cf.fact.positive for cf in facts}
    if len(labels) < 2:
        raise DataError("context has a single class; cannot split")
    groups = sorted({cf.group for cf in facts})
    if len(groups) < 2:
        raise DataError("context has a single corruption group; cannot split")

    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(groups))
    n_test = int(round(len(groups) * test_fraction))
    n_test = min(max(n_test, 1), len(groups) - 1)
    test_groups = {groups[i] for i in perm[:n_test]}

    train_facts = tuple(cf for cf in facts if cf.group not in test_groups)
    test_facts = tuple(cf for cf in facts if cf.group in test_groups)
    return (
        Context(context.predicate, train_facts, context.scope),
        Context(context.predicate, test_facts, context.scope),
    )


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """Fractional ranking (1-based); ties get the mean of their ranks."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values), dtype=float)
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def roc_auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """P(random positive outranks random negative); ties count 1/2
    (Mann-Whitney U formulation)."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be 1-D of equal length")
    pos = labels > 0
    n_pos = int(pos.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DataError("roc_auc needs both classes")
    ranks = _average_ranks(scores)
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def mrr(
    expl,
    queries: Sequence[tuple[Fact, str]],
    kg: KnowledgeGraph,
) -> float:
    """Filtered mean reciprocal rank of the true entity under the
    surrogate's scores.

    ``expl`` is an Explanation (or any object with ``score(fact)``, or a
    plain callable). Candidates come from the predicate domains D^p /
    D̄^p; candidates other than the query's entity that form a known
    positive fact of ``kg`` are removed (filtered setting); ties get the
    average rank.
    """
    if not queries:
        raise DataError("mrr needs at least one query")
    score: Callable[[Fact], float]
    if callable(expl):
        score = expl
    elif hasattr(expl, "score"):
        score = expl.score
    else:
        raise TypeError("expl must be callable or expose .score(fact)")

    total = 0.0
    for fact, side in queries:
        s, p, o = fact[:3]
        if side == "subject":
            pool = kg.subject_domain(p)
            true_val = s
            make = lambda c: Fact(c, p, o)
        elif side == "object":
            pool = kg.object_domain(p)
            true_val = o
            make = lambda c: Fact(s, p, c)
        else:
            raise ValueError(f"side must be 'subject' or 'object', got {side!r}")
        if true_val not in pool:
            raise DataError(f"query {fact[:3]}: true {side} not in candidate pool")
        candidates = [c for c in pool if c == true_val or not kg.has(*make(c)[:3])]
        cand_scores = np.array([score(make(c)) for c in candidates], dtype=float)
        true_idx = candidates.index(true_val)
        true_score = cand_scores[true_idx]
        better = int((cand_scores > true_score).sum())
        tied = int((cand_scores == true_score).sum())  # includes the true one
        rank = better + (tied + 1) / 2.0
        total += 1.0 / rank
    return total / len(queries)


def weighted_fidelity(records: Sequence[FidelityRecord]) -> FidelityRecord:
    """Per-metric mean weighted by test-set size; records missing a metric
    do not contribute to it. Combined size is the sum of all sizes."""
    if not records:
        raise DataError("weighted_fidelity needs at least one record")

    def combine(name: str) -> float | None:
        pairs = [(getattr(r, name), r.test_size) for r in records if getattr(r, name) is not None]
        if not pairs:
            return None
        w = sum(n for _, n in pairs)
        return sum(v * n for v, n in pairs) / w

    scopes = {r.scope for r in records}
    return FidelityRecord(
        roc_auc=combine("roc_auc"),
        s_mrr=combine("s_mrr"),
        o_mrr=combine("o_mrr"),
        test_size=sum(r.test_size for r in records),
        scope=scopes.pop() if len(scopes) == 1 else "mixed",
    )
