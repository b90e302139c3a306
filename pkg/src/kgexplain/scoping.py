"""Explanation contexts: global, local (embedding clusters), per-instance.

A context is the labeled sample of potential facts Algorithm callers
learn surrogates on: the true facts of one predicate plus corruption-
derived negatives. Each true fact and the negatives derived from it share
a group id so splits never leak a fact's corruptions across sides.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.cluster.hierarchy import fcluster, linkage

from .embeddings import EmbeddingModel
from .errors import DataError, ExplanationError
from .kg import Fact, KnowledgeGraph

logger = logging.getLogger(__name__)

GLOBAL = "global"
LOCAL = "local"
INSTANCE = "instance"


@dataclass(frozen=True)
class ScopeTag:
    kind: str
    cluster: int | None = None
    k: int | None = None
    target: tuple[int, int, int] | None = None

    def describe(self) -> str:
        if self.kind == LOCAL and self.cluster is not None:
            return f"local[{self.cluster}/{self.k}]"
        if self.kind == INSTANCE and self.target is not None:
            return f"instance{self.target}"
        return self.kind


@dataclass(frozen=True)
class ContextFact:
    """A labeled context member; the fact's polarity is its ground truth."""

    fact: Fact
    group: int

    @property
    def label(self) -> int:
        return 1 if self.fact.positive else -1


@dataclass(frozen=True)
class Context:
    predicate: int
    facts: tuple[ContextFact, ...]
    scope: ScopeTag

    def positives(self) -> tuple[ContextFact, ...]:
        return tuple(cf for cf in self.facts if cf.fact.positive)

    def negatives(self) -> tuple[ContextFact, ...]:
        return tuple(cf for cf in self.facts if not cf.fact.positive)

    def __len__(self) -> int:
        return len(self.facts)


def global_context(
    kg: KnowledgeGraph,
    predicate: int,
    true_facts: Sequence[Fact | tuple[int, int, int]],
    rng: np.random.Generator,
) -> Context:
    """True facts plus one subject-side and one object-side corruption
    each (when the domains allow them). All facts stay inside the
    predicate's potential set; corruptions avoid the graph's positives
    only, so collisions with other held-out true facts are possible."""
    if not true_facts:
        raise DataError("global_context needs at least one true fact")
    ordered = sorted({f[:3] for f in true_facts})
    members: list[ContextFact] = []
    for group, key in enumerate(ordered):
        s, p, o = key
        if p != predicate:
            raise DataError(f"fact {key} does not use predicate {predicate}")
        if not kg.in_potential_set(s, p, o):
            raise DataError(f"fact {key} is outside the potential set of predicate {p}")
        members.append(ContextFact(Fact(s, p, o, positive=True), group))
        for side in ("subject", "object"):
            for neg in kg.corrupt_potential_fact(key, rng, 1, side=side):
                members.append(ContextFact(neg, group))
    return Context(predicate, tuple(members), ScopeTag(GLOBAL))


def local_contexts(
    kg: KnowledgeGraph,
    context: Context,
    model: EmbeddingModel,
    k: int,
    seed: int,
) -> list[Context]:
    """Partition the context's true facts by agglomerative clustering
    (Ward linkage, Euclidean) on the concatenated subject/object
    embeddings, then re-corrupt each cluster independently.

    Facts are canonically ordered before linkage so the partition does
    not depend on input order. Each cluster's corruption stream is keyed
    on the seed and the cluster's own fact set, so a cluster that appears
    unchanged under several k values gets identical negatives in each;
    this keeps the k sweep comparable instead of re-rolling noise per k.
    """
    positives = sorted(cf.fact.key() for cf in context.positives())
    if not (2 <= k <= len(positives)):
        raise DataError(f"k={k} out of range [2, {len(positives)}]")
    X = np.array([model.pair_vector(s, o) for s, _, o in positives])
    Z = linkage(X, method="ward")
    assignment = fcluster(Z, t=k, criterion="maxclust")

    # Relabel clusters in order of first appearance for determinism.
    relabel: dict[int, int] = {}
    for a in assignment:
        if a not in relabel:
            relabel[a] = len(relabel)

    out: list[Context] = []
    for cluster_id in range(k):
        keys = [key for key, a in zip(positives, assignment) if relabel[a] == cluster_id]
        rng = np.random.default_rng([seed, *(x for key in keys for x in key)])
        members: list[ContextFact] = []
        for group, key in enumerate(keys):
            members.append(ContextFact(Fact(*key, positive=True), group))
            for side in ("subject", "object"):
                for neg in kg.corrupt_potential_fact(key, rng, 1, side=side):
                    members.append(ContextFact(neg, group))
        out.append(Context(context.predicate, tuple(members), ScopeTag(LOCAL, cluster=cluster_id, k=k)))
    return out


def instance_context(context: Context, target: Fact | tuple[int, int, int]) -> Context:
    """The context facts sharing the target's subject or object, plus the
    target itself. Negatives are inherited, never re-drawn."""
    key = target[:3]
    if not any(cf.fact.key() == key for cf in context.facts):
        raise DataError(f"target fact {key} is not in the context")
    s, _, o = key
    members = tuple(
        cf for cf in context.facts
        if cf.fact.s == s or cf.fact.o == o or cf.fact.key() == key
    )
    return Context(context.predicate, members, ScopeTag(INSTANCE, target=key))


@dataclass
class SelectKResult:
    k: int
    scores: dict[int, float]
    explanations: list = field(repr=False)


def select_k(
    kg: KnowledgeGraph,
    context: Context,
    model: EmbeddingModel,
    f,
    cfg,
    k_range: tuple[int, int] = (2, 6),
    metric: str = "roc_auc",
) -> SelectKResult:
    """Sweep k over the range (truncated to the number of true facts),
    build one explanation per cluster, and pick the k with the best
    size-weighted held-out fidelity. Ties go to the smallest k."""
    from .explainer import build_explanation
    from .evaluation import weighted_fidelity

    if metric not in ("roc_auc", "s_mrr", "o_mrr"):
        raise ValueError(f"unknown selection metric {metric!r}")
    n_true = len(context.positives())
    lo, hi = k_range
    ks = [k for k in range(lo, hi + 1) if 2 <= k <= n_true]
    if not ks:
        raise DataError(f"no feasible k in [{lo}, {hi}] for {n_true} true facts")

    scores: dict[int, float] = {}
    expl_by_k: dict[int, list] = {}
    for k in ks:
        try:
            subcontexts = local_contexts(kg, context, model, k, cfg.seed)
        except DataError:
            continue
        records = []
        expls = []
        for sub in subcontexts:
            try:
                e = build_explanation(f, kg, sub, cfg)
            except ExplanationError as exc:
                logger.debug("select_k: cluster skipped (%s)", exc)
                continue
            expls.append(e)
            if e.fidelity is not None and getattr(e.fidelity, metric) is not None:
                records.append(e.fidelity)
        if records:
            value = getattr(weighted_fidelity(records), metric)
            if value is not None:
                scores[k] = value
                expl_by_k[k] = expls
    if not scores:
        raise ExplanationError("no k in range produced a scorable local explanation")
    best = max(sorted(scores), key=lambda k: scores[k])
    return SelectKResult(best, scores, expl_by_k[best])


def context_to_csv(context: Context, kg: KnowledgeGraph, out) -> None:
    """CSV dump: subject,predicate,object,label,scope."""
    out.write("subject,predicate,object,label,scope\n")
    for cf in context.facts:
        s, p, o = cf.fact.key()
        out.write(
            f"{kg.entity_labels[s]},{kg.predicate_labels[p]},{kg.entity_labels[o]},"
            f"{cf.label},{context.scope.describe()}\n"
        )
