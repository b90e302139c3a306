"""Synthetic knowledge graphs with planted structure.

Each generator returns label triples split into train/test so the same
data can be ingested in-memory by tests or written to TSV for the CLI.
The generators plant a known governing pattern, which makes explanation
quality directly checkable: a faithful pipeline must rediscover the
pattern and rank it highly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .embeddings import EmbeddingModel
from .kg import Fact, KnowledgeGraph

Triple = tuple[str, str, str]


def triples_to_tsv(triples: list[Triple]) -> str:
    return "".join(f"{s}\t{p}\t{o}\n" for s, p, o in triples)


@dataclass
class CompositionData:
    """p(x,y) holds exactly when q(x,z) and r(z,y) do.

    Every subject carries one q edge, every middle two r edges; each
    subject's implied p facts are split between train and test so that
    all test facts stay inside the train graph's potential set.
    """

    train_triples: list[Triple]
    test_triples: list[Triple]
    predicate: str = "p"
    body: tuple[str, str] = ("q", "r")


def composition_dataset(n_subjects: int = 24, n_middles: int = 6) -> CompositionData:
    assert n_subjects >= 2 * n_middles, "every object needs a train fact"
    train: list[Triple] = []
    test: list[Triple] = []
    for i in range(n_subjects):
        z = i % n_middles
        train.append((f"x{i}", "q", f"z{z}"))
    for z in range(n_middles):
        train.append((f"z{z}", "r", f"y{z}"))
        train.append((f"z{z}", "r", f"y{z + 1}"))
    for i in range(n_subjects):
        z = i % n_middles
        ys = (f"y{z}", f"y{z + 1}")
        # Alternate which implied fact is held out so every object keeps a
        # train fact (stays inside the train domain of p).
        train_y, test_y = (ys[0], ys[1]) if (i // n_middles) % 2 == 0 else (ys[1], ys[0])
        train.append((f"x{i}", "p", train_y))
        test.append((f"x{i}", "p", test_y))
    return CompositionData(train, test)


@dataclass
class BoundedPatternData:
    """q(x, hub) => p(x, goal): a pattern no unbounded rule can express.

    Group A subjects point at the hub and have the goal fact; group B
    subjects point at other anchors. Every subject also has a baseline p
    fact so held-out subjects stay in the train domain of p.
    """

    train_triples: list[Triple]
    test_triples: list[Triple]
    predicate: str = "p"
    hub: str = "hub0"
    goal: str = "goal1"

    def scorer(self, kg: KnowledgeGraph):
        """The black box: believes p(s, o) iff q(s, hub) and o == goal."""
        q = kg.predicate_ids["q"]
        hub = kg.entity_ids[self.hub]
        goal = kg.entity_ids[self.goal]

        def f(fact) -> float:
            s, _, o = fact[:3]
            return 1.0 if (o == goal and kg.has(s, q, hub)) else 0.0

        return f


def bounded_pattern_dataset(n_a: int = 20, n_b: int = 20, test_every: int = 3) -> BoundedPatternData:
    train: list[Triple] = []
    test: list[Triple] = []
    for i in range(n_a):
        x = f"a{i}"
        train.append((x, "q", "hub0"))
        train.append((x, "p", "base"))
        fact = (x, "p", "goal1")
        (test if i % test_every == 0 else train).append(fact)
    for i in range(n_b):
        x = f"b{i}"
        train.append((x, "q", f"hub{1 + i % 3}"))
        train.append((x, "p", "base"))
        if i % 2 == 0:
            fact = (x, "p", "goal2")
            (test if i % (2 * test_every) == 0 else train).append(fact)
    return BoundedPatternData(train, test)


@dataclass
class TwoRegimeData:
    """One predicate governed by opposite logics in two object regimes.

    For A-regime objects the predictor believes p(s, o) iff q(s, o) holds;
    for B-regime objects iff q(s, o) does NOT hold (q is dense there, and
    the true facts are the holes). The same rule body therefore implies
    opposite verdicts depending on the regime, which no global surrogate
    can express, while embedding-space clusters recover the regimes.
    """

    train_triples: list[Triple]
    test_triples: list[Triple]
    a_objects: list[str]
    b_objects: list[str]
    predicate: str = "p"

    def scorer(self, kg: KnowledgeGraph):
        q = kg.predicate_ids["q"]
        a_ids = {kg.entity_ids[x] for x in self.a_objects}

        def f(fact) -> float:
            s, _, o = fact[:3]
            has_q = kg.has(s, q, o)
            if o in a_ids:
                return 1.0 if has_q else 0.0
            return 0.0 if has_q else 1.0

        return f

    def embedding_model(self, kg: KnowledgeGraph, dim: int = 8, seed: int = 0, separation: float = 50.0) -> EmbeddingModel:
        """Hand-constructed embeddings whose object halves separate the
        regimes (blob distance ~separation, intra-blob noise ~1)."""
        rng = np.random.default_rng(seed)
        ent = rng.normal(0.0, 1.0, size=(kg.n_entities, dim))
        a_ids = [kg.entity_ids[x] for x in self.a_objects]
        b_ids = [kg.entity_ids[x] for x in self.b_objects]
        ent[a_ids] += separation
        ent[b_ids] -= separation
        pred = rng.normal(0.0, 1.0, size=(kg.n_predicates, dim))
        return EmbeddingModel("transe", dim, ent, pred, norm=2)


def two_regime_dataset(n_subjects: int = 40, n_a_objects: int = 5, n_b_objects: int = 5) -> TwoRegimeData:
    assert n_a_objects == n_b_objects and n_subjects >= 2 * n_a_objects
    a_objects = [f"ao{j}" for j in range(n_a_objects)]
    b_objects = [f"bo{j}" for j in range(n_b_objects)]
    train: list[Triple] = []
    test: list[Triple] = []
    for i in range(n_subjects):
        s = f"s{i}"
        ja = i % n_a_objects
        jb = i % n_b_objects
        # A regime: one q edge per subject; the q pair is the true fact.
        train.append((s, "q", a_objects[ja]))
        # B regime: dense q edges except one hole; the hole is the true fact.
        for j in range(n_b_objects):
            if j != jb:
                train.append((s, "q", b_objects[j]))
        a_fact = (s, "p", a_objects[ja])
        b_fact = (s, "p", b_objects[jb])
        # Alternate per block so every object keeps a train fact regardless
        # of the parity of the object counts.
        if (i // n_a_objects) % 2 == 0:
            train.append(a_fact)
            test.append(b_fact)
        else:
            train.append(b_fact)
            test.append(a_fact)
    return TwoRegimeData(train, test, a_objects, b_objects)


def toy_pipeline_dataset(seed: int = 7) -> tuple[list[Triple], list[Triple], list[Triple]]:
    """A small multi-predicate dataset for end-to-end CLI runs: the
    composition pattern plus an unrelated attribute predicate. Returns
    (train, valid, test) label triples."""
    comp = composition_dataset(n_subjects=18, n_middles=4, n_objects=6)
    rng = np.random.default_rng(seed)
    train = list(comp.train_triples)
    for i in range(18):
        train.append((f"x{i}", "kind", f"group{i % 2}"))
    test = list(comp.test_triples)
    # A couple of validation facts: reuse of training patterns on held-out pairs.
    valid = [test[i] for i in range(0, len(test), 5)]
    test = [t for i, t in enumerate(test) if i % 5 != 0]
    rng.shuffle(train)
    return train, valid, test
