"""Knowledge graph storage, indexing, domains, and fact corruption.

A graph is a deduplicated set of positive facts (plus optional explicit
negatives) over interned entity/predicate ids. Graphs are immutable after
construction, so every read operation is safe to call concurrently;
building a derived graph goes through :meth:`KnowledgeGraph.extend`.
"""

from __future__ import annotations

import io
import logging
from pathlib import Path
from typing import Iterable, NamedTuple

import numpy as np

from .errors import DataError, ParseError

logger = logging.getLogger(__name__)


class Fact(NamedTuple):
    """An (s, p, o) triple. ``positive=False`` marks a corrupted fact."""

    s: int
    p: int
    o: int
    positive: bool = True

    def key(self) -> tuple[int, int, int]:
        """The (s, p, o) triple without the polarity flag."""
        return (self.s, self.p, self.o)

    def negated(self) -> "Fact":
        return Fact(self.s, self.p, self.o, not self.positive)


class KnowledgeGraph:
    """Fact set with label dictionaries and pattern indexes.

    Entity and predicate ids are dense and contiguous from 0; the label
    dictionaries are bijective. ``negatives`` holds explicitly false facts
    (used for counter-example-aware rule precision); it never overlaps the
    positive set.
    """

    def __init__(
        self,
        entity_labels: Iterable[str],
        predicate_labels: Iterable[str],
        positives: Iterable[tuple[int, int, int]],
        negatives: Iterable[tuple[int, int, int]] = (),
    ):
        self.entity_labels: tuple[str, ...] = tuple(entity_labels)
        self.predicate_labels: tuple[str, ...] = tuple(predicate_labels)
        self.entity_ids = {lbl: i for i, lbl in enumerate(self.entity_labels)}
        self.predicate_ids = {lbl: i for i, lbl in enumerate(self.predicate_labels)}
        if len(self.entity_ids) != len(self.entity_labels):
            raise DataError("duplicate entity labels")
        if len(self.predicate_ids) != len(self.predicate_labels):
            raise DataError("duplicate predicate labels")

        pos_keys = {(s, p, o) for s, p, o in (f[:3] for f in positives)}
        neg_keys = {(s, p, o) for s, p, o in (f[:3] for f in negatives)}
        overlap = pos_keys & neg_keys
        if overlap:
            raise DataError(f"{len(overlap)} facts are both positive and negative")
        for s, p, o in pos_keys | neg_keys:
            if not (0 <= s < len(self.entity_labels) and 0 <= o < len(self.entity_labels)):
                raise DataError(f"entity id out of range in fact {(s, p, o)}")
            if not (0 <= p < len(self.predicate_labels)):
                raise DataError(f"predicate id out of range in fact {(s, p, o)}")

        self._pos_keys = frozenset(pos_keys)
        self._neg_keys = frozenset(neg_keys)

        # Pattern indexes over the positive facts.
        sp: dict[tuple[int, int], list[int]] = {}
        po: dict[tuple[int, int], list[int]] = {}
        so: dict[tuple[int, int], list[int]] = {}
        by_p: dict[int, list[tuple[int, int]]] = {}
        for s, p, o in sorted(pos_keys):
            sp.setdefault((s, p), []).append(o)
            po.setdefault((p, o), []).append(s)
            so.setdefault((s, o), []).append(p)
            by_p.setdefault(p, []).append((s, o))
        self._sp = {k: tuple(v) for k, v in sp.items()}
        self._po = {k: tuple(v) for k, v in po.items()}
        self._so = {k: tuple(v) for k, v in so.items()}
        self._by_p = {k: tuple(v) for k, v in by_p.items()}

        self._subjects = {p: tuple(sorted({s for s, _ in pairs})) for p, pairs in self._by_p.items()}
        self._objects = {p: tuple(sorted({o for _, o in pairs})) for p, pairs in self._by_p.items()}

        neg_by_p: dict[int, set[tuple[int, int]]] = {}
        for s, p, o in neg_keys:
            neg_by_p.setdefault(p, set()).add((s, o))
        self._neg_by_p = {k: frozenset(v) for k, v in neg_by_p.items()}

    # ------------------------------------------------------------------
    # basic accessors

    @property
    def n_entities(self) -> int:
        return len(self.entity_labels)

    @property
    def n_predicates(self) -> int:
        return len(self.predicate_labels)

    @property
    def n_facts(self) -> int:
        return len(self._pos_keys)

    def positives(self) -> frozenset[tuple[int, int, int]]:
        return self._pos_keys

    def negatives(self) -> frozenset[tuple[int, int, int]]:
        return self._neg_keys

    def has(self, s: int, p: int, o: int) -> bool:
        return (s, p, o) in self._pos_keys

    def facts_of(self, p: int) -> tuple[tuple[int, int], ...]:
        """Sorted (s, o) pairs of the positive facts of predicate ``p``."""
        return self._by_p.get(p, ())

    def positive_pairs(self, p: int) -> tuple[tuple[int, int], ...]:
        return self._by_p.get(p, ())

    def negative_pairs(self, p: int) -> frozenset[tuple[int, int]]:
        return self._neg_by_p.get(p, frozenset())

    def objects_of(self, s: int, p: int) -> tuple[int, ...]:
        return self._sp.get((s, p), ())

    def subjects_of(self, p: int, o: int) -> tuple[int, ...]:
        return self._po.get((p, o), ())

    def predicates_of(self, s: int, o: int) -> tuple[int, ...]:
        return self._so.get((s, o), ())

    # ------------------------------------------------------------------
    # domains and potential sets

    def domains(self, p: int) -> tuple[frozenset[int], frozenset[int]]:
        """Known subjects and objects of ``p`` among the positive facts."""
        self._check_predicate(p)
        return frozenset(self._subjects.get(p, ())), frozenset(self._objects.get(p, ()))

    def subject_domain(self, p: int) -> tuple[int, ...]:
        self._check_predicate(p)
        return self._subjects.get(p, ())

    def object_domain(self, p: int) -> tuple[int, ...]:
        self._check_predicate(p)
        return self._objects.get(p, ())

    def potential_size(self, p: int) -> int:
        """|D^p| * |D̄^p|: how many facts could be built for ``p``."""
        d, dbar = self.domains(p)
        return len(d) * len(dbar)

    def in_potential_set(self, s: int, p: int, o: int) -> bool:
        self._check_predicate(p)
        return s in set(self._subjects.get(p, ())) and o in set(self._objects.get(p, ()))

    def _check_predicate(self, p: int) -> None:
        if not (0 <= p < len(self.predicate_labels)):
            raise DataError(f"unknown predicate id {p}")

    # ------------------------------------------------------------------
    # pattern matching

    def match_pattern(
        self,
        s: int | None = None,
        p: int | None = None,
        o: int | None = None,
    ) -> list[Fact]:
        """All positive facts matching the pattern, sorted by ids.

        ``None`` is a wildcard. Every pattern shape is supported, though a
        concrete predicate is the common case.
        """
        if p is not None:
            self._check_predicate(p)
            if s is not None and o is not None:
                return [Fact(s, p, o)] if self.has(s, p, o) else []
            if s is not None:
                return [Fact(s, p, oo) for oo in self._sp.get((s, p), ())]
            if o is not None:
                return [Fact(ss, p, o) for ss in self._po.get((p, o), ())]
            return [Fact(ss, p, oo) for ss, oo in self._by_p.get(p, ())]
        if s is not None and o is not None:
            return [Fact(s, pp, o) for pp in self._so.get((s, o), ())]
        return [Fact(*k) for k in sorted(self._pos_keys) if (s is None or k[0] == s) and (o is None or k[2] == o)]

    # ------------------------------------------------------------------
    # corruption

    def bernoulli_subject_probability(self, p: int) -> float:
        """tph / (tph + hpt) for predicate ``p``.

        tph is the mean number of tails per head, hpt the mean number of
        heads per tail; replacing the subject is preferred for one-to-many
        predicates because the replacement is more likely a true negative.
        """
        n = len(self._by_p.get(p, ()))
        if n == 0:
            raise DataError(f"predicate {p} has no facts")
        tph = n / len(self._subjects[p])
        hpt = n / len(self._objects[p])
        return tph / (tph + hpt)

    def corrupt_fact(
        self,
        fact: Fact | tuple[int, int, int],
        rng: np.random.Generator,
        n: int,
        side: str | None = None,
    ) -> list[Fact]:
        """Up to ``n`` domain-restricted negatives for a positive fact.

        The corrupted side is drawn per slot with Bernoulli probability
        tph/(tph+hpt) for the subject side unless ``side`` forces one.
        Replacements are uniform over D^p (subject) or D̄^p (object) and
        rejected while they reproduce a positive fact; a slot is abandoned
        after 100 attempts. Deterministic given the generator state.
        """
        key = fact[:3]
        if key not in self._pos_keys:
            raise DataError(f"fact {key} is not a positive fact of this graph")
        return self._corrupt(key, rng, n, side)

    def corrupt_potential_fact(
        self,
        fact: Fact | tuple[int, int, int],
        rng: np.random.Generator,
        n: int,
        side: str | None = None,
    ) -> list[Fact]:
        """Like :meth:`corrupt_fact` for facts outside the graph (e.g. test
        triples used to build explanation contexts). Only graph positives
        are excluded from the corruptions."""
        return self._corrupt(fact[:3], rng, n, side)

    def _corrupt(
        self,
        key: tuple[int, int, int],
        rng: np.random.Generator,
        n: int,
        side: str | None,
        max_attempts: int = 100,
    ) -> list[Fact]:
        if side not in (None, "subject", "object"):
            raise ValueError(f"side must be 'subject' or 'object', got {side!r}")
        s, p, o = key
        self._check_predicate(p)
        subj_dom = self._subjects.get(p, ())
        obj_dom = self._objects.get(p, ())
        p_subj = self.bernoulli_subject_probability(p) if side is None else None

        out: list[Fact] = []
        skipped = 0
        for _ in range(n):
            corrupt_subject = (rng.random() < p_subj) if side is None else (side == "subject")
            domain = subj_dom if corrupt_subject else obj_dom
            if len(domain) < 2:
                skipped += 1
                continue
            produced = None
            for _attempt in range(max_attempts):
                cand = domain[rng.integers(len(domain))]
                if corrupt_subject:
                    if cand == s or (cand, p, o) in self._pos_keys:
                        continue
                    produced = Fact(cand, p, o, positive=False)
                else:
                    if cand == o or (s, p, cand) in self._pos_keys:
                        continue
                    produced = Fact(s, p, cand, positive=False)
                break
            if produced is None:
                skipped += 1
            else:
                out.append(produced)
        if skipped:
            logger.warning(
                "corrupt: produced %d/%d negatives for fact %s (domains exhausted)",
                len(out), n, key,
            )
        return out

    # ------------------------------------------------------------------
    # derived graphs and serialization

    def extend(
        self,
        new_predicate_labels: Iterable[str] = (),
        positives: Iterable[tuple[int, int, int]] = (),
        negatives: Iterable[tuple[int, int, int]] = (),
    ) -> "KnowledgeGraph":
        """A new graph with extra predicates and facts (entities unchanged)."""
        labels = list(self.predicate_labels)
        for lbl in new_predicate_labels:
            if lbl in self.predicate_ids:
                raise DataError(f"predicate label {lbl!r} already present")
            labels.append(lbl)
        pos = set(self._pos_keys) | {f[:3] for f in positives}
        neg = set(self._neg_keys) | {f[:3] for f in negatives}
        return KnowledgeGraph(self.entity_labels, labels, pos, neg)

    def serialize_triples(self, out: io.TextIOBase) -> None:
        """Positive facts as TSV label triples, sorted by ids."""
        for s, p, o in sorted(self._pos_keys):
            out.write(f"{self.entity_labels[s]}\t{self.predicate_labels[p]}\t{self.entity_labels[o]}\n")

    def dump_dictionaries(self, entities_out: io.TextIOBase, predicates_out: io.TextIOBase) -> None:
        """Dictionaries as ``id TAB label`` lines."""
        for i, lbl in enumerate(self.entity_labels):
            entities_out.write(f"{i}\t{lbl}\n")
        for i, lbl in enumerate(self.predicate_labels):
            predicates_out.write(f"{i}\t{lbl}\n")

    def label_fact(self, fact: Fact | tuple[int, int, int]) -> str:
        s, p, o = fact[:3]
        return f"{self.predicate_labels[p]}({self.entity_labels[s]},{self.entity_labels[o]})"

    def __repr__(self) -> str:
        return (
            f"KnowledgeGraph(entities={self.n_entities}, predicates={self.n_predicates}, "
            f"facts={self.n_facts}, negatives={len(self._neg_keys)})"
        )


def _iter_decoded_lines(source) -> Iterable[str]:
    if isinstance(source, (str, Path)):
        data = Path(source).read_bytes()
    elif isinstance(source, bytes):
        data = source
    elif hasattr(source, "read"):
        data = source.read()
        if isinstance(data, str):
            data = data.encode("utf-8")
    else:
        raise TypeError(f"unsupported source type {type(source).__name__}")
    return data.decode("utf-8").splitlines()


def ingest_triples(source, fmt: str = "tsv") -> KnowledgeGraph:
    """Parse TSV triples (subject TAB predicate TAB object) into a graph.

    Accepts a path, bytes, or a readable file object; UTF-8, LF or CRLF.
    Duplicate triples are deduplicated and line order is irrelevant to the
    resulting graph. Ids are interned in order of first appearance.
    """
    if fmt != "tsv":
        raise ValueError(f"unsupported format {fmt!r}")
    entity_ids: dict[str, int] = {}
    predicate_ids: dict[str, int] = {}
    facts: set[tuple[int, int, int]] = set()

    def intern(table: dict[str, int], label: str) -> int:
        if label not in table:
            table[label] = len(table)
        return table[label]

    n_lines = 0
    for line_no, raw in enumerate(_iter_decoded_lines(source), start=1):
        line = raw.rstrip("\r")
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 3:
            raise ParseError(
                f"line {line_no}: expected 3 tab-separated fields, got {len(fields)}",
                line_no=line_no,
            )
        s = intern(entity_ids, fields[0])
        p = intern(predicate_ids, fields[1])
        o = intern(entity_ids, fields[2])
        facts.add((s, p, o))
        n_lines += 1
    if not facts:
        raise ParseError("empty input: no triples found")
    return KnowledgeGraph(list(entity_ids), list(predicate_ids), facts)
