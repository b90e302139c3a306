"""Horn rule mining against labeled positives and explicit negatives.

The rule language is AMIE-style, capped at 3 atoms including the head:

* atoms have at least one variable and, in bounded mode, at most one
  constant; the two arguments of an atom are never the same variable;
* rules are safe (head variables occur in the body) and closed (every
  variable occurs in at least 2 atoms); in bounded mode a constant can
  take the place a second variable occurrence would otherwise fill;
* head subjects stay variables; constants may appear in the head object
  and in either body position;
* body atoms never repeat and never use the head predicates.

Precision is counter-example aware: predictions are only counted when
they land on an explicitly labeled fact (graph positive or explicit
negative of the head predicate); everything else is ignored.
"""

from __future__ import annotations

import itertools
import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping

from .errors import DataError
from .kg import KnowledgeGraph

MODE_UNBOUNDED = "unbounded"
MODE_BOUNDED = "bounded"

# Hard language ceiling: search above 3 atoms is prohibitively large once
# constants are allowed, so the config cannot raise it.
MAX_ATOMS_CEILING = 3


@dataclass(frozen=True)
class Var:
    vid: int

    def __repr__(self):
        return f"?{self.vid}"


@dataclass(frozen=True)
class Const:
    entity: int

    def __repr__(self):
        return f"c{self.entity}"


Term = Var | Const


@dataclass(frozen=True)
class Atom:
    pred: int
    s: Term
    o: Term

    def __post_init__(self):
        if isinstance(self.s, Const) and isinstance(self.o, Const):
            raise ValueError("an atom needs at least one variable")

    def variables(self) -> tuple[Var, ...]:
        out = []
        for t in (self.s, self.o):
            if isinstance(t, Var) and t not in out:
                out.append(t)
        return tuple(out)

    def n_constants(self) -> int:
        return sum(isinstance(t, Const) for t in (self.s, self.o))

    def is_bounded(self) -> bool:
        return self.n_constants() == 1


@dataclass(frozen=True)
class RuleStats:
    """Counter-example-aware precision statistics.

    ``correct`` counts predictions landing on labeled positives,
    ``labeled`` all predictions landing on labeled facts (positives plus
    explicit negatives). Unevaluable stats (no labeled hits at all) are
    rejected downstream.
    """

    correct: int
    labeled: int
    precision: float
    evaluable: bool = True

    @property
    def conf(self) -> float:
        return self.precision


@dataclass(frozen=True)
class HornRule:
    body: tuple[Atom, ...]
    head: Atom
    stats: RuleStats | None = field(default=None, compare=False)

    def atoms(self) -> tuple[Atom, ...]:
        return (self.head, *self.body)

    def n_atoms(self) -> int:
        return 1 + len(self.body)

    def variables(self) -> tuple[Var, ...]:
        out: list[Var] = []
        for atom in self.atoms():
            for v in atom.variables():
                if v not in out:
                    out.append(v)
        return tuple(out)

    def occurrence_counts(self) -> dict[Var, int]:
        """Number of atoms each variable occurs in."""
        counts: dict[Var, int] = {}
        for atom in self.atoms():
            for v in atom.variables():
                counts[v] = counts.get(v, 0) + 1
        return counts

    def is_safe(self) -> bool:
        body_vars = {v for a in self.body for v in a.variables()}
        return all(v in body_vars for v in self.head.variables())

    def is_closed(self) -> bool:
        return all(c >= 2 for c in self.occurrence_counts().values())

    def with_stats(self, stats: RuleStats) -> "HornRule":
        return HornRule(self.body, self.head, stats)


# ----------------------------------------------------------------------
# substitutions

def apply_substitution(sigma: Mapping[Var, int], target):
    """Replace mapped variables by constants; unmapped terms untouched."""
    if isinstance(target, HornRule):
        return HornRule(
            tuple(apply_substitution(sigma, a) for a in target.body),
            apply_substitution(sigma, target.head),
            target.stats,
        )
    if isinstance(target, Atom):
        s = Const(sigma[target.s]) if isinstance(target.s, Var) and target.s in sigma else target.s
        o = Const(sigma[target.o]) if isinstance(target.o, Var) and target.o in sigma else target.o
        return Atom(target.pred, s, o)
    raise TypeError(f"cannot substitute into {type(target).__name__}")


# ----------------------------------------------------------------------
# grounding engine

def _resolve(term: Term, binding: dict[Var, int]) -> int | None:
    if isinstance(term, Const):
        return term.entity
    return binding.get(term)


def _unify_atom(atom: Atom, binding: dict[Var, int], s_val: int, o_val: int) -> dict[Var, int] | None:
    b = binding
    for term, val in ((atom.s, s_val), (atom.o, o_val)):
        if isinstance(term, Const):
            if term.entity != val:
                return None
        else:
            cur = b.get(term)
            if cur is None:
                if b is binding:
                    b = dict(binding)
                b[term] = val
            elif cur != val:
                return None
    return b if b is not binding else dict(binding)


def _atom_groundings(atom: Atom, kg: KnowledgeGraph, binding: dict[Var, int]) -> Iterator[dict[Var, int]]:
    sv = _resolve(atom.s, binding)
    ov = _resolve(atom.o, binding)
    if sv is not None and ov is not None:
        if kg.has(sv, atom.pred, ov):
            yield binding
        return
    if sv is not None:
        for o_val in kg.objects_of(sv, atom.pred):
            nb = _unify_atom(atom, binding, sv, o_val)
            if nb is not None:
                yield nb
        return
    if ov is not None:
        for s_val in kg.subjects_of(atom.pred, ov):
            nb = _unify_atom(atom, binding, s_val, ov)
            if nb is not None:
                yield nb
        return
    for s_val, o_val in kg.facts_of(atom.pred):
        nb = _unify_atom(atom, binding, s_val, o_val)
        if nb is not None:
            yield nb


def _ground_body(body: tuple[Atom, ...], kg: KnowledgeGraph, binding: dict[Var, int]) -> Iterator[dict[Var, int]]:
    if not body:
        yield binding
        return
    # Most-bound-first join order keeps the enumeration indexed.
    def boundness(i: int) -> tuple[int, int]:
        a = body[i]
        return (sum(_resolve(t, binding) is not None for t in (a.s, a.o)), -i)

    i = max(range(len(body)), key=boundness)
    rest = body[:i] + body[i + 1:]
    for nb in _atom_groundings(body[i], kg, binding):
        yield from _ground_body(rest, kg, nb)


def predictions(rule: HornRule, kg: KnowledgeGraph) -> set[tuple[int, int, int]]:
    """All ground head facts derivable by grounding the body in ``kg``.

    Requires a safe rule (the head must come out ground).
    """
    out: set[tuple[int, int, int]] = set()
    head = rule.head
    for b in _ground_body(rule.body, kg, {}):
        sv = _resolve(head.s, b)
        ov = _resolve(head.o, b)
        if sv is None or ov is None:
            raise ValueError("predictions() needs a safe rule")
        out.add((sv, head.pred, ov))
    return out


def rule_fires_at(rule: HornRule, s: int, o: int, kg: KnowledgeGraph) -> bool:
    """Does the rule predict its head at the (s, o) pair?"""
    b = _unify_atom(rule.head, {}, s, o)
    if b is None:
        return False
    return next(_ground_body(rule.body, kg, b), None) is not None


def _support(rule: HornRule, kg: KnowledgeGraph) -> int:
    """Labeled positives the rule predicts; an upper bound for every
    refinement of the rule (adding atoms or constants only shrinks it)."""
    return sum(rule_fires_at(rule, s, o, kg) for s, o in kg.positive_pairs(rule.head.pred))


def rule_stats(rule: HornRule, kg: KnowledgeGraph) -> RuleStats:
    """Precision against labeled facts only (explicit counter-examples)."""
    correct = _support(rule, kg)
    neg_hits = sum(rule_fires_at(rule, s, o, kg) for s, o in sorted(kg.negative_pairs(rule.head.pred)))
    labeled = correct + neg_hits
    if labeled == 0:
        return RuleStats(0, 0, 0.0, evaluable=False)
    return RuleStats(correct, labeled, correct / labeled)


def _support_value_sets(rule: HornRule, kg: KnowledgeGraph, wanted: Iterable[Var]) -> dict[Var, set[int]]:
    """Values the wanted variables take across support witnesses; used to
    enumerate instantiation candidates that co-occur with head facts."""
    wanted = tuple(wanted)
    values: dict[Var, set[int]] = {v: set() for v in wanted}
    head = rule.head
    for s, o in kg.positive_pairs(head.pred):
        b0 = _unify_atom(head, {}, s, o)
        if b0 is None:
            continue
        for b in _ground_body(rule.body, kg, b0):
            for v in wanted:
                if v in b:
                    values[v].add(b[v])
    return values


# ----------------------------------------------------------------------
# canonical forms

def _canonical_key_and_layout(rule: HornRule):
    best_key = None
    best_perm = None
    best_map = None
    for perm in itertools.permutations(rule.body):
        mapping: dict[Var, int] = {}
        seq = []
        for atom in (rule.head, *perm):
            row = [atom.pred]
            for t in (atom.s, atom.o):
                if isinstance(t, Const):
                    row.append((1, t.entity))
                else:
                    if t not in mapping:
                        mapping[t] = len(mapping)
                    row.append((0, mapping[t]))
            seq.append(tuple(row))
        key = tuple(seq)
        if best_key is None or key < best_key:
            best_key, best_perm, best_map = key, perm, mapping
    return best_key, best_perm, best_map


def canonical_key(rule: HornRule) -> tuple:
    """Hashable form invariant under variable renaming and body order."""
    return _canonical_key_and_layout(rule)[0]


def canonicalize(rule: HornRule) -> HornRule:
    """The representative rule: body in canonical order, variables renamed
    to 0, 1, ... in order of first occurrence (head first)."""
    _, perm, mapping = _canonical_key_and_layout(rule)
    ren = {v: Var(i) for v, i in mapping.items()}

    def ren_atom(a: Atom) -> Atom:
        s = ren[a.s] if isinstance(a.s, Var) else a.s
        o = ren[a.o] if isinstance(a.o, Var) else a.o
        return Atom(a.pred, s, o)

    return HornRule(tuple(ren_atom(a) for a in perm), ren_atom(rule.head), rule.stats)


# ----------------------------------------------------------------------
# language validity and refinement

def is_output_rule(rule: HornRule, mode: str, max_atoms: int = MAX_ATOMS_CEILING) -> bool:
    """Is the rule a member of the mined language (emittable)?"""
    if not rule.body or rule.n_atoms() > max_atoms:
        return False
    if not isinstance(rule.head.s, Var):
        return False
    for atom in rule.atoms():
        if isinstance(atom.s, Var) and atom.s == atom.o:
            return False
        n_const = atom.n_constants()
        if n_const > 1 or (mode == MODE_UNBOUNDED and n_const > 0):
            return False
    if len(set(rule.body)) != len(rule.body) or rule.head in rule.body:
        return False
    if not rule.is_safe():
        return False
    return rule.is_closed()


def _default_body_predicates(kg: KnowledgeGraph, head_predicates: Iterable[int]) -> tuple[int, ...]:
    heads = set(head_predicates)
    return tuple(p for p in range(kg.n_predicates) if p not in heads)


def refine(
    rule: HornRule,
    kg: KnowledgeGraph,
    mode: str,
    body_predicates: tuple[int, ...] | None = None,
    max_atoms: int = MAX_ATOMS_CEILING,
) -> list[HornRule]:
    """One-step refinements: closing atoms, dangling atoms, and (bounded
    mode) instantiations of variables that occur in a single atom.

    Dangling atoms are only generated when the fresh variable can still be
    closed (or, in bounded mode, instantiated) within the atom cap.
    Candidates are deduplicated up to variable renaming.
    """
    if mode not in (MODE_UNBOUNDED, MODE_BOUNDED):
        raise ValueError(f"unknown mode {mode!r}")
    if body_predicates is None:
        body_predicates = _default_body_predicates(kg, [rule.head.pred])

    out: list[HornRule] = []
    seen: set[tuple] = set()

    def push(candidate: HornRule) -> None:
        key = canonical_key(candidate)
        if key not in seen:
            seen.add(key)
            out.append(canonicalize(candidate))

    variables = rule.variables()
    occ = rule.occurrence_counts()
    m = rule.n_atoms()

    if m < max_atoms:
        for q in body_predicates:
            for v1 in variables:
                for v2 in variables:
                    if v1 == v2:
                        continue
                    atom = Atom(q, v1, v2)
                    if atom in rule.body or atom == rule.head:
                        continue
                    push(HornRule(rule.body + (atom,), rule.head))

        # Adding a fresh variable is only useful if the rule can still
        # reach closure within the cap: each remaining slot can absorb two
        # single-occurrence variables. Bounded mode can instead
        # instantiate dangling variables, so it is never infeasible.
        n_dangling = sum(1 for v in variables if occ[v] == 1)
        slots_left = max_atoms - (m + 1)
        fresh = Var(max((v.vid for v in variables), default=-1) + 1)
        for v in variables:
            dangling_after = n_dangling - (1 if occ[v] == 1 else 0) + 1
            if mode == MODE_UNBOUNDED and dangling_after > 2 * slots_left:
                continue
            for q in body_predicates:
                for s_t, o_t in ((v, fresh), (fresh, v)):
                    push(HornRule(rule.body + (Atom(q, s_t, o_t),), rule.head))

    if mode == MODE_BOUNDED:
        head_subject = rule.head.s if isinstance(rule.head.s, Var) else None
        targets = []
        for v in variables:
            if occ[v] != 1 or v == head_subject:
                continue
            holder = next(a for a in rule.atoms() if v in a.variables())
            if holder.n_constants() > 0:
                continue
            targets.append(v)
        if targets:
            values = _support_value_sets(rule, kg, targets)
            for v in targets:
                for c in sorted(values[v]):
                    push(apply_substitution({v: c}, rule))

    return out


@dataclass
class MiningConfig:
    mode: str = MODE_UNBOUNDED
    max_atoms: int = 3
    min_correct: int = 2
    min_precision: float = 0.10
    max_candidates: int | None = None  # search-width escape hatch

    def __post_init__(self):
        problems = []
        if self.mode not in (MODE_UNBOUNDED, MODE_BOUNDED):
            problems.append(f"mode must be unbounded or bounded, got {self.mode!r}")
        if not (2 <= self.max_atoms <= MAX_ATOMS_CEILING):
            problems.append(f"max_atoms must be 2 or {MAX_ATOMS_CEILING}")
        if self.min_correct < 1:
            problems.append("min_correct must be >= 1")
        if not (0.0 <= self.min_precision <= 1.0):
            problems.append("min_precision must be in [0, 1]")
        if problems:
            raise ValueError("; ".join(problems))


def mine(
    kg: KnowledgeGraph,
    head_predicates: Iterable[int],
    cfg: MiningConfig,
    body_predicates: tuple[int, ...] | None = None,
) -> list[HornRule]:
    """Breadth-first exhaustive mining within the language cap.

    Candidates whose support (labeled positives predicted) is already
    below ``min_correct`` are pruned together with their refinements;
    support is monotone under refinement, so no qualifying rule is lost.
    Output is sorted by (precision desc, correct desc, canonical form).
    """
    heads = sorted(set(head_predicates))
    for hp in heads:
        kg._check_predicate(hp)
        if not kg.positive_pairs(hp) and not kg.negative_pairs(hp):
            raise DataError(f"head predicate {hp} has no labeled facts")
    if body_predicates is None:
        body_predicates = _default_body_predicates(kg, heads)

    results: dict[tuple, HornRule] = {}
    visited: set[tuple] = set()
    queue: deque[HornRule] = deque()
    for hp in heads:
        root = HornRule((), Atom(hp, Var(0), Var(1)))
        visited.add(canonical_key(root))
        queue.append(root)

    truncated = False
    while queue:
        rule = queue.popleft()
        if is_output_rule(rule, cfg.mode, cfg.max_atoms):
            stats = rule_stats(rule, kg)
            if stats.evaluable and stats.correct >= cfg.min_correct and stats.precision >= cfg.min_precision - 1e-12:
                results[canonical_key(rule)] = rule.with_stats(stats)
        if cfg.max_candidates is not None and len(visited) >= cfg.max_candidates:
            truncated = True
            continue
        for cand in refine(rule, kg, cfg.mode, body_predicates, cfg.max_atoms):
            key = canonical_key(cand)
            if key in visited:
                continue
            visited.add(key)
            if _support(cand, kg) < cfg.min_correct:
                continue
            queue.append(cand)
    if truncated:
        logging.getLogger(__name__).warning(
            "mine: candidate cap %d reached; output may be incomplete", cfg.max_candidates
        )

    def sort_key(r: HornRule):
        return (-r.stats.precision, -r.stats.correct, canonical_key(r))

    return sorted(results.values(), key=sort_key)


# ----------------------------------------------------------------------
# serialization

_VAR_NAMES = ("?x", "?y", "?z", "?v3", "?v4")


def _variable_names(rule: HornRule) -> dict[Var, str]:
    names: dict[Var, str] = {}
    order: list[Var] = []
    if isinstance(rule.head.s, Var):
        order.append(rule.head.s)
    if isinstance(rule.head.o, Var) and rule.head.o not in order:
        order.append(rule.head.o)
    for atom in rule.body:
        for v in atom.variables():
            if v not in order:
                order.append(v)
    for i, v in enumerate(order):
        names[v] = _VAR_NAMES[i]
    return names


def format_atom(atom: Atom, kg: KnowledgeGraph, names: dict[Var, str]) -> str:
    def term(t: Term) -> str:
        if isinstance(t, Const):
            return kg.entity_labels[t.entity]
        return names[t]

    return f"{kg.predicate_labels[atom.pred]}({term(atom.s)},{term(atom.o)})"


def format_rule(rule: HornRule, kg: KnowledgeGraph) -> str:
    """``body & body => head  precision=<float> correct=<int>``.

    Variables print as ?x/?y/?z, constants as entity labels. Labels that
    contain the delimiters (tabs, '&', '=>', commas, parentheses) are not
    supported by the parser.
    """
    names = _variable_names(rule)
    body = " & ".join(format_atom(a, kg, names) for a in rule.body)
    head = format_atom(rule.head, kg, names)
    text = f"{body} => {head}"
    if rule.stats is not None:
        text += f"  precision={rule.stats.precision!r} correct={rule.stats.correct}"
    return text


def parse_rule(line: str, kg: KnowledgeGraph) -> HornRule:
    """Inverse of :func:`format_rule` (stats included when present)."""
    line = line.strip()
    stats = None
    if "  precision=" in line:
        line, _, stats_part = line.partition("  precision=")
        prec_str, _, corr_part = stats_part.partition(" correct=")
        precision = float(prec_str)
        correct = int(corr_part.strip())
        # `labeled` is recoverable only when precision > 0; store the
        # consistent pair for round-tripped reports.
        labeled = round(correct / precision) if precision > 0 else 0
        stats = RuleStats(correct, labeled, precision, evaluable=True)
    body_part, _, head_part = line.partition("=>")
    if not head_part:
        raise DataError(f"cannot parse rule line: {line!r}")

    var_ids: dict[str, int] = {}

    def parse_term(tok: str) -> Term:
        tok = tok.strip()
        if tok.startswith("?"):
            if tok not in var_ids:
                var_ids[tok] = len(var_ids)
            return Var(var_ids[tok])
        if tok not in kg.entity_ids:
            raise DataError(f"unknown entity label {tok!r} in rule")
        return Const(kg.entity_ids[tok])

    def parse_atom(text: str) -> Atom:
        text = text.strip()
        if not text.endswith(")") or "(" not in text:
            raise DataError(f"cannot parse atom {text!r}")
        name, _, args = text[:-1].partition("(")
        if name not in kg.predicate_ids:
            raise DataError(f"unknown predicate label {name!r} in rule")
        parts = args.split(",")
        if len(parts) != 2:
            raise DataError(f"atom {text!r} must have exactly 2 arguments")
        return Atom(kg.predicate_ids[name], parse_term(parts[0]), parse_term(parts[1]))

    body = tuple(parse_atom(a) for a in body_part.split(" & ") if a.strip())
    head = parse_atom(head_part)
    return HornRule(body, head, stats)
