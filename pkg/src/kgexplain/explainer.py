"""Rule-based surrogate explanations for a black-box link predictor.

The pipeline for one context: calibrate a verdict threshold from the
predictor's scores, binarize the context into surrogate facts (one per
context fact, positive iff score >= threshold), mine Horn rules whose
heads are the two surrogate predicates, encode every annotated fact as a
vector of signed rule confidences, and fit an L2-regularized logistic
regression whose coefficients are the rule attributions.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import CalibrationError, DataError, ExplanationError
from .evaluation import FidelityRecord, mrr, roc_auc, split_context
from .kg import Fact, KnowledgeGraph
from .rules import HornRule, MiningConfig, mine, rule_fires_at
from .scoping import Context, ScopeTag

logger = logging.getLogger(__name__)

Scorer = Callable[[Fact], float]


# ----------------------------------------------------------------------
# deterministic logistic regression core

def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=float)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _fit_logistic(
    X: np.ndarray,
    y: np.ndarray,
    reg: float,
    tol: float = 1e-8,
    max_iter: int = 10_000,
) -> tuple[np.ndarray, float]:
    """Full-batch gradient descent with backtracking line search on
    sum(log(1 + exp(-y z))) + reg/2 ||w||^2, z = Xw + b. The intercept is
    not regularized. Zero initialization makes the fit deterministic."""
    n, k = X.shape
    w = np.zeros(k)
    b = 0.0

    def objective(wv, bv):
        z = X @ wv + bv
        return float(np.logaddexp(0.0, -y * z).sum() + 0.5 * reg * (wv @ wv))

    fval = objective(w, b)
    step = 1.0
    for _ in range(max_iter):
        z = X @ w + b
        r = -y * _sigmoid(-y * z)
        gw = X.T @ r + reg * w
        gb = float(r.sum())
        gnorm2 = float(gw @ gw) + gb * gb
        if np.sqrt(gnorm2) <= tol:
            break
        step = min(step * 2.0, 1e6)
        while step > 1e-14:
            w_new = w - step * gw
            b_new = b - step * gb
            f_new = objective(w_new, b_new)
            if f_new <= fval - 1e-4 * step * gnorm2:
                break
            step *= 0.5
        w, b, fval = w_new, b_new, f_new
    return w, b


# ----------------------------------------------------------------------
# threshold calibration (f_c(theta) = 0.5)

def calibrate_threshold(
    scores: Sequence[float],
    labels: Sequence[int],
    reg: float = 1e-6,
    max_iter: int = 20_000,
) -> float:
    """Fit a 1-D logistic classifier sigmoid(a*score + b) against the
    ground-truth labels and return theta = -b/a, the score at which the
    estimated probability of truth crosses 0.5. Requires a > 0."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=float)
    if scores.ndim != 1 or scores.shape != labels.shape:
        raise ValueError("scores and labels must be 1-D of equal length")
    if len(scores) < 4:
        raise CalibrationError(f"need at least 4 points to calibrate, got {len(scores)}")
    if len(np.unique(labels)) < 2:
        raise CalibrationError("calibration needs both classes")
    if not np.all(np.isfinite(scores)):
        raise CalibrationError("non-finite scores")
    w, b = _fit_logistic(scores[:, None], labels, reg=reg, max_iter=max_iter)
    a = float(w[0])
    if a <= 0:
        raise CalibrationError(f"scores anti-correlated with labels (slope {a:.3g})")
    return -b / a


# ----------------------------------------------------------------------
# binarization

@dataclass(frozen=True)
class AnnotatedFact:
    """One context fact with the black box's verdict attached."""

    fact: Fact          # polarity flag = ground truth from the context
    score: float
    verdict: bool       # f(A) >= theta
    group: int

    @property
    def sgn(self) -> int:
        return 1 if self.verdict else -1


@dataclass(frozen=True)
class AnnotatedContext:
    """The surrogate fact set: exactly one annotation per context fact."""

    predicate: int
    entries: tuple[AnnotatedFact, ...]
    theta: float

    def __len__(self) -> int:
        return len(self.entries)


def binarize(f: Scorer, context: Context, theta: float) -> AnnotatedContext:
    """Score every context fact and threshold at theta (inclusive)."""
    entries = []
    for cf in context.facts:
        sc = float(f(cf.fact))
        entries.append(AnnotatedFact(cf.fact, sc, sc >= theta, cf.group))
    return AnnotatedContext(context.predicate, tuple(entries), theta)


def surrogate_predicate_labels(kg: KnowledgeGraph, predicate: int) -> tuple[str, str]:
    base = kg.predicate_labels[predicate]
    pos, neg = f"{base}^f", f"!{base}^f"
    while pos in kg.predicate_ids or neg in kg.predicate_ids:
        pos, neg = pos + "'", neg + "'"
    return pos, neg


def augment_graph(kg: KnowledgeGraph, annotated: AnnotatedContext) -> tuple[KnowledgeGraph, int, int]:
    """K union K-hat: add the two surrogate predicates and, per annotated
    fact, one positive surrogate fact plus the opposite-polarity fact as
    an explicit negative (the counter-example for the other head)."""
    pos_label, neg_label = surrogate_predicate_labels(kg, annotated.predicate)
    pf = kg.n_predicates
    nf = kg.n_predicates + 1
    positives = []
    negatives = []
    for a in annotated.entries:
        s, _, o = a.fact.key()
        if a.verdict:
            positives.append((s, pf, o))
            negatives.append((s, nf, o))
        else:
            positives.append((s, nf, o))
            negatives.append((s, pf, o))
    kg_aug = kg.extend([pos_label, neg_label], positives, negatives)
    return kg_aug, pf, nf


# ----------------------------------------------------------------------
# feature encoding

def encode_pair(
    s: int,
    o: int,
    rules: Sequence[HornRule],
    kg_aug: KnowledgeGraph,
    positive_pred: int,
) -> np.ndarray:
    """Verdict-free encoding of an (s, o) pair: the i-th entry is
    +conf(R_i) when a positively-headed rule fires at the pair,
    -conf(R_i) when a negatively-headed rule fires, 0 otherwise."""
    x = np.zeros(len(rules))
    for i, rule in enumerate(rules):
        if rule_fires_at(rule, s, o, kg_aug):
            sign = 1.0 if rule.head.pred == positive_pred else -1.0
            x[i] = sign * rule.stats.conf
    return x


def encode_features(
    annotated_fact: AnnotatedFact,
    rules: Sequence[HornRule],
    kg_aug: KnowledgeGraph,
    positive_pred: int,
) -> np.ndarray:
    """Feature vector x_A for an annotated fact A.

    Case analysis per rule R_i: sgn(A)*conf(R_i) when R_i predicts A
    itself (same pair, same surrogate polarity — a correct prediction
    since A is annotated); -sgn(A)*conf(R_i) when R_i predicts the
    opposite-polarity fact at the same pair; 0 when R_i does not fire.
    Both agreement cases collapse to the verdict-free
    :func:`encode_pair`, which is what inference on unlabeled pairs uses.
    """
    s, _, o = annotated_fact.fact.key()
    x = np.zeros(len(rules))
    sgn = annotated_fact.sgn
    for i, rule in enumerate(rules):
        if not rule_fires_at(rule, s, o, kg_aug):
            continue
        head_positive = rule.head.pred == positive_pred
        if head_positive == annotated_fact.verdict:
            x[i] = sgn * rule.stats.conf
        else:
            x[i] = -sgn * rule.stats.conf
    return x


# ----------------------------------------------------------------------
# surrogate model

@dataclass(frozen=True)
class SurrogateModel:
    coefficients: np.ndarray
    intercept: float
    theta: float | None = None
    degenerate: bool = False

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return _sigmoid(X @ self.coefficients + self.intercept)


def fit_surrogate(X: np.ndarray, y: Sequence[int], reg: float = 1.0, theta: float | None = None) -> SurrogateModel:
    """L2-regularized logistic fit of the rule features against the
    binarized verdicts. Deterministic (zero init, full-batch descent with
    line search, gradient norm <= 1e-8 or 10k iterations).

    Single-class input degenerates to a constant model (smoothed
    log-odds intercept) flagged ``degenerate``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or X.shape[1] < 1:
        raise ValueError("X must be 2-D with at least one feature")
    if X.shape[0] != y.shape[0]:
        raise ValueError("X and y disagree on the number of rows")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("non-finite inputs")
    if reg < 0:
        raise ValueError("reg must be >= 0")
    classes = np.unique(y)
    if len(classes) < 2:
        n_pos = float((y > 0).sum())
        n_neg = float(len(y) - n_pos)
        b = float(np.log((n_pos + 0.5) / (n_neg + 0.5)))
        logger.warning("fit_surrogate: single-class labels; returning constant model")
        return SurrogateModel(np.zeros(X.shape[1]), b, theta, degenerate=True)
    w, b = _fit_logistic(X, y, reg=reg)
    return SurrogateModel(w, b, theta)


# ----------------------------------------------------------------------
# explanation object and Algorithm "build explanation"

@dataclass
class ExplainConfig:
    mining: MiningConfig = field(default_factory=MiningConfig)
    test_fraction: float = 0.3
    surrogate_reg: float = 1.0
    calibration_reg: float = 1e-6
    seed: int = 0
    compute_mrr: bool = True


@dataclass
class Explanation:
    """A rule set with attributions: E = (rules, g). ``g(rule)`` is the
    rule's logistic coefficient; zero-coefficient rules stay in the set
    but carry no attribution. ``empty`` marks contexts where no rule met
    the mining thresholds (fidelity undefined / not covered)."""

    predicate: int
    mode: str
    scope: ScopeTag
    theta: float
    rules: tuple[HornRule, ...]
    surrogate: SurrogateModel | None
    fidelity: FidelityRecord | None
    empty: bool = False
    degenerate: bool = False
    kg_aug: KnowledgeGraph | None = field(default=None, repr=False)
    positive_pred: int | None = None
    negative_pred: int | None = None

    def g(self, rule: HornRule) -> float:
        idx = self.rules.index(rule)
        return float(self.surrogate.coefficients[idx])

    def attributions(self) -> np.ndarray:
        return self.surrogate.coefficients

    def score(self, fact: Fact | tuple[int, int, int]) -> float:
        return surrogate_score(self, fact)


def surrogate_score(expl: Explanation, fact: Fact | tuple[int, int, int]) -> float:
    """sigmoid(w . x + b) for the fact's pair under the explanation."""
    s, p, o = fact[:3]
    if p != expl.predicate:
        raise DataError(f"fact predicate {p} does not match explanation predicate {expl.predicate}")
    if expl.empty or expl.surrogate is None:
        raise ExplanationError("explanation is empty; no surrogate to score with")
    x = encode_pair(s, o, expl.rules, expl.kg_aug, expl.positive_pred)
    return float(expl.surrogate.predict_proba(x[None, :])[0])


def build_explanation(f: Scorer, kg: KnowledgeGraph, context: Context, cfg: ExplainConfig) -> Explanation:
    """Run the full per-context pipeline and evaluate on the held-out
    split: calibrate -> binarize -> mine -> encode -> fit -> fidelity.

    The threshold, the mined rules, and the surrogate only ever see the
    training split. Raises :class:`ExplanationError` when the context
    cannot support the pipeline (too small, single-class, uncalibratable);
    returns an ``empty`` explanation when mining finds no rules.
    """
    try:
        c_train, c_test = split_context(context, cfg.test_fraction, cfg.seed)
    except DataError as exc:
        raise ExplanationError(f"cannot split context: {exc}") from exc

    train_scores = [float(f(cf.fact)) for cf in c_train.facts]
    train_truth = [cf.label for cf in c_train.facts]
    try:
        theta = calibrate_threshold(train_scores, train_truth, reg=cfg.calibration_reg)
    except CalibrationError as exc:
        raise ExplanationError(f"calibration failed: {exc}") from exc

    annotated_train = binarize(f, c_train, theta)
    kg_aug, pf, nf = augment_graph(kg, annotated_train)
    rules = tuple(mine(kg_aug, [pf, nf], cfg.mining))
    if not rules:
        logger.info("no rules met the thresholds for predicate %d (%s scope)", context.predicate, context.scope.kind)
        return Explanation(
            predicate=context.predicate, mode=cfg.mining.mode, scope=context.scope,
            theta=theta, rules=(), surrogate=None, fidelity=None, empty=True,
            kg_aug=kg_aug, positive_pred=pf, negative_pred=nf,
        )

    X = np.stack([encode_features(a, rules, kg_aug, pf) for a in annotated_train.entries])
    y = np.array([a.sgn for a in annotated_train.entries])
    surrogate = fit_surrogate(X, y, reg=cfg.surrogate_reg, theta=theta)

    expl = Explanation(
        predicate=context.predicate, mode=cfg.mining.mode, scope=context.scope,
        theta=theta, rules=rules, surrogate=surrogate, fidelity=None,
        degenerate=surrogate.degenerate, kg_aug=kg_aug, positive_pred=pf, negative_pred=nf,
    )
    expl.fidelity = _held_out_fidelity(expl, f, kg, c_test, cfg)
    return expl


def _held_out_fidelity(expl: Explanation, f: Scorer, kg: KnowledgeGraph, c_test: Context, cfg: ExplainConfig) -> FidelityRecord:
    annotated_test = binarize(f, c_test, expl.theta)
    probs = [surrogate_score(expl, a.fact) for a in annotated_test.entries]
    verdicts = [a.sgn for a in annotated_test.entries]
    auc = None
    if len(set(verdicts)) == 2:
        auc = roc_auc(probs, verdicts)

    s_mrr = o_mrr = None
    if cfg.compute_mrr:
        true_facts = [cf.fact for cf in c_test.positives()]
        subj_queries = [(tf, "subject") for tf in true_facts]
        obj_queries = [(tf, "object") for tf in true_facts]
        if subj_queries:
            s_mrr = mrr(expl, subj_queries, kg)
            o_mrr = mrr(expl, obj_queries, kg)
    return FidelityRecord(
        roc_auc=auc, s_mrr=s_mrr, o_mrr=o_mrr,
        test_size=len(c_test.facts), scope=c_test.scope.describe(),
    )
