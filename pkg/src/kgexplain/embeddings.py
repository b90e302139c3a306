"""TransE, ComplEx, and HolE link predictors.

The three score functions are implemented natively (no autograd) together
with their analytic gradients, so training is fully deterministic given a
seed and the gradients can be checked against finite differences.

ComplEx embeds entities/predicates in C^d, realized as rows of 2d reals
(first d real parts, last d imaginary parts). HolE's circular correlation
is computed directly in O(d^2); at desk-scale dimensions an FFT path is
not worth the extra code.
"""

from __future__ import annotations

import csv
import io
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, TrainingDiverged
from .kg import Fact, KnowledgeGraph

TRANSE = "transe"
COMPLEX = "complex"
HOLE = "hole"
KINDS = (TRANSE, COMPLEX, HOLE)

_KIND_CODES = {TRANSE: 1, COMPLEX: 2, HOLE: 3}
_CODE_KINDS = {v: k for k, v in _KIND_CODES.items()}


@dataclass
class TrainConfig:
    """Hyperparameters for :func:`train`. The seed is mandatory."""

    seed: int
    learning_rate: float = 0.05
    epochs: int = 100
    batch_size: int = 32
    margin: float = 1.0
    negatives_per_positive: int = 2
    dim: int = 16
    norm: int = 1
    weight_decay: float = 1e-4

    def __post_init__(self):
        problems = []
        if self.learning_rate <= 0:
            problems.append("learning_rate must be > 0")
        if self.epochs < 0:
            problems.append("epochs must be >= 0")
        if self.batch_size < 1:
            problems.append("batch_size must be >= 1")
        if self.margin <= 0:
            problems.append("margin must be > 0")
        if self.negatives_per_positive < 1:
            problems.append("negatives_per_positive must be >= 1")
        if self.dim < 1:
            problems.append("dim must be >= 1")
        if self.norm not in (1, 2):
            problems.append("norm must be 1 or 2")
        if self.weight_decay < 0:
            problems.append("weight_decay must be >= 0")
        if problems:
            raise ValueError("; ".join(problems))


@dataclass
class EmbeddingModel:
    """Latent tables for one predictor. Row width is ``dim`` for TransE and
    HolE, ``2*dim`` for ComplEx (real parts then imaginary parts)."""

    kind: str
    dim: int
    entities: np.ndarray
    predicates: np.ndarray
    norm: int = 2
    loss_history: list = field(default_factory=list, repr=False)

    def copy(self) -> "EmbeddingModel":
        return EmbeddingModel(
            self.kind, self.dim, self.entities.copy(), self.predicates.copy(),
            self.norm, list(self.loss_history),
        )

    def score(self, fact: Fact | tuple[int, int, int]) -> float:
        s, p, o = fact[:3]
        return score_rows(self.kind, self.entities[s], self.predicates[p], self.entities[o], self.norm)

    def scorer(self):
        """The model's link predictor f as a plain callable on facts."""
        return self.score

    def pair_vector(self, s: int, o: int) -> np.ndarray:
        """Concatenated entity rows (subject first); used for clustering."""
        return np.concatenate([self.entities[s], self.entities[o]])


def init_model(kind: str, dim: int, kg: KnowledgeGraph, seed: int, norm: int = 2) -> EmbeddingModel:
    """Tables drawn uniformly from [-6/sqrt(dim), 6/sqrt(dim)]."""
    if kind not in KINDS:
        raise ValueError(f"unknown model kind {kind!r}")
    if dim < 1:
        raise ValueError("dim must be >= 1")
    rng = np.random.default_rng(seed)
    bound = 6.0 / np.sqrt(dim)
    width = 2 * dim if kind == COMPLEX else dim
    ent = rng.uniform(-bound, bound, size=(kg.n_entities, width))
    pred = rng.uniform(-bound, bound, size=(kg.n_predicates, width))
    return EmbeddingModel(kind, dim, ent, pred, norm)


# ----------------------------------------------------------------------
# score functions and analytic gradients

def _corr_index(d: int) -> np.ndarray:
    # IDX[k, i] = (i + k) % d  so that corr(a, b)[k] = a @ b[IDX[k]]
    i = np.arange(d)
    return (i[None, :] + i[:, None]) % d


def circular_correlation(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """(a * b)[k] = sum_i a_i b_{(i+k) mod d}."""
    d = a.shape[0]
    return b[_corr_index(d)] @ a


def circular_convolution(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """(a (x) b)[m] = sum_i a_i b_{(m-i) mod d}."""
    d = a.shape[0]
    i = np.arange(d)
    idx = (i[:, None] - i[None, :]) % d  # idx[m, i] = (m - i) % d
    return b[idx] @ a


def _split_complex(v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    d = v.shape[0] // 2
    return v[:d], v[d:]


def score_rows(kind: str, s: np.ndarray, p: np.ndarray, o: np.ndarray, norm: int = 2) -> float:
    if kind == TRANSE:
        diff = s + p - o
        return float(-np.linalg.norm(diff, ord=norm))
    if kind == COMPLEX:
        sr, si = _split_complex(s)
        pr, pi = _split_complex(p)
        orr, oi = _split_complex(o)
        # Re(sum_j s_j p_j conj(o_j))
        return float(np.sum(pr * sr * orr + pr * si * oi + pi * sr * oi - pi * si * orr))
    if kind == HOLE:
        return float(p @ circular_correlation(s, o))
    raise ValueError(f"unknown model kind {kind!r}")


def score_gradients(kind: str, s: np.ndarray, p: np.ndarray, o: np.ndarray, norm: int = 2):
    """d(score)/d(s), d(score)/d(p), d(score)/d(o) for one fact.

    The three slots are treated as independent variables; callers with
    s == o accumulate both contributions themselves.
    """
    if kind == TRANSE:
        diff = s + p - o
        if norm == 1:
            g = np.sign(diff)
        else:
            nrm = np.linalg.norm(diff)
            g = diff / nrm if nrm > 1e-12 else np.zeros_like(diff)
        return -g, -g, g
    if kind == COMPLEX:
        sr, si = _split_complex(s)
        pr, pi = _split_complex(p)
        orr, oi = _split_complex(o)
        gs = np.concatenate([pr * orr + pi * oi, pr * oi - pi * orr])
        gp = np.concatenate([sr * orr + si * oi, sr * oi - si * orr])
        go = np.concatenate([pr * sr - pi * si, pr * si + pi * sr])
        return gs, gp, go
    if kind == HOLE:
        gs = circular_correlation(p, o)
        gp = circular_correlation(s, o)
        go = circular_convolution(s, p)
        return gs, gp, go
    raise ValueError(f"unknown model kind {kind!r}")


def _sigmoid(x):
    out = np.empty_like(np.asarray(x, dtype=float))
    x = np.asarray(x, dtype=float)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def per_fact_loss(model: EmbeddingModel, fact, loss_kind: str = "score", label: int = 1) -> float:
    """The scalar the gradients of :func:`gradient` differentiate."""
    s, p, o = fact[:3]
    sc = model.score(fact)
    if loss_kind == "score":
        return sc
    if loss_kind == "logistic":
        return float(np.logaddexp(0.0, -label * sc))
    raise ValueError(f"unknown loss kind {loss_kind!r}")


def gradient(model: EmbeddingModel, fact, loss_kind: str = "score", label: int = 1) -> dict[str, np.ndarray]:
    """Analytic gradient of the per-fact loss w.r.t. the involved rows.

    ``loss_kind='score'`` differentiates the raw score (the building block
    of TransE's margin loss); ``'logistic'`` differentiates
    log(1 + exp(-label * score)), the ComplEx/HolE training loss.
    """
    s, p, o = fact[:3]
    gs, gp, go = score_gradients(model.kind, model.entities[s], model.predicates[p], model.entities[o], model.norm)
    if loss_kind == "score":
        factor = 1.0
    elif loss_kind == "logistic":
        sc = model.score(fact)
        factor = -label * float(_sigmoid(-label * sc))
    else:
        raise ValueError(f"unknown loss kind {loss_kind!r}")
    return {"s": factor * gs, "p": factor * gp, "o": factor * go}


# ----------------------------------------------------------------------
# training

def train(model: EmbeddingModel, kg: KnowledgeGraph, cfg: TrainConfig) -> EmbeddingModel:
    """SGD training; deterministic given the seed (single-threaded).

    TransE minimizes the margin ranking loss
    sum max(0, margin + score(neg) - score(pos)); ComplEx and HolE minimize
    the logistic loss with L2 weight decay on the touched rows. Negatives
    come from domain-restricted Bernoulli corruption. The returned model
    carries the per-epoch mean loss in ``loss_history``.
    """
    model = model.copy()
    model.loss_history = []
    rng = np.random.default_rng(cfg.seed)
    facts = sorted(kg.positives())
    if not facts:
        raise DataError("cannot train on an empty graph")

    ent, pred = model.entities, model.predicates
    for _epoch in range(cfg.epochs):
        order = rng.permutation(len(facts))
        total = 0.0
        terms = 0
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            ent_upd: dict[int, np.ndarray] = {}
            pred_upd: dict[int, np.ndarray] = {}

            def add(upd, idx, vec):
                if idx in upd:
                    upd[idx] += vec
                else:
                    upd[idx] = vec.copy()

            for fi in batch:
                pos = Fact(*facts[fi])
                negs = kg.corrupt_fact(pos, rng, cfg.negatives_per_positive)
                if model.kind == TRANSE:
                    sp = model.score(pos)
                    for neg in negs:
                        sn = model.score(neg)
                        viol = cfg.margin + sn - sp
                        total += max(0.0, viol)
                        terms += 1
                        if viol <= 0:
                            continue
                        gps, gpp, gpo = score_gradients(TRANSE, ent[pos.s], pred[pos.p], ent[pos.o], model.norm)
                        gns, gnp, gno = score_gradients(TRANSE, ent[neg.s], pred[neg.p], ent[neg.o], model.norm)
                        # d(loss)/d(theta) = d(sn)/d(theta) - d(sp)/d(theta)
                        add(ent_upd, pos.s, -gps)
                        add(ent_upd, pos.o, -gpo)
                        add(pred_upd, pos.p, gnp - gpp)
                        add(ent_upd, neg.s, gns)
                        add(ent_upd, neg.o, gno)
                else:
                    for fct, y in [(pos, 1)] + [(ng, -1) for ng in negs]:
                        sc = model.score(fct)
                        total += float(np.logaddexp(0.0, -y * sc))
                        terms += 1
                        factor = -y * float(_sigmoid(-y * sc))
                        gs, gp, go = score_gradients(model.kind, ent[fct.s], pred[fct.p], ent[fct.o], model.norm)
                        add(ent_upd, fct.s, factor * gs)
                        add(ent_upd, fct.o, factor * go)
                        add(pred_upd, fct.p, factor * gp)

            lr = cfg.learning_rate
            wd = cfg.weight_decay if model.kind != TRANSE else 0.0
            for idx, g in ent_upd.items():
                ent[idx] -= lr * (g + wd * ent[idx])
            for idx, g in pred_upd.items():
                pred[idx] -= lr * (g + wd * pred[idx])

        if model.kind == TRANSE:
            norms = np.linalg.norm(ent, axis=1, keepdims=True)
            np.divide(ent, norms, out=ent, where=norms > 0)

        mean_loss = total / max(terms, 1)
        if not np.isfinite(mean_loss):
            raise TrainingDiverged(f"non-finite training loss at epoch {_epoch}: {mean_loss}")
        model.loss_history.append(mean_loss)
    return model


# ----------------------------------------------------------------------
# checkpoint I/O

_MAGIC = b"KGXEMB\x00"
_HEADER = struct.Struct("<7sBBBBIII")  # magic, version, kind, norm, pad, dim, n_ent, n_pred


def save_model(model: EmbeddingModel, path) -> None:
    """Binary checkpoint: fixed header + row-major little-endian float64 tables."""
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(
            _MAGIC, 1, _KIND_CODES[model.kind], model.norm, 0,
            model.dim, model.entities.shape[0], model.predicates.shape[0],
        ))
        fh.write(np.ascontiguousarray(model.entities, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(model.predicates, dtype="<f8").tobytes())


def load_model(path) -> EmbeddingModel:
    with open(path, "rb") as fh:
        raw = fh.read(_HEADER.size)
        if len(raw) < _HEADER.size:
            raise DataError(f"checkpoint {path}: truncated header")
        magic, version, kind_code, norm, _pad, dim, n_ent, n_pred = _HEADER.unpack(raw)
        if magic != _MAGIC or version != 1:
            raise DataError(f"checkpoint {path}: bad magic or version")
        kind = _CODE_KINDS.get(kind_code)
        if kind is None:
            raise DataError(f"checkpoint {path}: unknown model kind code {kind_code}")
        width = 2 * dim if kind == COMPLEX else dim
        ent = np.frombuffer(fh.read(8 * n_ent * width), dtype="<f8").reshape(n_ent, width).copy()
        pred = np.frombuffer(fh.read(8 * n_pred * width), dtype="<f8").reshape(n_pred, width).copy()
    return EmbeddingModel(kind, dim, ent, pred, norm)


def export_csv(model: EmbeddingModel, kg: KnowledgeGraph, entities_out: io.TextIOBase, predicates_out: io.TextIOBase) -> None:
    """Human-inspectable CSV export: one labeled row per embedding."""
    ew = csv.writer(entities_out)
    for i, lbl in enumerate(kg.entity_labels):
        ew.writerow([lbl] + [repr(v) for v in model.entities[i]])
    pw = csv.writer(predicates_out)
    for i, lbl in enumerate(kg.predicate_labels):
        pw.writerow([lbl] + [repr(v) for v in model.predicates[i]])
