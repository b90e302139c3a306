"""Pipeline stages behind the CLI: each reads prior artifacts from the
output directory and writes its own. All artifacts are plain files;
reruns with the same config and seeds are byte-identical."""

from __future__ import annotations

import json
import logging
from pathlib import Path

import numpy as np

from . import embeddings, rules, scoping
from .config import PipelineConfig
from .errors import DataError, ExplanationError
from .evaluation import FidelityRecord, weighted_fidelity
from .explainer import ExplainConfig, Explanation, build_explanation
from .kg import Fact, KnowledgeGraph, ingest_triples

logger = logging.getLogger(__name__)


def _require(path: Path, artifact: str, command: str) -> Path:
    if not path.exists():
        raise DataError(f"{artifact} not found at {path}; run `kgexplain {command}` first")
    return path


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n", encoding="utf-8")


# ----------------------------------------------------------------------
# ingest

def cmd_ingest(cfg: PipelineConfig) -> Path:
    out = Path(cfg.out) / "graph"
    out.mkdir(parents=True, exist_ok=True)
    kg = ingest_triples(cfg.train_path)
    with open(out / "entities.tsv", "w", encoding="utf-8") as ef, \
         open(out / "predicates.tsv", "w", encoding="utf-8") as pf:
        kg.dump_dictionaries(ef, pf)
    with open(out / "train.tsv", "w", encoding="utf-8") as fh:
        kg.serialize_triples(fh)
    for name, src in (("valid.tsv", cfg.valid_path), ("test.tsv", cfg.test_path)):
        src_path = Path(src)
        text = src_path.read_text(encoding="utf-8") if src_path.exists() else ""
        (out / name).write_text(text, encoding="utf-8")
    _write_json(out / "meta.json", {
        "entities": kg.n_entities,
        "predicates": kg.n_predicates,
        "train_facts": kg.n_facts,
    })
    logger.info("ingested %s", kg)
    return out


def load_graph(cfg: PipelineConfig) -> KnowledgeGraph:
    out = Path(cfg.out) / "graph"
    _require(out / "train.tsv", "graph artifact", "ingest")
    return ingest_triples(out / "train.tsv")


def load_test_triples(cfg: PipelineConfig) -> list[tuple[str, str, str]]:
    path = _require(Path(cfg.out) / "graph" / "test.tsv", "graph artifact", "ingest")
    triples = []
    for line in path.read_text(encoding="utf-8").splitlines():
        line = line.rstrip("\r")
        if line.strip():
            triples.append(tuple(line.split("\t")))
    return triples


# ----------------------------------------------------------------------
# train

def cmd_train(cfg: PipelineConfig) -> Path:
    kg = load_graph(cfg)
    model = embeddings.init_model(cfg.model_kind, cfg.dim, kg, cfg.seed, cfg.norm)
    model = embeddings.train(model, kg, cfg.train_config())
    out = Path(cfg.out) / "model"
    out.mkdir(parents=True, exist_ok=True)
    embeddings.save_model(model, out / "model.kgem")
    _write_json(out / "train_log.json", {
        "kind": model.kind, "dim": model.dim, "norm": model.norm,
        "epochs": len(model.loss_history),
        "loss_history": [float(v) for v in model.loss_history],
    })
    return out / "model.kgem"


def load_model(cfg: PipelineConfig) -> embeddings.EmbeddingModel:
    path = _require(Path(cfg.out) / "model" / "model.kgem", "model artifact", "train")
    return embeddings.load_model(path)


# ----------------------------------------------------------------------
# standalone rule mining on the training graph

def cmd_mine(cfg: PipelineConfig) -> Path:
    kg = load_graph(cfg)
    rng = np.random.default_rng([cfg.seed, 0xD1CE])
    head_preds = range(kg.n_predicates)
    if cfg.predicate is not None:
        if cfg.predicate not in kg.predicate_ids:
            raise DataError(f"unknown predicate label {cfg.predicate!r}")
        head_preds = [kg.predicate_ids[cfg.predicate]]

    lines = []
    mcfg = cfg.mining_config()
    for p in head_preds:
        negatives = []
        for s, o in kg.positive_pairs(p):
            negatives.extend(f.key() for f in kg.corrupt_fact((s, p, o), rng, 2))
        labeled = kg.extend((), (), negatives)
        for rule in rules.mine(labeled, [p], mcfg):
            lines.append(rules.format_rule(rule, labeled))
    out = Path(cfg.out) / "rules"
    out.mkdir(parents=True, exist_ok=True)
    (out / "rules.txt").write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    return out / "rules.txt"


# ----------------------------------------------------------------------
# explanations

def explanation_to_dict(expl: Explanation, kg_aug: KnowledgeGraph, predicate_label: str) -> dict:
    record = {
        "predicate": predicate_label,
        "scope": expl.scope.describe(),
        "mode": expl.mode,
        "theta": float(expl.theta),
        "empty": expl.empty,
        "degenerate": expl.degenerate,
        "intercept": float(expl.surrogate.intercept) if expl.surrogate else None,
        "rules": [
            {
                "rule": rules.format_rule(rule, kg_aug),
                "conf": float(rule.stats.conf),
                "coefficient": float(expl.surrogate.coefficients[i]),
            }
            for i, rule in enumerate(expl.rules)
        ],
        "fidelity": None,
    }
    if expl.fidelity is not None:
        f = expl.fidelity
        record["fidelity"] = {
            "roc_auc": None if f.roc_auc is None else float(f.roc_auc),
            "s_mrr": None if f.s_mrr is None else float(f.s_mrr),
            "o_mrr": None if f.o_mrr is None else float(f.o_mrr),
            "test_size": f.test_size,
            "scope": f.scope,
        }
    return record


def load_explanation_record(path: Path) -> dict:
    return json.loads(path.read_text(encoding="utf-8"))


def _test_facts_by_predicate(cfg: PipelineConfig, kg: KnowledgeGraph) -> dict[int, list[Fact]]:
    """Group test triples by predicate, keeping only facts inside the
    train graph's potential set (everything else is unscorable)."""
    by_pred: dict[int, list[Fact]] = {}
    skipped = 0
    for s_lbl, p_lbl, o_lbl in load_test_triples(cfg):
        if p_lbl not in kg.predicate_ids:
            skipped += 1
            continue
        p = kg.predicate_ids[p_lbl]
        s = kg.entity_ids.get(s_lbl)
        o = kg.entity_ids.get(o_lbl)
        if s is None or o is None or not kg.in_potential_set(s, p, o):
            skipped += 1
            continue
        by_pred.setdefault(p, []).append(Fact(s, p, o))
    if skipped:
        logger.info("explain: skipped %d test facts outside the train potential set", skipped)
    if cfg.predicate is not None:
        if cfg.predicate not in kg.predicate_ids:
            raise DataError(f"unknown predicate label {cfg.predicate!r}")
        keep = kg.predicate_ids[cfg.predicate]
        by_pred = {keep: by_pred.get(keep, [])}
    return by_pred


def _slug(label: str) -> str:
    return "".join(c if c.isalnum() or c in "-_." else "_" for c in label)


def cmd_explain(cfg: PipelineConfig) -> Path:
    kg = load_graph(cfg)
    model = load_model(cfg)
    f = model.score
    ecfg = ExplainConfig(
        mining=cfg.mining_config(),
        test_fraction=cfg.test_fraction,
        surrogate_reg=cfg.surrogate_reg,
        seed=cfg.seed,
        compute_mrr=cfg.compute_mrr,
    )
    out = Path(cfg.out) / "explanations" / f"{cfg.scope}_{cfg.mode}"
    out.mkdir(parents=True, exist_ok=True)

    summary: dict[str, dict] = {}
    for p, facts in sorted(_test_facts_by_predicate(cfg, kg).items()):
        label = kg.predicate_labels[p]
        entry: dict = {"covered": False, "files": [], "reason": None}
        summary[label] = entry
        if len(facts) < cfg.min_true_facts:
            entry["reason"] = f"only {len(facts)} usable test facts (< {cfg.min_true_facts})"
            continue
        rng = np.random.default_rng([cfg.seed, p])
        context = scoping.global_context(kg, p, facts, rng)
        with open(out / f"{_slug(label)}.context.csv", "w", encoding="utf-8") as fh:
            scoping.context_to_csv(context, kg, fh)
        try:
            if cfg.scope == "global":
                expl = build_explanation(f, kg, context, ecfg)
                fname = f"{_slug(label)}.json"
                _write_json(out / fname, explanation_to_dict(expl, expl.kg_aug, label))
                entry["files"].append(fname)
                entry["covered"] = not expl.empty
                if expl.empty:
                    entry["reason"] = "no rules met the mining thresholds"
            elif cfg.scope == "local":
                result = scoping.select_k(kg, context, model, f, ecfg, (cfg.k_min, cfg.k_max))
                entry["k"] = result.k
                entry["k_scores"] = {str(k): float(v) for k, v in sorted(result.scores.items())}
                covered_any = False
                for expl in result.explanations:
                    fname = f"{_slug(label)}.k{result.k}.c{expl.scope.cluster}.json"
                    _write_json(out / fname, explanation_to_dict(expl, expl.kg_aug, label))
                    entry["files"].append(fname)
                    covered_any = covered_any or not expl.empty
                entry["covered"] = covered_any
            else:  # instance
                covered_any = False
                for i, fact in enumerate(facts[: cfg.max_instances_per_predicate]):
                    try:
                        ictx = scoping.instance_context(context, fact)
                        expl = build_explanation(f, kg, ictx, ecfg)
                    except ExplanationError as exc:
                        logger.debug("instance %s skipped: %s", fact[:3], exc)
                        continue
                    fname = f"{_slug(label)}.i{i}.json"
                    _write_json(out / fname, explanation_to_dict(expl, expl.kg_aug, label))
                    entry["files"].append(fname)
                    covered_any = covered_any or not expl.empty
                entry["covered"] = covered_any
                if not covered_any:
                    entry["reason"] = "no instance context produced rules"
        except ExplanationError as exc:
            entry["reason"] = str(exc)
    _write_json(out / "summary.json", summary)
    return out


# ----------------------------------------------------------------------
# evaluate and report

def _fidelity_records(expl_dir: Path) -> list[FidelityRecord]:
    records = []
    for path in sorted(expl_dir.glob("*.json")):
        if path.name == "summary.json":
            continue
        rec = load_explanation_record(path)
        fid = rec.get("fidelity")
        if fid is None:
            continue
        records.append(FidelityRecord(
            roc_auc=fid["roc_auc"], s_mrr=fid["s_mrr"], o_mrr=fid["o_mrr"],
            test_size=fid["test_size"], scope=fid["scope"],
        ))
    return records


def cmd_evaluate(cfg: PipelineConfig) -> Path:
    base = Path(cfg.out) / "explanations"
    _require(base, "explanations", "explain")
    table: dict[str, dict] = {}
    for expl_dir in sorted(d for d in base.iterdir() if d.is_dir()):
        records = _fidelity_records(expl_dir)
        if not records:
            table[expl_dir.name] = {"calls": 0}
            continue
        agg = weighted_fidelity(records)
        table[expl_dir.name] = {
            "calls": len(records),
            "roc_auc": agg.roc_auc,
            "s_mrr": agg.s_mrr,
            "o_mrr": agg.o_mrr,
            "test_size": agg.test_size,
        }
    out = Path(cfg.out) / "eval"
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "fidelity.json", table)
    with open(out / "fidelity.csv", "w", encoding="utf-8") as fh:
        fh.write("setting,calls,roc_auc,s_mrr,o_mrr,test_size\n")
        for setting, row in sorted(table.items()):
            fh.write(
                f"{setting},{row.get('calls', 0)},{row.get('roc_auc')},"
                f"{row.get('s_mrr')},{row.get('o_mrr')},{row.get('test_size')}\n"
            )
    return out / "fidelity.json"


def cmd_report(cfg: PipelineConfig, top_n: int = 5) -> Path:
    base = Path(cfg.out) / "explanations"
    _require(base, "explanations", "explain")
    fidelity_path = Path(cfg.out) / "eval" / "fidelity.json"
    _require(fidelity_path, "fidelity artifact", "evaluate")
    fidelity = json.loads(fidelity_path.read_text(encoding="utf-8"))

    model_kind = None
    log_path = Path(cfg.out) / "model" / "train_log.json"
    if log_path.exists():
        model_kind = json.loads(log_path.read_text(encoding="utf-8"))["kind"]

    coverage: dict[str, dict] = {}
    top_rules: dict[str, dict] = {}
    for expl_dir in sorted(d for d in base.iterdir() if d.is_dir()):
        n_rules = 0
        n_nonzero = 0
        covered: set[str] = set()
        attempted: set[str] = set()
        best: dict[str, list] = {}
        for path in sorted(expl_dir.glob("*.json")):
            if path.name == "summary.json":
                summary = load_explanation_record(path)
                attempted.update(summary.keys())
                continue
            rec = load_explanation_record(path)
            if not rec["empty"]:
                covered.add(rec["predicate"])
            ranked = sorted(rec["rules"], key=lambda r: (-abs(r["coefficient"]), r["rule"]))
            n_rules += len(ranked)
            n_nonzero += sum(1 for r in ranked if abs(r["coefficient"]) > 1e-12)
            pred_rules = best.setdefault(rec["predicate"], [])
            pred_rules.extend(ranked)
        coverage[expl_dir.name] = {
            "predicates_attempted": len(attempted),
            "predicates_covered": len(covered),
            "rules_total": n_rules,
            "rules_nonzero": n_nonzero,
        }
        top_rules[expl_dir.name] = {
            pred: sorted(rl, key=lambda r: (-abs(r["coefficient"]), r["rule"]))[:top_n]
            for pred, rl in sorted(best.items())
        }

    report = {
        "model": model_kind,
        "fidelity": fidelity,
        "coverage": coverage,
        "top_rules": top_rules,
    }
    out = Path(cfg.out) / "report"
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "report.json", report)
    with open(out / "report.csv", "w", encoding="utf-8") as fh:
        fh.write("setting,roc_auc,s_mrr,o_mrr,calls,predicates_covered,rules_nonzero\n")
        for setting in sorted(fidelity):
            row = fidelity[setting]
            cov = coverage.get(setting, {})
            fh.write(
                f"{setting},{row.get('roc_auc')},{row.get('s_mrr')},{row.get('o_mrr')},"
                f"{row.get('calls', 0)},{cov.get('predicates_covered', 0)},{cov.get('rules_nonzero', 0)}\n"
            )
    with open(out / "top_rules.txt", "w", encoding="utf-8") as fh:
        for setting, preds in sorted(top_rules.items()):
            fh.write(f"== {setting}\n")
            for pred, rl in preds.items():
                fh.write(f"-- {pred}\n")
                for r in rl:
                    fh.write(f"  g={r['coefficient']:+.4f}  {r['rule']}\n")
    return out / "report.json"
