"""Pipeline configuration: an INI file with sections, every field defaulted.

``kgexplain print-config`` emits the defaults; CLI flags override the
seed, scope, rule mode, predicate restriction, and output directory.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field
from pathlib import Path

from .embeddings import KINDS, TrainConfig
from .errors import ConfigError
from .rules import MODE_BOUNDED, MODE_UNBOUNDED, MiningConfig

SCOPES = ("global", "local", "instance")


@dataclass
class PipelineConfig:
    train_path: str = "data/train.tsv"
    valid_path: str = "data/valid.tsv"
    test_path: str = "data/test.tsv"

    model_kind: str = "transe"
    dim: int = 16
    norm: int = 2
    learning_rate: float = 0.05
    epochs: int = 200
    batch_size: int = 32
    margin: float = 1.0
    negatives_per_positive: int = 2
    weight_decay: float = 1e-4

    mode: str = MODE_UNBOUNDED
    max_atoms: int = 3
    min_correct: int = 2
    min_precision: float = 0.10
    max_candidates: int = 0  # 0 = exhaustive

    scope: str = "global"
    k_min: int = 2
    k_max: int = 6
    test_fraction: float = 0.3
    surrogate_reg: float = 1.0
    min_true_facts: int = 5
    max_instances_per_predicate: int = 10
    compute_mrr: bool = True

    seed: int = 42
    out: str = "out"
    predicate: str | None = None  # restrict explain/mine to one predicate label

    def validate(self) -> None:
        problems: list[str] = []
        if self.model_kind not in KINDS:
            problems.append(f"model.kind must be one of {KINDS}, got {self.model_kind!r}")
        if self.scope not in SCOPES:
            problems.append(f"explain.scope must be one of {SCOPES}, got {self.scope!r}")
        if self.mode not in (MODE_UNBOUNDED, MODE_BOUNDED):
            problems.append(f"mining.mode must be unbounded or bounded, got {self.mode!r}")
        if not (0 < self.test_fraction < 1):
            problems.append("explain.test_fraction must be in (0, 1)")
        if not (2 <= self.k_min <= self.k_max):
            problems.append("explain.k_min/k_max must satisfy 2 <= k_min <= k_max")
        if self.min_true_facts < 2:
            problems.append("explain.min_true_facts must be >= 2")
        if self.max_instances_per_predicate < 1:
            problems.append("explain.max_instances_per_predicate must be >= 1")
        if self.surrogate_reg < 0:
            problems.append("explain.surrogate_reg must be >= 0")
        try:
            self.train_config()
        except ValueError as exc:
            problems.append(f"model section: {exc}")
        try:
            self.mining_config()
        except ValueError as exc:
            problems.append(f"mining section: {exc}")
        if problems:
            raise ConfigError("invalid configuration:\n  - " + "\n  - ".join(problems))

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            seed=self.seed,
            learning_rate=self.learning_rate,
            epochs=self.epochs,
            batch_size=self.batch_size,
            margin=self.margin,
            negatives_per_positive=self.negatives_per_positive,
            dim=self.dim,
            norm=self.norm,
            weight_decay=self.weight_decay,
        )

    def mining_config(self) -> MiningConfig:
        return MiningConfig(
            mode=self.mode,
            max_atoms=self.max_atoms,
            min_correct=self.min_correct,
            min_precision=self.min_precision,
            max_candidates=self.max_candidates or None,
        )


_SECTIONS = {
    "data": {"train": ("train_path", str), "valid": ("valid_path", str), "test": ("test_path", str)},
    "model": {
        "kind": ("model_kind", str), "dim": ("dim", int), "norm": ("norm", int),
        "learning_rate": ("learning_rate", float), "epochs": ("epochs", int),
        "batch_size": ("batch_size", int), "margin": ("margin", float),
        "negatives_per_positive": ("negatives_per_positive", int),
        "weight_decay": ("weight_decay", float),
    },
    "mining": {
        "mode": ("mode", str), "max_atoms": ("max_atoms", int),
        "min_correct": ("min_correct", int), "min_precision": ("min_precision", float),
        "max_candidates": ("max_candidates", int),
    },
    "explain": {
        "scope": ("scope", str), "k_min": ("k_min", int), "k_max": ("k_max", int),
        "test_fraction": ("test_fraction", float), "surrogate_reg": ("surrogate_reg", float),
        "min_true_facts": ("min_true_facts", int),
        "max_instances_per_predicate": ("max_instances_per_predicate", int),
        "compute_mrr": ("compute_mrr", bool),
        "predicate": ("predicate", str),
    },
    "run": {"seed": ("seed", int), "out": ("out", str)},
}


def load_config(path) -> PipelineConfig:
    parser = configparser.ConfigParser()
    text = Path(path).read_text(encoding="utf-8")
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc

    cfg = PipelineConfig()
    problems: list[str] = []
    for section in parser.sections():
        if section not in _SECTIONS:
            problems.append(f"unknown section [{section}]")
            continue
        fields = _SECTIONS[section]
        for key, raw in parser.items(section):
            if key not in fields:
                problems.append(f"unknown key {key!r} in section [{section}]")
                continue
            attr, typ = fields[key]
            try:
                if typ is bool:
                    value = raw.strip().lower() in ("1", "true", "yes", "on")
                else:
                    value = typ(raw)
            except ValueError:
                problems.append(f"[{section}] {key}: cannot parse {raw!r} as {typ.__name__}")
                continue
            setattr(cfg, attr, value)
    if problems:
        raise ConfigError("invalid configuration:\n  - " + "\n  - ".join(problems))
    cfg.validate()
    return cfg


def default_config_text() -> str:
    cfg = PipelineConfig()
    out = io.StringIO()
    rev: dict[str, dict[str, str]] = {}
    for section, fields in _SECTIONS.items():
        rev[section] = {}
        for key, (attr, _typ) in fields.items():
            value = getattr(cfg, attr)
            if value is None:
                continue
            rev[section][key] = str(value)
    for section, items in rev.items():
        out.write(f"[{section}]\n")
        for key, value in items.items():
            out.write(f"{key} = {value}\n")
        out.write("\n")
    return out.getvalue()
