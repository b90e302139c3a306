"""kgexplain: rule-based surrogate explanations for KG embedding link predictors."""

from .errors import (
    CalibrationError,
    ConfigError,
    DataError,
    ExplanationError,
    KgExplainError,
    NumericError,
    ParseError,
    TrainingDiverged,
)
from .kg import Fact, KnowledgeGraph, ingest_triples
from .embeddings import (
    COMPLEX,
    HOLE,
    KINDS,
    TRANSE,
    EmbeddingModel,
    TrainConfig,
    gradient,
    init_model,
    load_model,
    save_model,
    train,
)
from .rules import (
    Atom,
    Const,
    HornRule,
    MiningConfig,
    RuleStats,
    Var,
    apply_substitution,
    canonical_key,
    canonicalize,
    format_rule,
    mine,
    parse_rule,
    predictions,
    refine,
    rule_fires_at,
    rule_stats,
)
from .explainer import (
    AnnotatedContext,
    AnnotatedFact,
    ExplainConfig,
    Explanation,
    SurrogateModel,
    augment_graph,
    binarize,
    build_explanation,
    calibrate_threshold,
    encode_features,
    encode_pair,
    fit_surrogate,
    surrogate_score,
)
from .scoping import (
    Context,
    ContextFact,
    ScopeTag,
    SelectKResult,
    context_to_csv,
    global_context,
    instance_context,
    local_contexts,
    select_k,
)
from .evaluation import FidelityRecord, mrr, roc_auc, split_context, weighted_fidelity

__version__ = "0.1.0"
