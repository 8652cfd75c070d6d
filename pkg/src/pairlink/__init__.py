"""Fuzzy entity matching toolkit.

Scores candidate entity pairs with character-level similarity metrics, a
distance-feature tree ensemble, or zero-shot LLM confidence, then ranks
and evaluates the results. Scorers follow estimator conventions so they
compose with the usual pipeline tooling.
"""

from .base import PairScorer, as_pair_records, labels_of
from .cache import CacheEntry, ScoreCache, cache_key
from .ensemble import (
    FEATURE_SCHEMA,
    EnsembleMatcher,
    EnsembleModel,
    ModelFormatError,
    PairFeaturizer,
    TrainConfig,
    TrainingDataError,
    extract_features,
    model_from_json,
    model_to_json,
    train,
)
from .evaluation import (
    EvalReport,
    InputError,
    PrPoint,
    UndefinedMetricError,
    average_precision,
    build_report,
    precision_at_full_recall,
    precision_recall_curve,
)
from .llm import (
    ENRICHED_TEMPLATE,
    PLAIN_TEMPLATE,
    ChatProvider,
    ChatRequest,
    LlmConfig,
    LlmError,
    LlmScorer,
    MockProvider,
    OpenAiChatProvider,
    OutOfRangeReply,
    PromptTemplate,
    ProviderError,
    ReplayProvider,
    ScoreBatchResult,
    ScoreError,
    TemplateError,
    TransportError,
    UnparsableReply,
    parse_confidence,
    render_messages,
    render_prompt,
    save_replay_fixture,
    score_batch,
    score_pair,
)
from .metrics import (
    METRIC_FUNCTIONS,
    MetricScorer,
    NormalizationPolicy,
    apply_normalization,
    cosine_letter_freq,
    jaccard_bigram,
    jaccard_char,
    jaccard_ngram,
    jaro,
    jaro_winkler,
    lcs_overlap_sim,
    levenshtein,
    levenshtein_sim,
    longest_common_substring,
    metric_names,
)
from .pipeline import FLOOR_TO_ZERO, KEEP_STAGE1, PipelineConfig, PipelineResult, run_pipeline, stage1_rank
from .types import PairRecord, ScoredPair, rank_by_score

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "PairRecord",
    "ScoredPair",
    "rank_by_score",
    "PairScorer",
    "as_pair_records",
    "labels_of",
    "levenshtein",
    "levenshtein_sim",
    "jaro",
    "jaro_winkler",
    "jaccard_char",
    "jaccard_ngram",
    "jaccard_bigram",
    "cosine_letter_freq",
    "longest_common_substring",
    "lcs_overlap_sim",
    "NormalizationPolicy",
    "apply_normalization",
    "METRIC_FUNCTIONS",
    "metric_names",
    "MetricScorer",
    "PromptTemplate",
    "PLAIN_TEMPLATE",
    "ENRICHED_TEMPLATE",
    "render_prompt",
    "render_messages",
    "LlmConfig",
    "ChatRequest",
    "ChatProvider",
    "MockProvider",
    "ReplayProvider",
    "OpenAiChatProvider",
    "save_replay_fixture",
    "parse_confidence",
    "score_pair",
    "score_batch",
    "ScoreError",
    "ScoreBatchResult",
    "LlmScorer",
    "LlmError",
    "ProviderError",
    "TransportError",
    "UnparsableReply",
    "OutOfRangeReply",
    "TemplateError",
    "cache_key",
    "CacheEntry",
    "ScoreCache",
    "FEATURE_SCHEMA",
    "extract_features",
    "PairFeaturizer",
    "TrainConfig",
    "EnsembleModel",
    "train",
    "model_to_json",
    "model_from_json",
    "EnsembleMatcher",
    "TrainingDataError",
    "ModelFormatError",
    "average_precision",
    "precision_recall_curve",
    "precision_at_full_recall",
    "build_report",
    "EvalReport",
    "PrPoint",
    "InputError",
    "UndefinedMetricError",
    "PipelineConfig",
    "PipelineResult",
    "run_pipeline",
    "stage1_rank",
    "KEEP_STAGE1",
    "FLOOR_TO_ZERO",
]
