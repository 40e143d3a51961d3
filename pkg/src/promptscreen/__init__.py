"""promptscreen: prompt-strategy evaluation for binary transcript classification.

Builds a balanced in-sample design set, generates a structured prompt
catalog, executes every prompt-transcript pair against an LLM backend,
scores predictive and behavioral metrics (bias, robustness, consistency),
ranks prompts F1-first under threshold gates, and validates the chosen
prompt out-of-sample, with every run reproducible from its manifest.
"""

from ._version import __version__
from .catalog import (
    PromptCatalog,
    PromptVariant,
    StrategyFamily,
    generate_catalog,
    load_catalog,
    render_prompt,
    validate_catalog,
    write_catalog,
)
from .dataset import (
    CorpusSplit,
    GoldLabel,
    LabeledCorpus,
    LabeledRecord,
    PartitionSet,
    SamplePlan,
    Transcript,
    build_in_sample,
    lexical_diversity,
    load_corpus,
    partition_k,
)
from .inference import (
    BackendConfig,
    InferenceRecord,
    MockProfile,
    Prediction,
    execute_batch,
    mock_complete,
    parse_label,
)
from .metrics import (
    ConfusionCounts,
    ConsistencyReport,
    MetricSet,
    RobustnessReport,
    bias,
    cohen_kappa,
    confusion,
    consistency,
    f1_score,
    metric_set,
    robustness,
)
from .pipeline import (
    GeneralizationReport,
    PipelineConfig,
    RunManifest,
    emit_reports,
    run_pipeline,
    run_stage,
    validate_oos,
)
from .selection import (
    RankedPrompt,
    Recommendation,
    SelectionCriteria,
    rank_prompts,
    recommend,
)
from .synthetic import bundled_corpus_path, synthesize_corpus

__all__ = [
    "__version__",
    "BackendConfig", "ConfusionCounts", "ConsistencyReport", "CorpusSplit",
    "GeneralizationReport", "GoldLabel", "InferenceRecord", "LabeledCorpus",
    "LabeledRecord", "MetricSet", "MockProfile", "PartitionSet",
    "PipelineConfig", "Prediction", "PromptCatalog", "PromptVariant",
    "RankedPrompt", "Recommendation", "RobustnessReport", "RunManifest",
    "SamplePlan", "SelectionCriteria", "StrategyFamily", "Transcript",
    "bias", "build_in_sample", "bundled_corpus_path", "cohen_kappa",
    "confusion", "consistency", "emit_reports", "execute_batch", "f1_score",
    "generate_catalog", "lexical_diversity", "load_catalog", "load_corpus",
    "metric_set", "mock_complete", "parse_label", "partition_k",
    "rank_prompts", "recommend", "render_prompt", "robustness",
    "run_pipeline", "run_stage", "synthesize_corpus", "validate_catalog",
    "validate_oos", "write_catalog",
]
