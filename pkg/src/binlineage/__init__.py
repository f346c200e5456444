"""Lineage reconstruction for malware families from feature similarity and
noisy/obfuscated time evidence."""

from .domain import (
    BinaryRecord,
    BinLineageError,
    Dataset,
    LineageGraph,
    Stamp,
    TimeTick,
    Violation,
    export_dot,
    load_dataset,
    load_lineage,
    save_dataset,
    save_lineage,
    validate_dataset,
    validate_lineage,
)
from .estimator import LineageReconstructor
from .evaluation import (
    Metrics,
    SweepReport,
    greedy_baseline,
    obfuscation_sweep,
    score_lineage,
    time_error,
)
from .lineage import (
    AnnealSchedule,
    InferConfig,
    LineageModelParams,
    LineageResult,
    TimesAssignment,
    brute_force_lineage,
    candidate_parents,
    infer_lineage,
    joint_log_score,
    lineage_log_score,
    max_lineage_given_times,
    max_times_given_skeleton,
    parent_set_log_prob,
)
from .similarity import SimilarityMatrix, extract_ngrams, jaccard, similarity_matrix
from .synthgen import GenConfig, apply_obfuscation, generate_family
from .timemodel import (
    LabeledTimeExample,
    TimeModelParams,
    TimePosterior,
    exact_posterior,
    learn_params,
    mh_posterior,
    sample_time,
    seen_log_likelihood,
    stamp_log_likelihood,
    total_variation,
)

__version__ = "0.1.0"

__all__ = [
    "AnnealSchedule",
    "BinaryRecord",
    "BinLineageError",
    "Dataset",
    "GenConfig",
    "InferConfig",
    "LabeledTimeExample",
    "LineageGraph",
    "LineageModelParams",
    "LineageReconstructor",
    "LineageResult",
    "Metrics",
    "SimilarityMatrix",
    "Stamp",
    "SweepReport",
    "TimeModelParams",
    "TimePosterior",
    "TimeTick",
    "TimesAssignment",
    "Violation",
    "apply_obfuscation",
    "brute_force_lineage",
    "candidate_parents",
    "exact_posterior",
    "export_dot",
    "extract_ngrams",
    "generate_family",
    "greedy_baseline",
    "infer_lineage",
    "jaccard",
    "joint_log_score",
    "learn_params",
    "lineage_log_score",
    "load_dataset",
    "load_lineage",
    "max_lineage_given_times",
    "max_times_given_skeleton",
    "mh_posterior",
    "obfuscation_sweep",
    "parent_set_log_prob",
    "sample_time",
    "save_dataset",
    "save_lineage",
    "score_lineage",
    "seen_log_likelihood",
    "similarity_matrix",
    "stamp_log_likelihood",
    "time_error",
    "total_variation",
    "validate_dataset",
    "validate_lineage",
]
