"""driftguard: conformal misprediction detection for deployed models.

Calibrate once on held-out labelled data, then flag individual test
samples whose model output does not conform to the calibration evidence
near them in feature space.  See :class:`DriftDetector` for the estimator
API and :mod:`driftguard.cli` for the command-line loop.
"""
from .assessment import (
    CoverageReport,
    DriftMetrics,
    coverage_check,
    drift_metrics,
    grid_search,
    label_mispredictions,
)
from .calibration import (
    CalibrationStore,
    WeightedSubset,
    adjusted_scores,
    build_store,
    compute_weights,
    load_store,
    save_store,
    select_subset,
)
from .config import DetectorConfig, load_config
from .conformal import (
    DriftAssessment,
    ExpertVerdict,
    assess_sample,
    confidence,
    credibility,
    ensemble_decision,
    expert_verdict,
    label_p_values,
    p_value,
    prediction_set,
)
from .core import (
    LabeledSample,
    ModelOutput,
    NormalizerStats,
    euclidean_distance,
    fit_normalizer,
    split_training_data,
)
from .detector import DriftDetector
from .errors import ConfigurationError, DriftGuardError, InputError
from .harness import (
    ReferenceClassifier,
    ReferenceRegressor,
    SyntheticBenchmark,
    TriageBatch,
    generate_benchmark,
    incremental_update,
    model_outputs,
    reference_regressor_predict,
    run_demo,
    train_reference_classifier,
    triage,
)
from .nonconformity import (
    FunctionId,
    aps_score,
    lac_score,
    raps_score,
    residual_score,
    topk_score,
)
from .regression import (
    approximate_target,
    assign_cluster_label,
    gap_select_k,
    kmeans,
    regression_assess,
)

__version__ = "0.1.0"

__all__ = [
    "CalibrationStore",
    "ConfigurationError",
    "CoverageReport",
    "DetectorConfig",
    "DriftAssessment",
    "DriftDetector",
    "DriftGuardError",
    "DriftMetrics",
    "ExpertVerdict",
    "FunctionId",
    "InputError",
    "LabeledSample",
    "ModelOutput",
    "NormalizerStats",
    "ReferenceClassifier",
    "ReferenceRegressor",
    "SyntheticBenchmark",
    "TriageBatch",
    "WeightedSubset",
    "adjusted_scores",
    "approximate_target",
    "aps_score",
    "assess_sample",
    "assign_cluster_label",
    "build_store",
    "compute_weights",
    "confidence",
    "coverage_check",
    "credibility",
    "drift_metrics",
    "ensemble_decision",
    "euclidean_distance",
    "expert_verdict",
    "fit_normalizer",
    "gap_select_k",
    "generate_benchmark",
    "grid_search",
    "incremental_update",
    "kmeans",
    "label_mispredictions",
    "label_p_values",
    "lac_score",
    "load_config",
    "load_store",
    "model_outputs",
    "p_value",
    "prediction_set",
    "raps_score",
    "reference_regressor_predict",
    "regression_assess",
    "residual_score",
    "run_demo",
    "save_store",
    "select_subset",
    "split_training_data",
    "topk_score",
    "train_reference_classifier",
    "triage",
]
