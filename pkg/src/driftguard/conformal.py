"""Conformal p-values, expert verdicts and the ensemble decision.

The p-value of a hypothesized label counts how many weighted calibration
scores with that label are at least as strange as the test score, with
add-one smoothing on both sides of the ratio.  Each nonconformity function
acts as one expert; a sample is declared drifting when at least half the
experts reject it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .calibration import (
    CalibrationStore,
    WeightedSubset,
    adjusted_scores,
    compute_weights,
    select_subset,
)
from .config import DetectorConfig
from .core import TASK_CLASSIFICATION, ModelOutput
from .errors import ConfigurationError, InputError
from .nonconformity import FunctionId, classification_score


@dataclass(frozen=True)
class ExpertVerdict:
    """One nonconformity function's view of one test sample."""

    function: FunctionId
    credibility: float  # p-value of the model's own prediction
    confidence: float  # Gaussian map of the prediction-set size
    set_size: int
    accept: bool


@dataclass(frozen=True)
class DriftAssessment:
    """Ensemble outcome for one test sample."""

    id: str
    verdicts: tuple[ExpertVerdict, ...]
    drifting: bool

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "drifting": self.drifting,
            "verdicts": [
                {
                    "function": str(v.function),
                    "credibility": v.credibility,
                    "confidence": v.confidence,
                    "set_size": v.set_size,
                    "accept": v.accept,
                }
                for v in self.verdicts
            ],
        }

    @classmethod
    def from_record(cls, record: dict) -> "DriftAssessment":
        try:
            verdicts = tuple(
                ExpertVerdict(
                    function=FunctionId(v["function"]),
                    credibility=float(v["credibility"]),
                    confidence=float(v["confidence"]),
                    set_size=int(v["set_size"]),
                    accept=bool(v["accept"]),
                )
                for v in record["verdicts"]
            )
            return cls(id=str(record["id"]), verdicts=verdicts, drifting=bool(record["drifting"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"malformed assessment record: {exc}") from exc

    @property
    def min_credibility(self) -> float:
        return min(v.credibility for v in self.verdicts)


def p_value(
    labels: np.ndarray,
    scores: np.ndarray,
    hypothesized_label: int,
    test_score: float,
) -> float:
    """Smoothed conformal p-value of ``hypothesized_label``.

    ``(labels, scores)`` are the weighted calibration pairs; only pairs
    whose label matches the hypothesis count.  With ``m`` matching pairs
    of which ``g`` score at least ``test_score``, the p-value is
    ``(g + 1) / (m + 1)``; an unseen label therefore gets the floor
    ``1 / (n + 1)`` over the whole subset.
    """
    labels = np.asarray(labels)
    scores = np.asarray(scores, dtype=float)
    if labels.shape != scores.shape or labels.ndim != 1:
        raise InputError("labels and scores must be 1-D arrays of equal length")
    if labels.size == 0:
        raise InputError("cannot compute a p-value against an empty subset")
    mask = labels == hypothesized_label
    m = int(np.count_nonzero(mask))
    if m == 0:
        return 1.0 / (labels.size + 1)
    g = int(np.count_nonzero(scores[mask] >= test_score))
    return (g + 1) / (m + 1)


def label_p_values(
    store: CalibrationStore,
    subset: WeightedSubset,
    function: FunctionId,
    output: ModelOutput | None = None,
    test_scores: dict[int, float] | None = None,
) -> dict[int, float]:
    """P-values for every label value the store knows about.

    For classification the test score is recomputed per hypothesized
    label from ``output.proba``.  Callers with label-independent test
    scores (the regression path) pass them via ``test_scores`` instead.
    """
    cfg = store.config
    labels_arr, scores_arr = adjusted_scores(store, subset, function)
    out: dict[int, float] = {}
    for label in range(store.label_count):
        if test_scores is not None:
            t = test_scores[label]
        else:
            if output is None or output.proba is None:
                raise InputError("classification p-values need a probability output")
            if output.proba.size != store.label_count:
                raise InputError(
                    f"proba has {output.proba.size} entries, store has {store.label_count} labels"
                )
            t = classification_score(
                function, output.proba, label,
                raps_lambda=cfg.raps_lambda, raps_k_reg=cfg.raps_k_reg,
            )
        out[label] = p_value(labels_arr, scores_arr, label, t)
    return out


def prediction_set(p_values: dict[int, float], epsilon: float) -> set[int]:
    """Labels whose p-value exceeds the significance level."""
    if not 0.0 < epsilon < 1.0:
        raise InputError(f"epsilon must be in (0, 1), got {epsilon}")
    return {label for label, p in p_values.items() if p > epsilon}


def credibility(p_values: dict[int, float], predicted_label: int) -> float:
    """P-value of the label the model actually predicted."""
    if predicted_label not in p_values:
        raise InputError(f"predicted label {predicted_label} has no p-value")
    return p_values[predicted_label]


def confidence(set_size: int, c: float = 3.0) -> float:
    """Gaussian map of prediction-set size to confidence.

    Peaks at 1.0 for a singleton set and decays symmetrically as sets
    grow (or shrink to empty): ``exp(-(size - 1)**2 / (2 c**2))``.
    """
    if c <= 0:
        raise ConfigurationError(f"c must be positive, got {c}")
    return float(math.exp(-((set_size - 1) ** 2) / (2.0 * c * c)))


def expert_verdict(
    function: FunctionId,
    credibility_value: float,
    confidence_value: float,
    set_size: int,
    epsilon: float,
) -> ExpertVerdict:
    """The expert rejects only when credibility and confidence both fall
    below the significance threshold ``1 - epsilon``."""
    threshold = 1.0 - epsilon
    reject = credibility_value < threshold and confidence_value < threshold
    return ExpertVerdict(
        function=function,
        credibility=credibility_value,
        confidence=confidence_value,
        set_size=set_size,
        accept=not reject,
    )


def ensemble_decision(verdicts: tuple[ExpertVerdict, ...]) -> bool:
    """Drifting when at least half the experts reject (ties reject)."""
    if len(verdicts) == 0:
        raise ConfigurationError("ensemble needs at least one verdict")
    rejections = sum(1 for v in verdicts if not v.accept)
    return rejections >= math.ceil(len(verdicts) / 2)


def assess_sample(
    store: CalibrationStore,
    test_features: np.ndarray,
    output: ModelOutput,
    config: DetectorConfig | None = None,
    sample_id: str = "",
) -> DriftAssessment:
    """Run every expert in the store's ensemble on one classification
    sample and combine them into a drift decision.

    ``config`` overrides the store's own configuration (same seed rules
    apply); pass ``None`` to use the store as calibrated.
    """
    if store.task != TASK_CLASSIFICATION:
        raise InputError("assess_sample handles classification stores; see regression_assess")
    cfg = (config or store.config).validate()
    if output.proba is None:
        raise InputError("classification assessment needs a probability output")
    subset = select_subset(store, test_features, cfg.subset_fraction, cfg.small_threshold)
    subset = compute_weights(subset, cfg.tau)
    predicted = output.predicted_label
    verdicts = []
    for fid in store.functions:
        pvals = label_p_values(store, subset, fid, output=output)
        pset = prediction_set(pvals, cfg.epsilon)
        verdicts.append(
            expert_verdict(
                fid,
                credibility(pvals, predicted),
                confidence(len(pset), cfg.gaussian_c),
                len(pset),
                cfg.epsilon,
            )
        )
    verdicts = tuple(verdicts)
    return DriftAssessment(id=sample_id, verdicts=verdicts, drifting=ensemble_decision(verdicts))
