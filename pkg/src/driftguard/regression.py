"""Regression support: cluster labels and residual-based assessment.

Regression has no classes to condition the p-values on, so calibration
features are clustered (k-means, cluster count picked by the gap
statistic at store-build time) and cluster membership plays the role of
the label.  The test sample's nonconformity is its residual against a
target approximated from its nearest calibration neighbours.
"""
from __future__ import annotations

import warnings

import numpy as np

from .calibration import CalibrationStore, compute_weights, select_subset
from .clustering import GapResult, KMeansResult, gap_select_k, kmeans  # noqa: F401
from .config import DetectorConfig
from .conformal import (
    DriftAssessment,
    confidence,
    credibility,
    ensemble_decision,
    expert_verdict,
    label_p_values,
    prediction_set,
)
from .core import TASK_REGRESSION, ModelOutput, distances_to
from .errors import InputError
from .nonconformity import residual_score


def _check_regression_store(store: CalibrationStore) -> None:
    if store.task != TASK_REGRESSION:
        raise InputError("this operation needs a regression store")


def _normalized(store: CalibrationStore, test_features: np.ndarray) -> np.ndarray:
    z = store.normalizer.transform(np.asarray(test_features, dtype=float))
    if z.ndim != 1 or z.size != store.dim:
        raise InputError(f"test features must be 1-D with {store.dim} entries")
    return z


def assign_cluster_label(store: CalibrationStore, test_features: np.ndarray) -> int:
    """Cluster label of the calibration sample nearest the test sample.

    Deliberately the nearest sample's label rather than the nearest
    centroid: ragged cluster shapes keep their boundaries.
    """
    _check_regression_store(store)
    d = distances_to(store.features, _normalized(store, test_features))
    return int(store.labels[int(np.argmin(d))])


def approximate_target(
    store: CalibrationStore, test_features: np.ndarray, k: int | None = None
) -> float:
    """Mean target of the ``k`` nearest calibration samples (``knn_k``
    by default, clamped to the store size)."""
    _check_regression_store(store)
    k = store.config.knn_k if k is None else k
    if k < 1:
        raise InputError(f"k must be >= 1, got {k}")
    if k > store.n:
        warnings.warn(
            f"k={k} exceeds the {store.n} calibration samples; using all of them",
            stacklevel=2,
        )
        k = store.n
    d = distances_to(store.features, _normalized(store, test_features))
    nearest = np.lexsort((np.arange(store.n), d))[:k]
    return float(store.targets[nearest].mean())


def regression_assess(
    store: CalibrationStore,
    test_features: np.ndarray,
    output: ModelOutput,
    config: DetectorConfig | None = None,
    sample_id: str = "",
) -> DriftAssessment:
    """Assess one regression sample.

    The test score is the residual between the model's prediction and the
    kNN-approximated target.  It does not depend on the hypothesized
    cluster label, so labels only influence which calibration scores each
    p-value counts against.
    """
    _check_regression_store(store)
    cfg = (config or store.config).validate()
    if output.pred is None:
        raise InputError("regression assessment needs a numeric prediction")
    approx = approximate_target(store, test_features, cfg.knn_k)
    residual = residual_score(output.pred, approx)
    test_scores = {label: residual for label in range(store.label_count)}
    subset = select_subset(store, test_features, cfg.subset_fraction, cfg.small_threshold)
    subset = compute_weights(subset, cfg.tau)
    assigned = assign_cluster_label(store, test_features)
    verdicts = []
    for fid in store.functions:
        pvals = label_p_values(store, subset, fid, test_scores=test_scores)
        pset = prediction_set(pvals, cfg.epsilon)
        verdicts.append(
            expert_verdict(
                fid,
                credibility(pvals, assigned),
                confidence(len(pset), cfg.gaussian_c),
                len(pset),
                cfg.epsilon,
            )
        )
    verdicts = tuple(verdicts)
    return DriftAssessment(id=sample_id, verdicts=verdicts, drifting=ensemble_decision(verdicts))
