"""Scikit-learn style facade over the detection pipeline.

``DriftDetector.fit`` consumes calibration features, ground truth and the
deployed model's outputs; ``predict`` returns a boolean drift flag per
test sample.  Constructor arguments mirror :class:`DetectorConfig` one to
one, so ``get_params`` / ``set_params`` and estimator cloning work as
usual.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .assessment import CoverageReport, coverage_check
from .calibration import build_store
from .config import DetectorConfig
from .conformal import DriftAssessment, assess_sample
from .core import TASK_CLASSIFICATION, TASK_REGRESSION, LabeledSample, ModelOutput
from .errors import InputError
from .regression import regression_assess


class DriftDetector(BaseEstimator):
    """Conformal misprediction detector.

    Parameters are documented on :class:`DetectorConfig`; ``task`` selects
    between ``"classification"`` (fit needs ``proba``) and
    ``"regression"`` (fit needs ``pred``).

    Examples
    --------
    >>> det = DriftDetector().fit(X_cal, y_cal, proba=proba_cal)
    >>> flags = det.predict(X_new, proba=proba_new)
    """

    def __init__(
        self,
        task: str = TASK_CLASSIFICATION,
        epsilon: float = 0.1,
        tau: float = 500.0,
        subset_fraction: float = 0.5,
        small_threshold: int = 200,
        gaussian_c: float = 3.0,
        raps_lambda: float = 0.01,
        raps_k_reg: int = 1,
        knn_k: int = 3,
        k_range: tuple[int, int] = (2, 20),
        gap_B: int = 10,
        functions: tuple[str, ...] | None = None,
        seed: int = 0,
        normalize: bool = True,
    ):
        self.task = task
        self.epsilon = epsilon
        self.tau = tau
        self.subset_fraction = subset_fraction
        self.small_threshold = small_threshold
        self.gaussian_c = gaussian_c
        self.raps_lambda = raps_lambda
        self.raps_k_reg = raps_k_reg
        self.knn_k = knn_k
        self.k_range = k_range
        self.gap_B = gap_B
        self.functions = functions
        self.seed = seed
        self.normalize = normalize

    def _config(self) -> DetectorConfig:
        return DetectorConfig(
            epsilon=self.epsilon,
            tau=self.tau,
            subset_fraction=self.subset_fraction,
            small_threshold=self.small_threshold,
            gaussian_c=self.gaussian_c,
            raps_lambda=self.raps_lambda,
            raps_k_reg=self.raps_k_reg,
            knn_k=self.knn_k,
            k_range=tuple(self.k_range),
            gap_B=self.gap_B,
            functions=tuple(self.functions) if self.functions is not None else None,
            seed=self.seed,
            normalize=self.normalize,
        ).validate()

    def _check_task(self) -> str:
        if self.task not in (TASK_CLASSIFICATION, TASK_REGRESSION):
            raise InputError(
                f"task must be {TASK_CLASSIFICATION!r} or {TASK_REGRESSION!r}, got {self.task!r}"
            )
        return self.task

    def _outputs(self, n: int, proba, pred) -> list[ModelOutput]:
        if self.task == TASK_CLASSIFICATION:
            if proba is None:
                raise InputError("classification needs proba=(n, L) model probabilities")
            proba = check_array(proba, dtype=float)
            if proba.shape[0] != n:
                raise InputError(f"proba has {proba.shape[0]} rows, expected {n}")
            return [ModelOutput(proba=row) for row in proba]
        if pred is None:
            raise InputError("regression needs pred=(n,) model predictions")
        pred = np.asarray(pred, dtype=float)
        if pred.ndim != 1 or pred.shape[0] != n:
            raise InputError(f"pred must be 1-D with {n} entries")
        return [ModelOutput(pred=float(p)) for p in pred]

    def fit(self, X, y, proba=None, pred=None, ids=None) -> "DriftDetector":
        """Build the calibration store.

        Parameters
        ----------
        X : (n, d) calibration features
        y : (n,) ground truth: integer labels or float targets
        proba : (n, L) model probabilities (classification)
        pred : (n,) model predictions (regression)
        ids : optional sample ids, defaults to stringified indices
        """
        task = self._check_task()
        config = self._config()
        X = check_array(X, dtype=float)
        y = np.asarray(y)
        if y.ndim != 1 or y.shape[0] != X.shape[0]:
            raise InputError("y must be 1-D and aligned with X")
        if ids is None:
            ids = [str(i) for i in range(X.shape[0])]
        elif len(ids) != X.shape[0]:
            raise InputError("ids must align with X")
        if task == TASK_CLASSIFICATION:
            samples = [
                LabeledSample(ids[i], X[i], label=int(y[i])) for i in range(X.shape[0])
            ]
        else:
            samples = [
                LabeledSample(ids[i], X[i], target=float(y[i])) for i in range(X.shape[0])
            ]
        outputs = self._outputs(X.shape[0], proba, pred)
        self.store_ = build_store(samples, outputs, config=config)
        self.n_features_in_ = X.shape[1]
        return self

    def assess(self, X, proba=None, pred=None, ids=None) -> list[DriftAssessment]:
        """Full per-sample assessments (verdicts plus ensemble decision)."""
        check_is_fitted(self, "store_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise InputError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        if ids is None:
            ids = [str(i) for i in range(X.shape[0])]
        outputs = self._outputs(X.shape[0], proba, pred)
        assess = assess_sample if self.task == TASK_CLASSIFICATION else regression_assess
        return [
            assess(self.store_, X[i], outputs[i], sample_id=ids[i])
            for i in range(X.shape[0])
        ]

    def predict(self, X, proba=None, pred=None) -> np.ndarray:
        """Boolean array: True where the ensemble calls the sample a
        likely misprediction."""
        return np.array([a.drifting for a in self.assess(X, proba=proba, pred=pred)], dtype=bool)

    def score_samples(self, X, proba=None, pred=None) -> np.ndarray:
        """Minimum credibility across the ensemble; lower means stranger."""
        return np.array(
            [a.min_credibility for a in self.assess(X, proba=proba, pred=pred)], dtype=float
        )

    def coverage_report(self, repeats: int = 3) -> CoverageReport:
        """Run the coverage self-check on the fitted store's own data."""
        check_is_fitted(self, "store_")
        return coverage_check(
            config=self.store_.config, repeats=repeats, seed=self.seed, store=self.store_
        )
