"""Self-checks and evaluation: coverage, parameter search, drift metrics.

These operate on whole datasets rather than single samples: the coverage
check validates a calibration setup before deployment, the grid search
tunes detector parameters against internally simulated mispredictions,
and the metric helpers turn detector decisions plus ground truth into
precision/recall style numbers.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .calibration import CalibrationStore, build_store
from .config import DetectorConfig
from .conformal import assess_sample, p_value, prediction_set
from .core import (
    TASK_CLASSIFICATION,
    LabeledSample,
    ModelOutput,
    round_half_up,
)
from .errors import ConfigurationError, InputError
from .nonconformity import FunctionId, classification_score, residual_score
from .regression import regression_assess

VALIDATION_FRACTION = 0.2
ALERT_BOUND = 0.1

# Config fields the grid search may sweep.
SEARCHABLE = ("epsilon", "tau", "subset_fraction", "gaussian_c")


@dataclass(frozen=True)
class CoverageReport:
    """Outcome of the empirical coverage self-check."""

    coverage: float
    expected: float
    deviation: float
    alert: bool
    epsilon: float
    repeats: int
    per_repeat: tuple[float, ...]
    n: int

    def to_record(self) -> dict:
        return {
            "coverage": self.coverage,
            "expected": self.expected,
            "deviation": self.deviation,
            "alert": self.alert,
            "epsilon": self.epsilon,
            "repeats": self.repeats,
            "per_repeat": list(self.per_repeat),
            "n": self.n,
        }


@dataclass(frozen=True)
class DriftMetrics:
    """Confusion counts of drift decisions against misprediction truth.

    A misprediction flagged as drifting is a true positive.
    """

    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if (self.tp + self.fp) > 0 else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if (self.tp + self.fn) > 0 else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2.0 * p * r / (p + r) if (p + r) > 0 else 0.0

    @property
    def accuracy(self) -> float:
        total = self.tp + self.fp + self.fn + self.tn
        return (self.tp + self.tn) / total if total > 0 else 0.0

    def to_record(self) -> dict:
        return {
            "tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn,
            "precision": self.precision, "recall": self.recall,
            "f1": self.f1, "accuracy": self.accuracy,
        }


def drift_metrics(flagged: Sequence[bool], mispredicted: Sequence[bool]) -> DriftMetrics:
    """Count detector decisions against misprediction ground truth."""
    flagged = np.asarray(flagged, dtype=bool)
    mispredicted = np.asarray(mispredicted, dtype=bool)
    if flagged.shape != mispredicted.shape or flagged.ndim != 1:
        raise InputError("flagged and mispredicted must be 1-D arrays of equal length")
    if flagged.size == 0:
        raise InputError("cannot compute metrics on zero samples")
    return DriftMetrics(
        tp=int(np.count_nonzero(flagged & mispredicted)),
        fp=int(np.count_nonzero(flagged & ~mispredicted)),
        fn=int(np.count_nonzero(~flagged & mispredicted)),
        tn=int(np.count_nonzero(~flagged & ~mispredicted)),
    )


def label_mispredictions(
    kind: str,
    achieved: Sequence[float] | None = None,
    reference: Sequence[float] | None = None,
    predicted: Sequence[int] | None = None,
    true_label: Sequence[int] | None = None,
    threshold: float = 0.2,
) -> np.ndarray:
    """Turn raw outcomes into boolean misprediction labels.

    Kinds
    -----
    ``"optimization"``
        Mispredicted when the achieved value falls more than ``threshold``
        below the reference: ``achieved < (1 - threshold) * reference``.
    ``"cost"``
        Mispredicted when the achieved value deviates from the reference
        by at least ``threshold`` relatively.
    ``"detection"``
        Mispredicted when the predicted label differs from the true one.
    """
    if threshold <= 0:
        raise InputError(f"threshold must be positive, got {threshold}")
    if kind in ("optimization", "cost"):
        if achieved is None or reference is None:
            raise InputError(f"kind {kind!r} needs achieved and reference values")
        a = np.asarray(achieved, dtype=float)
        r = np.asarray(reference, dtype=float)
        if a.shape != r.shape or a.ndim != 1:
            raise InputError("achieved and reference must be 1-D arrays of equal length")
        if np.any(r <= 0):
            raise InputError("reference values must be positive")
        if kind == "optimization":
            return a < (1.0 - threshold) * r
        return np.abs(a - r) / r >= threshold
    if kind == "detection":
        if predicted is None or true_label is None:
            raise InputError("kind 'detection' needs predicted and true labels")
        p = np.asarray(predicted, dtype=int)
        t = np.asarray(true_label, dtype=int)
        if p.shape != t.shape or p.ndim != 1:
            raise InputError("predicted and true labels must be 1-D arrays of equal length")
        return p != t
    raise InputError(f"unknown misprediction kind {kind!r}")


def _internal_splits(n: int, repeats: int, seed: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Seeded (calibration, validation) index pairs, ~80/20 each repeat."""
    if n < 2:
        raise InputError("internal splits need at least two samples")
    rng = np.random.default_rng(seed)
    n_val = min(max(1, round_half_up(VALIDATION_FRACTION * n)), n - 1)
    splits = []
    for _ in range(repeats):
        perm = rng.permutation(n)
        splits.append((np.sort(perm[n_val:]), np.sort(perm[:n_val])))
    return splits


def _coverage_function(task: str) -> FunctionId:
    return FunctionId.APS if task == TASK_CLASSIFICATION else FunctionId.RESIDUAL


def coverage_check(
    samples: Sequence[LabeledSample] | None = None,
    outputs: Sequence[ModelOutput] | None = None,
    config: DetectorConfig | None = None,
    epsilon: float | None = None,
    repeats: int = 3,
    seed: int = 0,
    function: FunctionId | None = None,
    store: CalibrationStore | None = None,
) -> CoverageReport:
    """Estimate empirical coverage of the conformal machinery on held-out
    parts of the calibration data itself.

    Each repeat re-splits the calibration data 80/20 and measures how
    often the true label (assigned cluster label for regression) lands in
    the unweighted prediction set of a validation sample, using the large
    part's stored scores as the reference.  The report raises its alert
    flag when the mean coverage deviates from ``1 - epsilon`` by more
    than 0.1.

    Two deliberate properties:

    * P-values here are unweighted.  Distance weighting is a
      deployment-time locality adjustment relative to a test sample; the
      self-check validates the base conformal guarantee, which is the
      weighting's own large-``tau`` limit.
    * When a prebuilt ``store`` is passed (the CLI path), its stored
      scores are reused verbatim for the internal-calibration side while
      validation scores are recomputed from the model outputs.  A
      tampered artifact — labels permuted against the scores that were
      calibrated for them — therefore fails the check instead of being
      silently re-fitted into consistency.
    """
    if store is None:
        if samples is None or outputs is None:
            raise InputError("coverage_check needs samples and outputs, or a store")
        if len(samples) != len(outputs) or len(samples) == 0:
            raise InputError("samples and outputs must be non-empty and parallel")
        config = (config or DetectorConfig()).validate()
        task = samples[0].task
        fid = _coverage_function(task) if function is None else function
        store = build_store(samples, outputs, config=config, functions=(str(fid),))
    else:
        if samples is not None or outputs is not None:
            raise InputError("pass either samples and outputs or a store, not both")
        config = (config or store.config).validate()
        fid = _coverage_function(store.task) if function is None else function
    if fid not in store.scores:
        raise InputError(f"store has no scores for {fid}")
    if store.n < 10:
        raise ConfigurationError(
            f"coverage check needs at least 10 samples, got {store.n}"
        )
    if repeats < 1:
        raise InputError(f"repeats must be >= 1, got {repeats}")
    eps = config.epsilon if epsilon is None else epsilon
    if not 0.0 < eps < 1.0:
        raise InputError(f"epsilon must be in (0, 1), got {eps}")

    all_scores = store.scores[fid]
    per_repeat = []
    for cal_idx, val_idx in _internal_splits(store.n, repeats, seed):
        cal_labels = store.labels[cal_idx]
        cal_scores = all_scores[cal_idx]
        covered = 0
        for i in val_idx:
            true_label = int(store.labels[i])
            if store.task == TASK_CLASSIFICATION:
                proba = store.probas[i]
                pvals = {
                    label: p_value(
                        cal_labels,
                        cal_scores,
                        label,
                        classification_score(
                            fid, proba, label,
                            raps_lambda=store.config.raps_lambda,
                            raps_k_reg=store.config.raps_k_reg,
                        ),
                    )
                    for label in range(store.label_count)
                }
            else:
                residual = residual_score(store.preds[i], store.targets[i])
                pvals = {
                    label: p_value(cal_labels, cal_scores, label, residual)
                    for label in range(store.label_count)
                }
            covered += true_label in prediction_set(pvals, eps)
        per_repeat.append(covered / len(val_idx))

    coverage = float(np.mean(per_repeat))
    deviation = abs(coverage - (1.0 - eps))
    return CoverageReport(
        coverage=coverage,
        expected=1.0 - eps,
        deviation=deviation,
        alert=deviation > ALERT_BOUND,
        epsilon=eps,
        repeats=repeats,
        per_repeat=tuple(per_repeat),
        n=store.n,
    )


def _internal_mispredictions(
    samples: Sequence[LabeledSample], outputs: Sequence[ModelOutput], threshold: float = 0.2
) -> np.ndarray:
    """Misprediction truth used by the grid search: a wrong argmax label
    for classification, a relative residual of at least ``threshold``
    for regression."""
    if samples[0].task == TASK_CLASSIFICATION:
        return label_mispredictions(
            "detection",
            predicted=[o.predicted_label for o in outputs],
            true_label=[s.label for s in samples],
        )
    residuals = np.array([abs(o.pred - s.target) for s, o in zip(samples, outputs)])
    scale = np.maximum(np.abs([s.target for s in samples]), 1e-12)
    return residuals / scale >= threshold


def grid_search(
    samples: Sequence[LabeledSample],
    outputs: Sequence[ModelOutput],
    grid: dict[str, Sequence],
    base_config: DetectorConfig | None = None,
    repeats: int = 3,
    seed: int = 0,
) -> DetectorConfig:
    """Pick detector parameters by F1 against simulated mispredictions.

    ``grid`` maps a subset of {epsilon, tau, subset_fraction, gaussian_c}
    to candidate values; the cartesian product is scored with the same
    seeded 80/20 splits for every candidate, and the best mean F1 wins.
    Ties keep the earliest candidate in grid order.
    """
    base = (base_config or DetectorConfig()).validate()
    if not grid:
        raise ConfigurationError("grid must name at least one parameter")
    unknown = sorted(set(grid) - set(SEARCHABLE))
    if unknown:
        raise ConfigurationError(
            f"grid keys must be among {SEARCHABLE}, got unknown: {', '.join(unknown)}"
        )
    for key, values in grid.items():
        if len(values) == 0:
            raise ConfigurationError(f"grid entry {key!r} has no candidate values")
    if len(samples) != len(outputs) or len(samples) == 0:
        raise InputError("samples and outputs must be non-empty and parallel")

    task = samples[0].task
    mispredicted = _internal_mispredictions(samples, outputs)
    splits = _internal_splits(len(samples), repeats, seed)

    keys = list(grid.keys())
    best_config, best_f1 = None, -1.0
    for combo in itertools.product(*(grid[k] for k in keys)):
        candidate = base.replace(**dict(zip(keys, combo)))
        f1s = []
        for cal_idx, val_idx in splits:
            store = build_store(
                [samples[i] for i in cal_idx],
                [outputs[i] for i in cal_idx],
                config=candidate,
            )
            assess = assess_sample if task == TASK_CLASSIFICATION else regression_assess
            flags = [
                assess(store, samples[i].features, outputs[i]).drifting for i in val_idx
            ]
            f1s.append(drift_metrics(flags, mispredicted[val_idx]).f1)
        mean_f1 = float(np.mean(f1s))
        if mean_f1 > best_f1:
            best_config, best_f1 = candidate, mean_f1
    return best_config
