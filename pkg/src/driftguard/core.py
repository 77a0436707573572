"""Core data types and dataset plumbing.

Samples are immutable records pairing a feature vector with exactly one
kind of ground truth (a class label or a numeric target).  Deployed-model
outputs travel separately as :class:`ModelOutput` so the same sample can be
scored against different models.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, InputError

TASK_CLASSIFICATION = "classification"
TASK_REGRESSION = "regression"

PROBA_SUM_TOL = 1e-6
STD_FLOOR = 1e-12


def _as_vector(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise InputError(f"{name} must be a non-empty 1-D sequence of numbers")
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{name} contains non-finite values")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class LabeledSample:
    """A feature vector with exactly one of ``label`` (classification) or
    ``target`` (regression) attached."""

    id: str
    features: np.ndarray
    label: int | None = None
    target: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "id", str(self.id))
        object.__setattr__(self, "features", _as_vector(self.features, "features"))
        if (self.label is None) == (self.target is None):
            raise InputError(
                f"sample {self.id!r} must carry exactly one of label or target"
            )
        if self.label is not None:
            if not (isinstance(self.label, (int, np.integer)) and not isinstance(self.label, bool)):
                raise InputError(f"sample {self.id!r}: label must be an integer")
            if self.label < 0:
                raise InputError(f"sample {self.id!r}: label must be >= 0")
            object.__setattr__(self, "label", int(self.label))
        if self.target is not None:
            t = float(self.target)
            if not np.isfinite(t):
                raise InputError(f"sample {self.id!r}: target must be finite")
            object.__setattr__(self, "target", t)

    @property
    def task(self) -> str:
        return TASK_CLASSIFICATION if self.label is not None else TASK_REGRESSION


@dataclass(frozen=True, eq=False)
class ModelOutput:
    """What the deployed model said about one sample.

    Exactly one of ``proba`` (class-probability vector) or ``pred`` (numeric
    prediction) is present, matching the task kind.
    """

    proba: np.ndarray | None = None
    pred: float | None = None

    def __post_init__(self):
        if (self.proba is None) == (self.pred is None):
            raise InputError("model output must carry exactly one of proba or pred")
        if self.proba is not None:
            p = _as_vector(self.proba, "proba")
            if p.size < 2:
                raise InputError("proba must have at least two entries")
            if np.any(p < 0.0):
                raise InputError("proba entries must be non-negative")
            if abs(float(p.sum()) - 1.0) > PROBA_SUM_TOL:
                raise InputError(f"proba must sum to 1 within {PROBA_SUM_TOL}, got {p.sum()}")
            object.__setattr__(self, "proba", p)
        if self.pred is not None:
            v = float(self.pred)
            if not np.isfinite(v):
                raise InputError("pred must be finite")
            object.__setattr__(self, "pred", v)

    @property
    def task(self) -> str:
        return TASK_CLASSIFICATION if self.proba is not None else TASK_REGRESSION

    @property
    def predicted_label(self) -> int:
        """Most probable class (lowest index wins ties)."""
        if self.proba is None:
            raise InputError("predicted_label is only defined for classification outputs")
        return int(np.argmax(self.proba))


@dataclass(frozen=True, eq=False)
class NormalizerStats:
    """Per-dimension z-scoring statistics fitted on calibration features."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", _as_vector(self.mean, "mean"))
        object.__setattr__(self, "std", _as_vector(self.std, "std"))
        if self.mean.shape != self.std.shape:
            raise InputError("mean and std must have the same shape")
        if np.any(self.std < STD_FLOOR):
            raise InputError(f"std entries must be >= {STD_FLOOR}")

    @classmethod
    def identity(cls, dim: int) -> "NormalizerStats":
        return cls(mean=np.zeros(dim), std=np.ones(dim))

    def transform(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        return (X - self.mean) / self.std


def fit_normalizer(features: np.ndarray) -> NormalizerStats:
    """Fit z-scoring statistics; constant dimensions get the std floor so
    the transform stays finite."""
    X = np.asarray(features, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ConfigurationError("normalizer needs a non-empty 2-D feature array")
    std = X.std(axis=0)
    return NormalizerStats(mean=X.mean(axis=0), std=np.maximum(std, STD_FLOOR))


def euclidean_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Plain Euclidean distance between two feature vectors."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise InputError(f"vectors must be 1-D with equal length, got {a.shape} and {b.shape}")
    return float(np.linalg.norm(a - b))


def feature_matrix(samples: Sequence[LabeledSample]) -> np.ndarray:
    """Stack sample features into an ``(n, d)`` array, checking that every
    sample has the same dimensionality."""
    if len(samples) == 0:
        raise InputError("no samples given")
    dim = samples[0].features.size
    for s in samples:
        if s.features.size != dim:
            raise InputError(
                f"sample {s.id!r} has {s.features.size} features, expected {dim}"
            )
    return np.stack([s.features for s in samples])


def distances_to(X: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Euclidean distances from each row of ``X`` to the vector ``v``."""
    diff = np.asarray(X, dtype=float) - np.asarray(v, dtype=float)
    return np.sqrt(np.einsum("ij,ij->i", diff, diff))


def round_half_up(x: float) -> int:
    """Round to nearest integer with exact .5 going up (not banker's)."""
    return int(np.floor(x + 0.5))


def split_training_data(
    samples: Sequence[LabeledSample],
    fraction: float = 0.1,
    cap: int = 1000,
    seed: int = 0,
) -> tuple[list[LabeledSample], list[LabeledSample]]:
    """Split training data into (training, calibration) parts.

    The calibration part holds ``min(cap, round(fraction * n))`` samples
    drawn without replacement using ``seed``; the rest stay training data.
    Both parts preserve the input ordering.

    Returns
    -------
    (training, calibration) : tuple of lists
    """
    n = len(samples)
    if n < 10:
        raise ConfigurationError(f"need at least 10 samples to split, got {n}")
    if not 0.0 < fraction < 1.0:
        raise ConfigurationError(f"fraction must be in (0, 1), got {fraction}")
    if cap < 1:
        raise ConfigurationError(f"cap must be >= 1, got {cap}")
    n_cal = min(cap, round_half_up(fraction * n), n)
    rng = np.random.default_rng(seed)
    chosen = np.sort(rng.permutation(n)[:n_cal])
    mask = np.zeros(n, dtype=bool)
    mask[chosen] = True
    calibration = [s for s, m in zip(samples, mask) if m]
    training = [s for s, m in zip(samples, mask) if not m]
    return training, calibration
