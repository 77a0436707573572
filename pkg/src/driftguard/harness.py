"""Demo harness: reference models, synthetic drift benchmark, triage loop.

Nothing here is needed to detect drift against a real deployed model; it
exists so the detector can be exercised end to end without one.  The
reference classifier is a soft nearest-prototype model: probabilities are
a softmax over negated squared distances to the nearest training point of
each class.  It is deliberately local, so relabelling even a small batch
of drifted samples visibly moves its decisions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .assessment import coverage_check, drift_metrics
from .calibration import CalibrationStore, build_store
from .clustering import _squared_distances
from .config import DetectorConfig
from .conformal import DriftAssessment, assess_sample
from .core import (
    STD_FLOOR,
    TASK_CLASSIFICATION,
    TASK_REGRESSION,
    LabeledSample,
    ModelOutput,
    NormalizerStats,
    feature_matrix,
    fit_normalizer,
    round_half_up,
    split_training_data,
)
from .errors import ConfigurationError, InputError
from .regression import regression_assess


class ReferenceClassifier:
    """Neighbourhood-softmax classifier with distance-gated smoothing.

    Class scores are a softmax over ``-d_c**2 / (2 * bandwidth**2)`` where
    ``d_c`` is the mean distance from the query to its ``neighbors``
    nearest training points of class ``c``.  Features are centred and
    divided by one global RMS scale — an isotropic transform, so relative
    distances (and therefore the class geometry) are preserved exactly.
    Before distances are measured, the training set is cleaned with Wilson
    editing: any point whose recorded label loses the majority vote of its
    ``edit_neighbors`` nearest other training points is dropped from the
    prototypes, so mislabeled training points cannot pull a wrong class
    close to a query.

    Because purely metric logits stay confidently polarised however far
    the query sits from the data, the output is blended toward the uniform
    distribution with a logistic gate on the query's local density:
    queries inside the training support keep their sharp softmax, queries
    beyond it admit an extra ``smoothing`` of uniform mass.  Support is
    the mean distance to the ``neighbors`` nearest (unedited) training
    points, and the gate threshold is the ``gate_quantile`` of that same
    statistic over the training set itself.
    """

    def __init__(
        self,
        bandwidth: float = 0.35,
        smoothing: float = 0.18,
        neighbors: int = 3,
        edit_neighbors: int = 5,
        gate_quantile: float = 0.90,
        gate_scale: float = 0.08,
    ):
        if bandwidth <= 0:
            raise InputError(f"bandwidth must be positive, got {bandwidth}")
        if not 0.0 <= smoothing < 1.0:
            raise InputError(f"smoothing must be in [0, 1), got {smoothing}")
        if neighbors < 1:
            raise InputError(f"neighbors must be >= 1, got {neighbors}")
        if edit_neighbors < 0:
            raise InputError(f"edit_neighbors must be >= 0, got {edit_neighbors}")
        if not 0.0 < gate_quantile <= 1.0:
            raise InputError(f"gate_quantile must be in (0, 1], got {gate_quantile}")
        if gate_scale <= 0:
            raise InputError(f"gate_scale must be positive, got {gate_scale}")
        self.bandwidth = bandwidth
        self.smoothing = smoothing
        self.neighbors = neighbors
        self.edit_neighbors = edit_neighbors
        self.gate_quantile = gate_quantile
        self.gate_scale = gate_scale

    def fit(self, X: np.ndarray, y: np.ndarray) -> "ReferenceClassifier":
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=int)
        if X.ndim != 2 or X.shape[0] != y.shape[0] or X.shape[0] == 0:
            raise InputError("X must be (n, d) with matching labels y")
        classes = np.unique(y)
        if classes.size < 2:
            raise ConfigurationError("need at least two classes")
        if not np.array_equal(classes, np.arange(classes.size)):
            raise InputError("labels must be contiguous integers starting at 0")
        mean = X.mean(axis=0)
        rms = float(np.sqrt(((X - mean) ** 2).mean()))
        self.normalizer_ = NormalizerStats(
            mean=mean, std=np.full(X.shape[1], max(rms, STD_FLOOR))
        )
        Z = self.normalizer_.transform(X)
        self.classes_ = classes
        self.train_z_ = Z
        keep = self._wilson_keep(Z, y, classes.size)
        self.prototypes_ = [Z[keep & (y == c)] for c in classes]
        pairwise = _squared_distances(Z, Z)
        np.fill_diagonal(pairwise, np.inf)
        k = min(self.neighbors, max(1, Z.shape[0] - 1))
        self.gate_distance_ = float(
            np.quantile(self._mean_nearest(pairwise, k), self.gate_quantile)
        )
        return self

    def _wilson_keep(self, Z: np.ndarray, y: np.ndarray, n_classes: int) -> np.ndarray:
        """Mask of points whose label wins the vote of their neighbours.

        A class that would lose every prototype keeps them all instead:
        an empty class would be worse than a noisy one.
        """
        k = min(self.edit_neighbors, Z.shape[0] - 1)
        if k < 1:
            return np.ones(Z.shape[0], dtype=bool)
        d2 = _squared_distances(Z, Z)
        np.fill_diagonal(d2, np.inf)
        nearest = np.argpartition(d2, k - 1, axis=1)[:, :k]
        votes = np.zeros((Z.shape[0], n_classes), dtype=int)
        for c in range(n_classes):
            votes[:, c] = (y[nearest] == c).sum(axis=1)
        keep = votes[np.arange(Z.shape[0]), y] * 2 >= k
        for c in range(n_classes):
            if not keep[y == c].any():
                keep[y == c] = True
        return keep

    @staticmethod
    def _mean_nearest(d2: np.ndarray, k: int) -> np.ndarray:
        k = min(k, d2.shape[1])
        nearest = np.partition(d2, k - 1, axis=1)[:, :k]
        return np.sqrt(nearest).mean(axis=1)

    def _class_distances(self, Z: np.ndarray) -> np.ndarray:
        dists = np.empty((Z.shape[0], self.classes_.size))
        for c, protos in enumerate(self.prototypes_):
            dists[:, c] = self._mean_nearest(
                _squared_distances(Z, protos), self.neighbors
            )
        return dists

    def _support(self, Z: np.ndarray) -> np.ndarray:
        return self._mean_nearest(
            _squared_distances(Z, self.train_z_), self.neighbors
        )

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        Z = self.normalizer_.transform(np.asarray(X, dtype=float))
        if Z.ndim == 1:
            Z = Z[None, :]
        dists = self._class_distances(Z)
        logits = -(dists**2) / (2.0 * self.bandwidth**2)
        logits -= logits.max(axis=1, keepdims=True)
        soft = np.exp(logits)
        soft /= soft.sum(axis=1, keepdims=True)
        gap = (self._support(Z) - self.gate_distance_) / self.gate_scale
        alpha = self.smoothing / (1.0 + np.exp(-gap))
        uniform = 1.0 / self.classes_.size
        return (1.0 - alpha)[:, None] * soft + alpha[:, None] * uniform

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.argmax(self.predict_proba(X), axis=1)


class ReferenceRegressor:
    """k-nearest-neighbour mean-target regressor on z-scored features."""

    def __init__(self, k: int = 3):
        if k < 1:
            raise InputError(f"k must be >= 1, got {k}")
        self.k = k

    def fit(self, X: np.ndarray, y: np.ndarray) -> "ReferenceRegressor":
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        if X.ndim != 2 or X.shape[0] != y.shape[0] or X.shape[0] == 0:
            raise InputError("X must be (n, d) with matching targets y")
        self.normalizer_ = fit_normalizer(X)
        self.Z_ = self.normalizer_.transform(X)
        self.y_ = y
        return self

    def predict(self, X: np.ndarray) -> np.ndarray:
        Z = self.normalizer_.transform(np.asarray(X, dtype=float))
        if Z.ndim == 1:
            Z = Z[None, :]
        k = min(self.k, self.Z_.shape[0])
        diff = Z[:, None, :] - self.Z_[None, :, :]
        d2 = np.einsum("nmd,nmd->nm", diff, diff)
        nearest = np.argsort(d2, axis=1, kind="stable")[:, :k]
        return self.y_[nearest].mean(axis=1)


def model_outputs(model, samples: Sequence[LabeledSample]) -> list[ModelOutput]:
    """Run a reference model over samples, wrapping results as outputs."""
    X = feature_matrix(samples)
    if isinstance(model, ReferenceClassifier):
        return [ModelOutput(proba=row) for row in model.predict_proba(X)]
    preds = model.predict(X)
    return [ModelOutput(pred=float(p)) for p in preds]


def train_reference_classifier(
    samples: Sequence[LabeledSample], seed: int = 0
) -> ReferenceClassifier:
    """Fit the reference classifier on labeled classification samples.

    Training is deterministic; ``seed`` is accepted so call sites that
    thread a seed through every stage stay uniform.
    """
    del seed
    if any(s.task != TASK_CLASSIFICATION for s in samples):
        raise InputError("classifier training needs samples with integer labels")
    y = np.array([s.label for s in samples], dtype=int)
    return ReferenceClassifier().fit(feature_matrix(samples), y)


def reference_regressor_predict(
    samples: Sequence[LabeledSample], test_features: np.ndarray, k: int = 3
) -> float:
    """Mean target of the ``k`` training samples nearest ``test_features``."""
    if any(s.task != TASK_REGRESSION for s in samples):
        raise InputError("regressor prediction needs samples with numeric targets")
    y = np.array([s.target for s in samples], dtype=float)
    model = ReferenceRegressor(k).fit(feature_matrix(samples), y)
    return float(model.predict(np.asarray(test_features, dtype=float))[0])


@dataclass(frozen=True)
class SyntheticBenchmark:
    """Gaussian-blob classification data with a drifted twin of the test
    set: features shifted along one direction, plus a slice of classes
    whose ground truth is remapped."""

    training: list[LabeledSample]
    calibration: list[LabeledSample]
    test_in: list[LabeledSample]
    test_drifted: list[LabeledSample]
    classes: int
    dim: int
    drift_shift: float
    permuted_classes: tuple[int, ...]
    direction: np.ndarray


def _blob_samples(
    rng: np.random.Generator,
    centroids: np.ndarray,
    n_per_class: int,
    sigma: float,
    prefix: str,
) -> list[LabeledSample]:
    samples = []
    for c in range(centroids.shape[0]):
        X = rng.normal(centroids[c], sigma, size=(n_per_class, centroids.shape[1]))
        for i, row in enumerate(X):
            samples.append(LabeledSample(f"{prefix}-{c}-{i:04d}", row, label=c))
    return samples


def generate_benchmark(
    n_per_class: int = 160,
    classes: int = 4,
    dim: int = 6,
    drift_shift: float = 5.0,
    seed: int = 0,
    *,
    n_test_per_class: int = 200,
    relabel_fraction: float = 0.2,
    partner_separation: float = 1.8,
    group_separation: float = 9.0,
    blob_sigma: float = 1.0,
    drift_mix: float = 0.9,
    label_noise: float = 0.15,
    calibration_fraction: float = 0.3,
    calibration_cap: int = 1000,
) -> SyntheticBenchmark:
    """Build a seeded synthetic drift scenario.

    Classes are isotropic Gaussian blobs arranged in partner pairs along
    a chain: the two members of a pair sit ``partner_separation`` blob
    sigmas apart on an axis orthogonal to the chain, and consecutive
    pairs are ``group_separation`` sigmas apart along it.  In
    distribution the model's mistakes are essentially binary confusions
    between partners — prediction mass never spreads over three or more
    classes at once, which is the regime a well-ranked classifier on
    real data lives in.

    The drifted test set is drawn fresh and translated ``drift_shift``
    blob sigmas along one random direction.  ``drift_mix`` splits the
    direction's energy between the chain axis (walking each pair toward
    the territory of the next, which scrambles class geometry) and an
    axis orthogonal to every class structure (moving the data off the
    manifold without favouring any class).  The direction as a whole is
    a random unit vector — the class frame is simply built relative to
    it.  ``round(relabel_fraction * classes)`` classes also get their
    ground truth remapped to the class half the label range away; the
    remapped classes are those whose centres lie farthest along the
    drift direction, so the concept change arrives where the data is
    headed rather than in territory the drift vacates.

    ``label_noise`` relabels that fraction of training-pool points to the
    most dissimilar class — the one whose centre sits farthest away —
    before the calibration split, mimicking systematic annotation faults
    (mapping errors in a labelling pipeline hit unrelated classes, not
    lookalikes).  Test sets stay clean so accuracy and detection metrics
    keep their intended meaning.
    """
    if classes < 2 or dim < 1 or n_per_class < 1 or n_test_per_class < 1:
        raise InputError("benchmark sizes must be positive (and classes >= 2)")
    if not 0.0 <= relabel_fraction <= 1.0:
        raise InputError(f"relabel_fraction must be in [0, 1], got {relabel_fraction}")
    if not 0.0 <= drift_mix <= 1.0:
        raise InputError(f"drift_mix must be in [0, 1], got {drift_mix}")
    if not 0.0 <= label_noise < 1.0:
        raise InputError(f"label_noise must be in [0, 1), got {label_noise}")
    if min(partner_separation, group_separation, blob_sigma) <= 0:
        raise InputError("separations and blob_sigma must be positive")
    rng = np.random.default_rng(seed)
    # Orthonormal frame (seeded): chain axis, pair axis, and — when the
    # feature space has room — an off-manifold axis for the drift.
    frame, _ = np.linalg.qr(rng.normal(size=(dim, min(dim, 3))))
    chain = frame[:, 0]
    partner_axis = frame[:, 1] if dim >= 2 else chain
    off_axis = frame[:, 2] if dim >= 3 else None
    centroids = np.empty((classes, dim))
    for c in range(classes):
        centroids[c] = group_separation * blob_sigma * (c // 2) * chain
        if c % 2 == 1:
            centroids[c] += partner_separation * blob_sigma * partner_axis
    centroids -= centroids.mean(axis=0)

    pool = _blob_samples(rng, centroids, n_per_class, blob_sigma, "pool")
    inter = _squared_distances(centroids, centroids)
    dissimilar = inter.argmax(axis=1)
    n_noisy = round_half_up(label_noise * len(pool))
    for idx in rng.choice(len(pool), size=n_noisy, replace=False):
        s = pool[idx]
        pool[idx] = LabeledSample(s.id, s.features, label=int(dissimilar[s.label]))
    training, calibration = split_training_data(
        pool, fraction=calibration_fraction, cap=calibration_cap, seed=seed
    )
    test_in = _blob_samples(rng, centroids, n_test_per_class, blob_sigma, "test")

    if off_axis is None:
        direction = chain
    else:
        direction = np.sqrt(drift_mix) * chain + np.sqrt(1.0 - drift_mix) * off_axis
        direction = direction / np.linalg.norm(direction)

    n_permuted = min(classes, round_half_up(relabel_fraction * classes))
    leading = np.argsort(-(centroids @ direction), kind="stable")
    permuted = tuple(sorted(int(c) for c in leading[:n_permuted]))
    # Remap across pair groups (half the class count away) so the new
    # ground truth never coincides with a nearby class the drifted
    # features could legitimately reach.
    step = max(1, classes // 2)
    remap = {c: (c + step) % classes for c in permuted}

    shift = drift_shift * blob_sigma * direction
    drifted = []
    base = _blob_samples(rng, centroids, n_test_per_class, blob_sigma, "drift")
    for s in base:
        drifted.append(
            LabeledSample(s.id, s.features + shift, label=remap.get(s.label, s.label))
        )
    return SyntheticBenchmark(
        training=training,
        calibration=calibration,
        test_in=test_in,
        test_drifted=drifted,
        classes=classes,
        dim=dim,
        drift_shift=drift_shift,
        permuted_classes=permuted,
        direction=direction,
    )


@dataclass(frozen=True)
class TriageBatch:
    """Samples picked for human relabelling, strangest first."""

    ids: tuple[str, ...]
    flagged: int
    budget: float


def triage(assessments: Sequence[DriftAssessment], budget: float = 0.05) -> TriageBatch:
    """Choose the relabelling batch from drifting assessments.

    Only samples the ensemble called drifting are eligible; they are
    ordered by ascending minimum credibility (id breaks ties) and the
    first ``ceil(budget * flagged)`` are taken.
    """
    if not 0.0 < budget <= 1.0:
        raise InputError(f"budget must be in (0, 1], got {budget}")
    flagged = [a for a in assessments if a.drifting]
    flagged.sort(key=lambda a: (a.min_credibility, a.id))
    size = math.ceil(budget * len(flagged))
    return TriageBatch(ids=tuple(a.id for a in flagged[:size]), flagged=len(flagged), budget=budget)


def incremental_update(
    training: Sequence[LabeledSample],
    calibration: Sequence[LabeledSample],
    relabeled: Sequence[LabeledSample],
    config: DetectorConfig | None = None,
    functions: Sequence[str] | None = None,
    calibration_fraction: float = 0.1,
    calibration_cap: int = 1000,
    knn_k: int | None = None,
):
    """Retrain a reference model from scratch on everything known.

    The union of training, calibration and freshly relabeled samples is
    re-split with the config seed, a new reference model is fitted on the
    training part and a new store is built on the calibration part.  With
    an empty ``relabeled`` this reproduces the original fit exactly.

    Returns
    -------
    (model, store) : the new reference model and calibration store.
    """
    config = (config or DetectorConfig()).validate()
    union = list(training) + list(calibration) + list(relabeled)
    if len(union) == 0:
        raise InputError("nothing to retrain on")
    task = union[0].task
    for s in union:
        if s.task != task:
            raise InputError("all samples must share one task kind")
    new_training, new_calibration = split_training_data(
        union, fraction=calibration_fraction, cap=calibration_cap, seed=config.seed
    )
    if len(new_training) == 0 or len(new_calibration) == 0:
        raise InputError("retraining needs non-empty training and calibration parts")
    X = feature_matrix(new_training)
    if task == TASK_CLASSIFICATION:
        y = np.array([s.label for s in new_training], dtype=int)
        model = ReferenceClassifier().fit(X, y)
    else:
        y = np.array([s.target for s in new_training], dtype=float)
        model = ReferenceRegressor(k=knn_k if knn_k is not None else config.knn_k).fit(X, y)
    outputs = model_outputs(model, new_calibration)
    store = build_store(new_calibration, outputs, config=config, functions=functions)
    return model, store


def classification_accuracy(model: ReferenceClassifier, samples: Sequence[LabeledSample]) -> float:
    X = feature_matrix(samples)
    y = np.array([s.label for s in samples], dtype=int)
    return float(np.mean(model.predict(X) == y))


def assess_dataset(
    store: CalibrationStore,
    samples: Sequence[LabeledSample],
    outputs: Sequence[ModelOutput],
    config: DetectorConfig | None = None,
) -> list[DriftAssessment]:
    """Assess a list of samples against one store."""
    assess = assess_sample if store.task == TASK_CLASSIFICATION else regression_assess
    return [
        assess(store, s.features, o, config=config, sample_id=s.id)
        for s, o in zip(samples, outputs)
    ]


def run_demo(
    seed: int = 0,
    drift_shift: float = 5.0,
    budget: float = 0.05,
    config: DetectorConfig | None = None,
) -> dict:
    """End-to-end walkthrough on the synthetic benchmark.

    Fits the reference classifier, calibrates the detector, self-checks
    coverage, assesses the in-distribution and drifted test sets, triages
    the flagged samples and retrains on the relabeled batch.  Returns a
    JSON-friendly report; every number is deterministic in ``seed``.
    """
    config = (config or DetectorConfig(seed=seed)).validate()
    bench = generate_benchmark(seed=seed, drift_shift=drift_shift)

    X_train = feature_matrix(bench.training)
    y_train = np.array([s.label for s in bench.training], dtype=int)
    model = ReferenceClassifier().fit(X_train, y_train)

    cal_outputs = model_outputs(model, bench.calibration)
    store = build_store(bench.calibration, cal_outputs, config=config)
    coverage = coverage_check(bench.calibration, cal_outputs, config=config, seed=seed)

    in_assess = assess_dataset(store, bench.test_in, model_outputs(model, bench.test_in))
    drift_outputs = model_outputs(model, bench.test_drifted)
    drift_assess = assess_dataset(store, bench.test_drifted, drift_outputs)

    drift_flags = [a.drifting for a in drift_assess]
    mispredicted = [
        o.predicted_label != s.label for s, o in zip(bench.test_drifted, drift_outputs)
    ]
    metrics = drift_metrics(drift_flags, mispredicted)

    batch = triage(drift_assess, budget=budget)
    by_id = {s.id: s for s in bench.test_drifted}
    relabeled = [by_id[i] for i in batch.ids]
    new_model, _ = incremental_update(
        bench.training, bench.calibration, relabeled, config=config
    )
    accuracy_before = classification_accuracy(model, bench.test_drifted)
    accuracy_after = classification_accuracy(new_model, bench.test_drifted)

    in_flagged = sum(a.drifting for a in in_assess)
    return {
        "task": TASK_CLASSIFICATION,
        "seed": seed,
        "drift_shift": drift_shift,
        "classes": bench.classes,
        "dim": bench.dim,
        "permuted_classes": list(bench.permuted_classes),
        "n_training": len(bench.training),
        "n_calibration": len(bench.calibration),
        "n_test": len(bench.test_in),
        "n_drifted": len(bench.test_drifted),
        "coverage": coverage.to_record(),
        "in_distribution": {
            "flagged": in_flagged,
            "flagged_fraction": in_flagged / len(in_assess),
        },
        "drifted": {
            "flagged": sum(drift_flags),
            "flagged_fraction": sum(drift_flags) / len(drift_flags),
            "metrics": metrics.to_record(),
        },
        "triage": {"batch_size": len(batch.ids), "flagged": batch.flagged, "ids": list(batch.ids)},
        "update": {
            "accuracy_before": accuracy_before,
            "accuracy_after": accuracy_after,
            "improvement": accuracy_after - accuracy_before,
        },
    }
