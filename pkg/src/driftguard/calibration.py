"""Calibration store: the fitted artifact of the detector.

Building the store computes, once, everything the per-sample detection
path needs: normalized calibration features, per-function nonconformity
scores, and (for regression) the cluster model that stands in for class
labels.  Stores serialize to a versioned JSON artifact so a calibration
run and the detection runs that use it can live in different processes.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .clustering import gap_select_k, kmeans
from .config import DetectorConfig
from .core import (
    TASK_CLASSIFICATION,
    TASK_REGRESSION,
    LabeledSample,
    ModelOutput,
    NormalizerStats,
    distances_to,
    feature_matrix,
    fit_normalizer,
)
from .errors import ConfigurationError, InputError
from .nonconformity import (
    FunctionId,
    classification_score,
    default_functions,
    parse_functions,
    residual_score,
)

SCHEMA_VERSION = 1


@dataclass(frozen=True, eq=False)
class ClusterInfo:
    """Cluster model attached to regression stores."""

    n_clusters: int
    centroids: np.ndarray  # (k, d), in normalized feature space


@dataclass(frozen=True, eq=False)
class CalibrationStore:
    """Immutable calibration data plus per-function nonconformity scores.

    ``features`` are stored normalized; ``labels`` hold class labels for
    classification and cluster labels for regression.  Raw model outputs
    (``probas`` or ``preds``) are retained so the coverage self-check can
    re-split the store internally without access to the original file.
    """

    task: str
    ids: tuple[str, ...]
    features: np.ndarray  # (n, d) normalized
    labels: np.ndarray  # (n,) int
    scores: dict[FunctionId, np.ndarray]
    functions: tuple[FunctionId, ...]
    normalizer: NormalizerStats
    config: DetectorConfig
    probas: np.ndarray | None = None  # (n, L) classification
    preds: np.ndarray | None = None  # (n,) regression
    targets: np.ndarray | None = None  # (n,) regression
    clusters: ClusterInfo | None = None  # regression

    def __post_init__(self):
        n = len(self.ids)
        if n == 0:
            raise InputError("calibration store must hold at least one sample")
        if self.features.shape[0] != n or self.labels.shape[0] != n:
            raise InputError("ids, features and labels must have matching lengths")
        for fid in self.functions:
            if fid not in self.scores or self.scores[fid].shape[0] != n:
                raise InputError(f"missing or malformed score array for {fid}")
        if self.task == TASK_CLASSIFICATION:
            if self.probas is None or self.clusters is not None:
                raise InputError("classification stores need probas and no clusters")
        elif self.task == TASK_REGRESSION:
            if self.preds is None or self.targets is None or self.clusters is None:
                raise InputError("regression stores need preds, targets and clusters")
        else:
            raise InputError(f"unknown task {self.task!r}")

    @property
    def n(self) -> int:
        return len(self.ids)

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def label_count(self) -> int:
        """Number of label values p-values are computed over: classes for
        classification, clusters for regression."""
        if self.task == TASK_CLASSIFICATION:
            return self.probas.shape[1]
        return self.clusters.n_clusters


@dataclass(frozen=True, eq=False)
class WeightedSubset:
    """Calibration indices nearest a test sample, ordered by ascending
    distance, with optional attached weights."""

    indices: np.ndarray  # (m,) int
    distances: np.ndarray  # (m,) float, non-decreasing
    weights: np.ndarray | None = None  # (m,) float in (0, 1]


def build_store(
    samples: Sequence[LabeledSample],
    outputs: Sequence[ModelOutput],
    config: DetectorConfig | None = None,
    functions: Sequence[str] | None = None,
) -> CalibrationStore:
    """Assemble a calibration store from labelled samples and the deployed
    model's outputs on them.

    Parameters
    ----------
    samples, outputs : parallel sequences, one task kind throughout.
    config : DetectorConfig, optional
    functions : sequence of function names, optional
        Defaults to ``config.functions`` and then to the task default.

    Notes
    -----
    Regression stores are clustered here (gap statistic to pick K, then
    k-means), so building is deterministic in ``config.seed``.
    """
    config = (config or DetectorConfig()).validate()
    if len(samples) != len(outputs):
        raise InputError(f"{len(samples)} samples but {len(outputs)} outputs")
    if len(samples) == 0:
        raise ConfigurationError("cannot build a store from zero samples")
    task = samples[0].task
    for s, o in zip(samples, outputs):
        if s.task != task or o.task != task:
            raise ConfigurationError(f"all samples and outputs must be {task}")
    if functions is None:
        functions = config.functions
    fids = parse_functions(functions, task) if functions is not None else default_functions(task)

    X = feature_matrix(samples)
    normalizer = fit_normalizer(X) if config.normalize else NormalizerStats.identity(X.shape[1])
    Z = normalizer.transform(X)
    ids = tuple(s.id for s in samples)

    if task == TASK_CLASSIFICATION:
        widths = {o.proba.size for o in outputs}
        if len(widths) != 1:
            raise InputError(f"inconsistent proba widths: {sorted(widths)}")
        probas = np.stack([o.proba for o in outputs])
        labels = np.array([s.label for s in samples], dtype=int)
        if labels.max() >= probas.shape[1]:
            raise InputError(
                f"label {labels.max()} out of range for {probas.shape[1]} classes"
            )
        scores = {
            fid: np.array(
                [
                    classification_score(
                        fid, probas[i], int(labels[i]),
                        raps_lambda=config.raps_lambda, raps_k_reg=config.raps_k_reg,
                    )
                    for i in range(len(samples))
                ]
            )
            for fid in set(fids)
        }
        return CalibrationStore(
            task=task, ids=ids, features=Z, labels=labels, scores=scores,
            functions=fids, normalizer=normalizer, config=config, probas=probas,
        )

    targets = np.array([s.target for s in samples], dtype=float)
    preds = np.array([o.pred for o in outputs], dtype=float)
    k_min, k_max = config.k_range
    k = gap_select_k(Z, k_min=k_min, k_max=k_max, B=config.gap_B, seed=config.seed).k
    km = kmeans(Z, k, seed=config.seed)
    scores = {
        FunctionId.RESIDUAL: np.array(
            [residual_score(preds[i], targets[i]) for i in range(len(samples))]
        )
    }
    return CalibrationStore(
        task=task, ids=ids, features=Z, labels=km.assignments.astype(int),
        scores=scores, functions=fids, normalizer=normalizer, config=config,
        preds=preds, targets=targets,
        clusters=ClusterInfo(n_clusters=k, centroids=km.centroids),
    )


def store_dataset(store: CalibrationStore) -> tuple[list[LabeledSample], list[ModelOutput]]:
    """Reconstruct (samples, outputs) from a store, e.g. to re-split it
    for the coverage self-check.  Features come back normalized, which is
    harmless downstream: z-scoring is affine, so distances and refitted
    normalizers on any subset behave as they would on raw features."""
    samples, outputs = [], []
    for i in range(store.n):
        if store.task == TASK_CLASSIFICATION:
            samples.append(
                LabeledSample(store.ids[i], store.features[i], label=int(store.labels[i]))
            )
            outputs.append(ModelOutput(proba=store.probas[i]))
        else:
            samples.append(
                LabeledSample(store.ids[i], store.features[i], target=float(store.targets[i]))
            )
            outputs.append(ModelOutput(pred=float(store.preds[i])))
    return samples, outputs


def select_subset(
    store: CalibrationStore,
    test_features: np.ndarray,
    subset_fraction: float | None = None,
    small_threshold: int | None = None,
) -> WeightedSubset:
    """Pick the calibration samples nearest the test sample.

    Uses the whole store when it holds fewer than ``small_threshold``
    samples, otherwise the nearest ``ceil(subset_fraction * n)``.
    Distance ties break toward the lower index.
    """
    cfg = store.config
    fraction = cfg.subset_fraction if subset_fraction is None else subset_fraction
    threshold = cfg.small_threshold if small_threshold is None else small_threshold
    z = store.normalizer.transform(np.asarray(test_features, dtype=float))
    if z.ndim != 1 or z.size != store.dim:
        raise InputError(f"test features must be 1-D with {store.dim} entries")
    d = distances_to(store.features, z)
    order = np.lexsort((np.arange(store.n), d))
    m = store.n if store.n < threshold else int(np.ceil(fraction * store.n))
    picked = order[:m]
    return WeightedSubset(indices=picked, distances=d[picked])


def compute_weights(subset: WeightedSubset, tau: float) -> WeightedSubset:
    """Attach distance-decay weights ``exp(-d**2 / tau)`` to a subset."""
    if tau <= 0:
        raise ConfigurationError(f"tau must be positive, got {tau}")
    w = np.exp(-(subset.distances**2) / tau)
    return WeightedSubset(indices=subset.indices, distances=subset.distances, weights=w)


def adjusted_scores(
    store: CalibrationStore, subset: WeightedSubset, function: FunctionId
) -> tuple[np.ndarray, np.ndarray]:
    """Weighted calibration scores of the subset for one function.

    Returns ``(labels, weight * score)`` arrays aligned with the subset.
    The test sample's own score is never weighted; only calibration scores
    shrink with distance.
    """
    if subset.weights is None:
        raise InputError("subset has no weights; call compute_weights first")
    if function not in store.scores:
        raise ConfigurationError(f"store has no scores for {function}")
    idx = subset.indices
    return store.labels[idx], store.scores[function][idx] * subset.weights


def _store_to_dict(store: CalibrationStore) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "task": store.task,
        "ids": list(store.ids),
        "features": store.features.tolist(),
        "labels": store.labels.tolist(),
        "scores": {str(fid): arr.tolist() for fid, arr in store.scores.items()},
        "functions": [str(fid) for fid in store.functions],
        "normalizer": {
            "mean": store.normalizer.mean.tolist(),
            "std": store.normalizer.std.tolist(),
        },
        "config": store.config.to_dict(),
        "probas": None if store.probas is None else store.probas.tolist(),
        "preds": None if store.preds is None else store.preds.tolist(),
        "targets": None if store.targets is None else store.targets.tolist(),
        "clusters": None
        if store.clusters is None
        else {
            "n_clusters": store.clusters.n_clusters,
            "centroids": store.clusters.centroids.tolist(),
        },
    }


def save_store(store: CalibrationStore, path: str | Path) -> None:
    """Write the store as a versioned JSON artifact.  Serialization is
    deterministic, so identical inputs yield byte-identical files."""
    payload = json.dumps(_store_to_dict(store), sort_keys=True, indent=2)
    Path(path).write_text(payload + "\n")


def load_store(path: str | Path) -> CalibrationStore:
    """Read a store artifact, refusing unknown schema versions."""
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise InputError(f"cannot read store {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"store {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise InputError("store artifact must be a JSON object")
    version = data.get("schema_version")
    if version != SCHEMA_VERSION:
        raise InputError(
            f"unsupported store schema version {version!r}; this build reads {SCHEMA_VERSION}"
        )
    try:
        config = DetectorConfig.from_dict(data["config"])
        task = data["task"]
        fids = parse_functions(data["functions"], task)
        scores = {
            FunctionId(name): np.asarray(vals, dtype=float)
            for name, vals in data["scores"].items()
        }
        clusters = data.get("clusters")
        store = CalibrationStore(
            task=task,
            ids=tuple(str(i) for i in data["ids"]),
            features=np.asarray(data["features"], dtype=float),
            labels=np.asarray(data["labels"], dtype=int),
            scores=scores,
            functions=fids,
            normalizer=NormalizerStats(
                mean=np.asarray(data["normalizer"]["mean"], dtype=float),
                std=np.asarray(data["normalizer"]["std"], dtype=float),
            ),
            config=config,
            probas=None if data.get("probas") is None else np.asarray(data["probas"], dtype=float),
            preds=None if data.get("preds") is None else np.asarray(data["preds"], dtype=float),
            targets=None if data.get("targets") is None else np.asarray(data["targets"], dtype=float),
            clusters=None
            if clusters is None
            else ClusterInfo(
                n_clusters=int(clusters["n_clusters"]),
                centroids=np.asarray(clusters["centroids"], dtype=float),
            ),
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, InputError):
            raise
        raise InputError(f"malformed store artifact: {exc}") from exc
    return store
