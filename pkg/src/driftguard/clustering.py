"""K-means clustering and gap-statistic model selection.

Implemented directly (Lloyd's algorithm with k-means++ style seeding)
rather than delegated, because the surrounding code needs two guarantees
off-the-shelf implementations do not give: an exactly reproducible run for
a given integer seed, and the per-iteration dispersion trace used to test
that each sweep is non-increasing.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, InputError


@dataclass(frozen=True, eq=False)
class KMeansResult:
    centroids: np.ndarray  # (k, d)
    assignments: np.ndarray  # (n,) int
    dispersion: float  # final within-cluster sum of squared distances
    history: tuple[float, ...]  # dispersion after each assignment sweep


@dataclass(frozen=True, eq=False)
class GapResult:
    k: int
    ks: tuple[int, ...]
    gaps: np.ndarray
    clamped: bool


def _squared_distances(X: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    # (n, k) matrix of squared Euclidean distances.
    diff = X[:, None, :] - centroids[None, :, :]
    return np.einsum("nkd,nkd->nk", diff, diff)


def _seed_centroids(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ style seeding: each next centroid is a data point drawn
    with probability proportional to its squared distance from the chosen
    ones.  Falls back to the lowest unchosen index when all remaining
    distances are zero (duplicate-heavy data)."""
    n = X.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = np.einsum("nd,nd->n", X - X[chosen[0]], X - X[chosen[0]])
    while len(chosen) < k:
        total = float(d2.sum())
        if total <= 0.0:
            remaining = [i for i in range(n) if i not in set(chosen)]
            chosen.append(remaining[0])
        else:
            chosen.append(int(rng.choice(n, p=d2 / total)))
        d_new = np.einsum("nd,nd->n", X - X[chosen[-1]], X - X[chosen[-1]])
        d2 = np.minimum(d2, d_new)
    return X[chosen].copy()


def kmeans(X: np.ndarray, k: int, seed: int = 0, max_iter: int = 100) -> KMeansResult:
    """Cluster rows of ``X`` into ``k`` groups.

    Deterministic for a fixed seed.  Assignment ties go to the lowest
    cluster index; a cluster left empty by a sweep is re-seeded with the
    point currently farthest from its own centroid, which cannot increase
    the dispersion.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise InputError("X must be a non-empty 2-D array")
    n = X.shape[0]
    if not 1 <= k <= n:
        raise ConfigurationError(f"k must be in [1, {n}], got {k}")
    rng = np.random.default_rng(seed)
    centroids = _seed_centroids(X, k, rng)
    assignments = np.full(n, -1, dtype=int)
    history: list[float] = []
    for _ in range(max_iter):
        d2 = _squared_distances(X, centroids)
        new_assignments = np.argmin(d2, axis=1)
        point_d2 = d2[np.arange(n), new_assignments]
        for j in range(k):
            if not np.any(new_assignments == j):
                far = int(np.argmax(point_d2))
                centroids[j] = X[far]
                new_assignments[far] = j
                point_d2[far] = 0.0
        history.append(float(point_d2.sum()))
        if np.array_equal(new_assignments, assignments):
            break
        assignments = new_assignments
        for j in range(k):
            centroids[j] = X[assignments == j].mean(axis=0)
    return KMeansResult(
        centroids=centroids,
        assignments=assignments,
        dispersion=history[-1],
        history=tuple(history),
    )


def gap_select_k(
    X: np.ndarray,
    k_min: int = 2,
    k_max: int = 20,
    B: int = 10,
    seed: int = 0,
) -> GapResult:
    """Pick a cluster count by the gap statistic.

    ``gap(K) = mean_b log(W_Kb*) - log(W_K)`` where the ``W*`` come from
    ``B`` reference datasets drawn uniformly over the bounding box of
    ``X``.  The candidate range is clamped to the sample count (with a
    warning); ties on the maximum go to the smaller K.
    """
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    if n < 1:
        raise InputError("X must be non-empty")
    clamped = False
    if k_max > n:
        warnings.warn(f"clamping cluster range upper bound {k_max} to sample count {n}")
        k_max = n
        clamped = True
    k_min = min(k_min, k_max)
    ks = tuple(range(k_min, k_max + 1))

    # One flat block of derived seeds: slot 0 drives the reference draws,
    # then one slot per (K,) data run and per (K, b) reference run.
    seeds = np.random.SeedSequence(seed).generate_state(1 + len(ks) * (B + 1), dtype=np.uint64)
    ref_rng = np.random.default_rng(int(seeds[0]))
    lo, hi = X.min(axis=0), X.max(axis=0)
    references = [ref_rng.uniform(lo, hi, size=X.shape) for _ in range(B)]

    tiny = np.finfo(float).tiny
    gaps = np.empty(len(ks))
    for i, k in enumerate(ks):
        w = kmeans(X, k, seed=int(seeds[1 + i])).dispersion
        ref_logs = []
        for b, ref in enumerate(references):
            ws = kmeans(ref, k, seed=int(seeds[1 + len(ks) + i * B + b])).dispersion
            ref_logs.append(np.log(max(ws, tiny)))
        gaps[i] = float(np.mean(ref_logs)) - np.log(max(w, tiny))
    best = int(np.argmax(gaps))  # first maximum, so ties prefer smaller K
    return GapResult(k=ks[best], ks=ks, gaps=gaps, clamped=clamped)
