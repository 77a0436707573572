"""Nonconformity scores.

Classification scores are functions of the model's probability vector and a
hypothesized label; larger means stranger.  Ties in the probability vector
are broken toward the lower class index, so every score is deterministic.
The single regression score is the absolute residual.
"""
from __future__ import annotations

from enum import Enum
from typing import Sequence

import numpy as np

from .core import TASK_CLASSIFICATION, TASK_REGRESSION
from .errors import ConfigurationError, InputError


class FunctionId(str, Enum):
    """Identifiers of the supported nonconformity functions."""

    LAC = "lac"
    TOPK = "topk"
    APS = "aps"
    RAPS = "raps"
    RESIDUAL = "residual"

    def __str__(self) -> str:  # so f-strings print the bare name
        return self.value


CLASSIFICATION_FUNCTIONS = (FunctionId.LAC, FunctionId.TOPK, FunctionId.APS, FunctionId.RAPS)
REGRESSION_FUNCTIONS = (FunctionId.RESIDUAL,)


def default_functions(task: str) -> tuple[FunctionId, ...]:
    if task == TASK_CLASSIFICATION:
        return CLASSIFICATION_FUNCTIONS
    if task == TASK_REGRESSION:
        return REGRESSION_FUNCTIONS
    raise ConfigurationError(f"unknown task {task!r}")


def parse_functions(names: Sequence[str], task: str) -> tuple[FunctionId, ...]:
    """Map config names to :class:`FunctionId`, checking task compatibility."""
    valid = set(default_functions(task))
    out = []
    for name in names:
        try:
            fid = FunctionId(name)
        except ValueError:
            raise ConfigurationError(f"unknown nonconformity function {name!r}") from None
        if fid not in valid:
            raise ConfigurationError(f"function {fid} is not usable for {task} tasks")
        out.append(fid)
    if not out:
        raise ConfigurationError("at least one nonconformity function is required")
    return tuple(out)


def _check_proba_label(proba: np.ndarray, label: int) -> np.ndarray:
    proba = np.asarray(proba, dtype=float)
    if proba.ndim != 1:
        raise InputError("proba must be 1-D")
    if not 0 <= label < proba.size:
        raise InputError(f"label {label} out of range for {proba.size} classes")
    return proba


def descending_order(proba: np.ndarray) -> np.ndarray:
    """Class indices sorted by probability, highest first; equal
    probabilities keep ascending class order."""
    return np.argsort(-np.asarray(proba, dtype=float), kind="stable")


def label_rank(proba: np.ndarray, label: int) -> int:
    """1-based position of ``label`` in the descending probability order."""
    order = descending_order(_check_proba_label(proba, label))
    return int(np.nonzero(order == label)[0][0]) + 1


def lac_score(proba: np.ndarray, label: int) -> float:
    """One minus the probability assigned to the label."""
    proba = _check_proba_label(proba, label)
    return float(1.0 - proba[label])


def topk_score(proba: np.ndarray, label: int) -> float:
    """Rank of the label in the descending probability order (1 = top)."""
    return float(label_rank(proba, label))


def aps_score(proba: np.ndarray, label: int) -> float:
    """Total probability mass at or above the label in the descending
    order, i.e. the cumulative sum through the label's position."""
    proba = _check_proba_label(proba, label)
    order = descending_order(proba)
    position = int(np.nonzero(order == label)[0][0])
    return float(proba[order[: position + 1]].sum())


def raps_score(proba: np.ndarray, label: int, lam: float = 0.01, k_reg: int = 1) -> float:
    """APS plus a rank penalty ``lam * max(0, rank - k_reg)`` discouraging
    deep labels."""
    if lam < 0:
        raise ConfigurationError(f"lam must be >= 0, got {lam}")
    if k_reg < 0:
        raise ConfigurationError(f"k_reg must be >= 0, got {k_reg}")
    rank = label_rank(proba, label)
    return aps_score(proba, label) + lam * max(0, rank - k_reg)


def residual_score(pred: float, target: float) -> float:
    """Absolute difference between prediction and target."""
    return float(abs(float(pred) - float(target)))


def classification_score(
    function: FunctionId,
    proba: np.ndarray,
    label: int,
    raps_lambda: float = 0.01,
    raps_k_reg: int = 1,
) -> float:
    """Dispatch a classification score by function id."""
    if function == FunctionId.LAC:
        return lac_score(proba, label)
    if function == FunctionId.TOPK:
        return topk_score(proba, label)
    if function == FunctionId.APS:
        return aps_score(proba, label)
    if function == FunctionId.RAPS:
        return raps_score(proba, label, lam=raps_lambda, k_reg=raps_k_reg)
    raise ConfigurationError(f"{function} is not a classification function")
