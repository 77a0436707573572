"""Detector configuration.

All tunable knobs of the detection pipeline live in a single immutable
:class:`DetectorConfig`.  Every field has a sensible default, so
``DetectorConfig()`` is a fully working configuration for classification
tasks.  Unknown keys in a config file or dict are treated as errors rather
than silently ignored.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigurationError

# Names understood by the nonconformity dispatcher.  Kept here (not imported
# from .nonconformity) so config parsing has no heavyweight dependencies.
KNOWN_FUNCTIONS = ("lac", "topk", "aps", "raps", "residual")


@dataclass(frozen=True)
class DetectorConfig:
    """Immutable bundle of detection parameters.

    Parameters
    ----------
    epsilon : float
        Significance level of the conformal test; a label joins the
        prediction set when its p-value exceeds ``epsilon``.
    tau : float
        Temperature of the distance-based calibration weights
        ``exp(-d**2 / tau)``.  Large values disable the weighting.
    subset_fraction : float
        Fraction of calibration samples (nearest by Euclidean distance)
        used per test sample.
    small_threshold : int
        Calibration sets smaller than this are used whole, skipping the
        subset selection.
    gaussian_c : float
        Width of the Gaussian map from prediction-set size to confidence.
    raps_lambda : float
        Regularisation weight of the rank penalty in the RAPS score.
    raps_k_reg : int
        Rank at which the RAPS penalty starts.
    knn_k : int
        Neighbour count for the regression target approximation.
    k_range : tuple[int, int]
        Inclusive cluster-count range searched by the gap statistic.
    gap_B : int
        Number of reference datasets drawn per candidate cluster count.
    functions : tuple[str, ...] | None
        Nonconformity function names for the ensemble, or ``None`` to use
        the task default.
    seed : int
        Seed for every internal source of randomness.
    normalize : bool
        Whether features are z-scored with calibration statistics.
    """

    epsilon: float = 0.1
    tau: float = 500.0
    subset_fraction: float = 0.5
    small_threshold: int = 200
    gaussian_c: float = 3.0
    raps_lambda: float = 0.01
    raps_k_reg: int = 1
    knn_k: int = 3
    k_range: tuple[int, int] = (2, 20)
    gap_B: int = 10
    functions: tuple[str, ...] | None = None
    seed: int = 0
    normalize: bool = True

    def validate(self) -> "DetectorConfig":
        """Check every field, raising :class:`ConfigurationError` on the
        first violation.  Returns ``self`` so calls can be chained."""
        if not 0.0 < self.epsilon < 1.0:
            raise ConfigurationError(f"epsilon must be in (0, 1), got {self.epsilon}")
        if not self.tau > 0.0:
            raise ConfigurationError(f"tau must be positive, got {self.tau}")
        if not 0.0 < self.subset_fraction <= 1.0:
            raise ConfigurationError(
                f"subset_fraction must be in (0, 1], got {self.subset_fraction}"
            )
        if not (isinstance(self.small_threshold, int) and self.small_threshold >= 0):
            raise ConfigurationError(
                f"small_threshold must be a non-negative integer, got {self.small_threshold}"
            )
        if not self.gaussian_c > 0.0:
            raise ConfigurationError(f"gaussian_c must be positive, got {self.gaussian_c}")
        if self.raps_lambda < 0.0:
            raise ConfigurationError(f"raps_lambda must be >= 0, got {self.raps_lambda}")
        if not (isinstance(self.raps_k_reg, int) and self.raps_k_reg >= 0):
            raise ConfigurationError(
                f"raps_k_reg must be a non-negative integer, got {self.raps_k_reg}"
            )
        if not (isinstance(self.knn_k, int) and self.knn_k >= 1):
            raise ConfigurationError(f"knn_k must be a positive integer, got {self.knn_k}")
        lo, hi = self.k_range
        if not (isinstance(lo, int) and isinstance(hi, int) and 1 <= lo <= hi):
            raise ConfigurationError(f"k_range must be integers with 1 <= lo <= hi, got {self.k_range}")
        if not (isinstance(self.gap_B, int) and self.gap_B >= 1):
            raise ConfigurationError(f"gap_B must be a positive integer, got {self.gap_B}")
        if self.functions is not None:
            if len(self.functions) == 0:
                raise ConfigurationError("functions must be a non-empty sequence or None")
            for name in self.functions:
                if name not in KNOWN_FUNCTIONS:
                    raise ConfigurationError(
                        f"unknown nonconformity function {name!r}; known: {KNOWN_FUNCTIONS}"
                    )
        if not isinstance(self.seed, int):
            raise ConfigurationError(f"seed must be an integer, got {self.seed!r}")
        if not isinstance(self.normalize, bool):
            raise ConfigurationError(f"normalize must be a bool, got {self.normalize!r}")
        return self

    def replace(self, **changes) -> "DetectorConfig":
        """Return a validated copy with the given fields replaced."""
        return dataclasses.replace(self, **changes).validate()

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["k_range"] = list(self.k_range)
        if self.functions is not None:
            d["functions"] = list(self.functions)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "DetectorConfig":
        """Build a config from a plain dict.  Unknown keys are errors."""
        if not isinstance(data, dict):
            raise ConfigurationError(f"config must be a JSON object, got {type(data).__name__}")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigurationError(f"unknown config keys: {', '.join(unknown)}")
        data = dict(data)
        if "k_range" in data:
            kr = data["k_range"]
            if not (isinstance(kr, (list, tuple)) and len(kr) == 2):
                raise ConfigurationError(f"k_range must be a two-element list, got {kr!r}")
            data["k_range"] = (kr[0], kr[1])
        if data.get("functions") is not None:
            fns = data["functions"]
            if isinstance(fns, str) or not isinstance(fns, (list, tuple)):
                raise ConfigurationError("functions must be a list of names or null")
            data["functions"] = tuple(fns)
        return cls(**data).validate()


def load_config(path: str | Path) -> DetectorConfig:
    """Read a JSON config file into a validated :class:`DetectorConfig`."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config file {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config file {path} is not valid JSON: {exc}") from exc
    return DetectorConfig.from_dict(data)
