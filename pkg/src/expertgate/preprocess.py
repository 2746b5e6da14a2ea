"""Shared input preprocessing: standardize with reference statistics, then sigmoid.

Every gate in an ensemble must use the same ReferenceStats object so their
reconstruction errors stay comparable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, InsufficientDataError
from .nn_core import as_matrix, sigmoid

EPS_STD = 1e-6  # floor on per-dimension standard deviation


@dataclass(frozen=True)
class ReferenceStats:
    mean: np.ndarray
    std: np.ndarray
    source_id: str

    def __post_init__(self):
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=np.float32).reshape(-1))
        object.__setattr__(self, "std", np.asarray(self.std, dtype=np.float32).reshape(-1))
        if self.mean.shape != self.std.shape:
            raise DimensionError("mean/std length mismatch")
        if np.any(self.std < EPS_STD):
            raise DimensionError(f"std entries must be >= {EPS_STD}")

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


def compute_reference_stats(corpus, source_id: str = "reference") -> ReferenceStats:
    """Per-dimension mean and population std of the reference corpus."""
    x = as_matrix(corpus)
    if x.shape[0] < 2:
        raise InsufficientDataError("need at least 2 reference samples")
    mean = x.mean(axis=0)
    std = np.maximum(x.std(axis=0), EPS_STD)
    return ReferenceStats(mean, std, source_id)


EPS_OUT = 1e-7  # keeps float32 sigmoid saturation strictly inside (0, 1)


def preprocess(x, stats: ReferenceStats) -> np.ndarray:
    """sigmoid((x - mean) / std), elementwise; output strictly in (0, 1)."""
    a = as_matrix(x)
    if a.shape[1] != stats.dim:
        raise DimensionError(f"input has {a.shape[1]} dims, stats expect {stats.dim}")
    return np.clip(sigmoid((a - stats.mean) / stats.std), EPS_OUT, 1.0 - EPS_OUT)
