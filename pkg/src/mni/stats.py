"""Small statistics containers shared by the Monte Carlo estimators."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Estimate:
    """A Monte Carlo mean with its standard error."""

    value: float
    stderr: float

    def within(self, target: float, k: float = 3.0) -> bool:
        return abs(self.value - target) <= k * self.stderr


def mean_estimate(values: np.ndarray) -> Estimate:
    """Sample mean and standard error of a 1-d array (numpy's pairwise
    summation keeps the reduction machine-deterministic for a fixed order)."""
    values = np.asarray(values, dtype=np.float64)
    m = values.size
    mean = float(values.mean())
    if m < 2:
        return Estimate(mean, float("inf"))
    stderr = float(values.std(ddof=1) / np.sqrt(m))
    return Estimate(mean, stderr)
