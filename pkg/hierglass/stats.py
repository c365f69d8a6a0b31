"""Sample statistics shared by the estimators."""
from __future__ import annotations

import math
from collections.abc import Callable, Sequence
from typing import NamedTuple

import numpy as np


class Estimate(NamedTuple):
    """A mean with its standard error over `n` samples (or bins)."""
    mean: float
    stderr: float
    n: int


def mean_stderr(values: Sequence[float] | np.ndarray) -> Estimate:
    """Sample mean and standard error of the mean.

    Identical samples give a stderr of exactly zero.
    """
    arr = np.asarray(values, dtype=np.float64)
    n = arr.size
    if n == 0:
        raise ValueError("mean_stderr needs at least one value")
    if n == 1 or np.all(arr == arr[0]):
        return Estimate(float(arr[0]), 0.0, n)
    return Estimate(float(arr.mean()), float(arr.std(ddof=1) / math.sqrt(n)), n)


def paired_difference(a: Sequence[float], b: Sequence[float]) -> Estimate:
    """Mean of a_i - b_i over paired samples, with its standard error."""
    a_arr = np.asarray(a, dtype=np.float64)
    b_arr = np.asarray(b, dtype=np.float64)
    if a_arr.shape != b_arr.shape:
        raise ValueError(f"paired samples differ in shape: {a_arr.shape} vs {b_arr.shape}")
    return mean_stderr(a_arr - b_arr)


def combined_stderr(*errors: float) -> float:
    return math.sqrt(sum(e * e for e in errors))


def binomial_stderr(fraction: float, n: int) -> float:
    return math.sqrt(max(fraction * (1.0 - fraction), 0.0) / n)


def discard_equilibration(series: np.ndarray, fraction: float = 0.2) -> np.ndarray:
    """Drop the leading `fraction` of a time series."""
    series = np.asarray(series)
    return series[int(len(series) * fraction):]


def jackknife(
    series: Sequence[float] | np.ndarray,
    n_bins: int = 16,
    estimator: Callable[[np.ndarray], float] = np.mean,
) -> Estimate:
    """Binned jackknife estimate and error of `estimator` over a time series.

    The series is cut into `n_bins` contiguous bins (the tail that does not
    fill a bin is dropped); leave-one-bin-out estimates give the error.
    """
    data = np.asarray(series, dtype=np.float64)
    bin_size = len(data) // n_bins
    if bin_size == 0:
        raise ValueError(f"need at least {n_bins} points for a {n_bins}-bin jackknife, got {len(data)}")
    data = data[: n_bins * bin_size]
    bins = data.reshape(n_bins, bin_size)
    full = float(estimator(data))
    leave_one_out = np.array([
        estimator(np.concatenate([bins[:i], bins[i + 1:]]).ravel()) for i in range(n_bins)
    ])
    spread = float(np.sum((leave_one_out - leave_one_out.mean()) ** 2) * (n_bins - 1) / n_bins)
    return Estimate(full, math.sqrt(spread), n_bins)
