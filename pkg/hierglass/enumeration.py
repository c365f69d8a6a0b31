"""Streaming log-sum-exp over enumerated energies.

Configuration ranges are cut at fixed boundaries (independent of the worker
count) and the per-range partial sums are merged in ascending range order, so
the result does not depend on how many processes computed it.
"""
from __future__ import annotations

import math
from collections.abc import Callable, Iterable
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial
from typing import TypeVar

import numpy as np

T = TypeVar("T")
R = TypeVar("R")


@dataclass(slots=True)
class LogSumExpAccumulator:
    """Running sums of Boltzmann weights shifted by the running maximum.

    Attributes:
        shift: Largest log-weight -beta*H seen so far.
        weight_sum: Sum of exp(-beta*H - shift).
        energy_sum: Sum of H * exp(-beta*H - shift).
        min_energy: Ground-state energy seen so far.
        count: Number of configurations accumulated.
    """
    shift: float = -math.inf
    weight_sum: float = 0.0
    energy_sum: float = 0.0
    min_energy: float = math.inf
    count: int = 0

    def _rescale(self, new_shift: float) -> None:
        if new_shift > self.shift:
            factor = 0.0 if self.shift == -math.inf else math.exp(self.shift - new_shift)
            self.weight_sum *= factor
            self.energy_sum *= factor
            self.shift = new_shift

    def add(self, energies: np.ndarray, beta: float) -> "LogSumExpAccumulator":
        energies = np.asarray(energies, dtype=np.float64)
        if energies.size == 0:
            return self
        log_w = -beta * energies
        self._rescale(float(log_w.max()))
        w = np.exp(log_w - self.shift)
        self.weight_sum += float(w.sum())
        self.energy_sum += float(np.dot(w, energies))
        self.min_energy = min(self.min_energy, float(energies.min()))
        self.count += int(energies.size)
        return self

    def merge(self, other: "LogSumExpAccumulator") -> "LogSumExpAccumulator":
        if other.count == 0:
            return self
        self._rescale(other.shift)
        factor = math.exp(other.shift - self.shift)
        self.weight_sum += other.weight_sum * factor
        self.energy_sum += other.energy_sum * factor
        self.min_energy = min(self.min_energy, other.min_energy)
        self.count += other.count
        return self

    @property
    def log_z(self) -> float:
        return self.shift + math.log(self.weight_sum)

    @property
    def mean_energy(self) -> float:
        return self.energy_sum / self.weight_sum


def chunk_ranges(n_items: int, chunk_size: int) -> list[tuple[int, int]]:
    """Half-open [start, stop) ranges of at most `chunk_size` items."""
    if chunk_size < 1:
        raise ValueError("chunk_size must be >= 1")
    return [(start, min(start + chunk_size, n_items)) for start in range(0, n_items, chunk_size)]


def ordered_map(fn: Callable[[T], R], items: Iterable[T], workers: int = 1) -> list[R]:
    """Map `fn` over `items`, in input order, optionally across processes.

    `fn` must be picklable (a module-level function or a partial of one) when
    `workers > 1`.
    """
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _partial_sum(energy_fn: Callable[[int, int], np.ndarray], beta: float, bounds: tuple[int, int]) -> LogSumExpAccumulator:
    return LogSumExpAccumulator().add(energy_fn(*bounds), beta)


def reduce_log_partition(
    energy_fn: Callable[[int, int], np.ndarray],
    n_configs: int,
    beta: float,
    chunk_size: int,
    workers: int = 1,
) -> LogSumExpAccumulator:
    """Log-sum-exp over all configuration codes in [0, n_configs).

    Args:
        energy_fn: Maps a code range (start, stop) to the energies of those codes.
        n_configs: Total number of configurations.
        beta: Inverse temperature.
        chunk_size: Codes per range; fixes the merge order.
        workers: Processes used to evaluate the ranges.
    """
    partials = ordered_map(partial(_partial_sum, energy_fn, beta), chunk_ranges(n_configs, chunk_size), workers)
    total = LogSumExpAccumulator()
    for part in partials:
        total.merge(part)
    return total


def accumulate(energies: np.ndarray, beta: float) -> LogSumExpAccumulator:
    return LogSumExpAccumulator().add(energies, beta)
