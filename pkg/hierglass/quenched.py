"""Disorder averages over independent samples, shared by both models."""
from __future__ import annotations

import logging
from collections.abc import Callable, Sequence
from functools import partial
from typing import NamedTuple

import numpy as np
from tqdm import tqdm

from .disorder import DisorderOracle, SeedStream
from .enumeration import ordered_map
from .schemas import ModelParams, SampleRecord
from .stats import Estimate, mean_stderr

logger = logging.getLogger(__name__)

LogPartition = Callable[[ModelParams, DisorderOracle], SampleRecord]


def _record_for_seed(log_partition: LogPartition, params: ModelParams, seed: int) -> SampleRecord:
    return log_partition(params, DisorderOracle(seed, params))


def sample_records(
    log_partition: LogPartition,
    params: ModelParams,
    n_samples: int,
    seed_stream: SeedStream,
    *,
    workers: int = 1,
    progress: bool = False,
) -> list[SampleRecord]:
    """One record per disorder sample, in seed order.

    Args:
        log_partition: Per-realization solver, e.g. a partial of an exact enumerator.
        params: Model parameters shared by every sample.
        n_samples: Number of disorder samples.
        seed_stream: Source of per-sample seeds; sample i always gets seed i.
        workers: Processes used across samples.
        progress: Show a tqdm bar (serial runs only).
    """
    seeds = seed_stream.take(n_samples)
    fn = partial(_record_for_seed, log_partition, params)
    if workers <= 1 and progress:
        return [fn(s) for s in tqdm(seeds, desc=f"{params.kind} K={params.depth} beta={params.beta:g}", leave=False)]
    return ordered_map(fn, seeds, workers)


def free_energy_of(records: Sequence[SampleRecord]) -> Estimate:
    """Quenched per-spin free energy: mean of log Z / N over samples."""
    return mean_stderr([r.log_z_per_spin for r in records])


def entropy_of(records: Sequence[SampleRecord]) -> Estimate:
    """Per-sample entropy beta*<H>/N + log Z/N, averaged over the same samples."""
    return mean_stderr([r.entropy for r in records])


class ConcentrationResult(NamedTuple):
    fraction: float
    bound: float
    threshold: float
    f_mean: float
    binomial_stderr: float
    n: int


class SelfAveragingPoint(NamedTuple):
    depth: int
    free_energy: Estimate
    spread: float


def self_averaging_scan(
    log_partition: LogPartition,
    params: ModelParams,
    depths: Sequence[int],
    n_samples: int,
    seed_stream: SeedStream,
    *,
    workers: int = 1,
) -> list[SelfAveragingPoint]:
    """Sample spread of log Z / N for each depth; it should shrink with volume."""
    points = []
    for depth in depths:
        records = sample_records(log_partition, params.with_depth(depth), n_samples, seed_stream, workers=workers)
        values = np.array([r.log_z_per_spin for r in records])
        spread = float(values.std(ddof=1)) if len(values) > 1 else 0.0
        points.append(SelfAveragingPoint(depth, free_energy_of(records), spread))
        logger.info("depth %d: f=%.6f spread=%.3g", depth, points[-1].free_energy.mean, spread)
    return points
