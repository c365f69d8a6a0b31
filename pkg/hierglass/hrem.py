"""Hierarchical random energy model.

The Hamiltonian of 2^K spins is evaluated unrolled::

    H(S) = sum_{l=0..K} sum_{b} 2^{l(1-sigma)/2} eps_{l,b}[c_{l,b}(S)]

where c_{l,b}(S) is the code of the 2^l spins of block b at level l. Exact
thermodynamics come from enumerating all 2^(2^K) configurations in one of two
modes:

* table: energies of every block code built bottom-up, level by level;
* stream: tables for the two halves, the top level streamed in fixed chunks.

Both feed the shared log-sum-exp core and agree to rounding.
"""
from __future__ import annotations

import logging
import math
from functools import partial
from typing import Literal, NamedTuple

import numpy as np

from .config import settings
from .disorder import DisorderOracle, ModelTag, SeedStream, keyed_gaussians
from .enumeration import LogSumExpAccumulator, accumulate, reduce_log_partition
from .errors import CapacityError, DimensionError
from .quenched import (
    ConcentrationResult,
    entropy_of,
    free_energy_of,
    sample_records,
)
from .schemas import LOG2, ModelParams, SampleRecord
from .spins import SpinConfiguration, check_length
from .stats import Estimate, binomial_stderr, mean_stderr

logger = logging.getLogger(__name__)

Mode = Literal["auto", "table", "stream"]


def level_scale(level: int, sigma: float) -> float:
    return 2.0 ** (level * (1.0 - sigma) / 2.0)


def _require_hrem(params: ModelParams) -> None:
    if params.kind != "hrem":
        raise DimensionError(f"expected hrem parameters, got {params.kind}")


def _level_weight(params: ModelParams, level: int, top_weight: float) -> float:
    weight = level_scale(level, params.sigma)
    return weight * top_weight if level == params.depth else weight


def block_energy(
    code: int,
    level: int,
    block: int,
    params: ModelParams,
    oracle: DisorderOracle,
    *,
    top_weight: float = 1.0,
) -> float:
    """Energy of the level-`level` block `block` whose 2^level spins have `code`.

    The whole system is block 0 at level K.
    """
    total = 0.0
    for lv in range(level + 1):
        size = 1 << lv
        n_sub = 1 << (level - lv)
        first = block << (level - lv)
        codes = np.array([(code >> (j * size)) & ((1 << size) - 1) for j in range(n_sub)], dtype=np.uint64)
        eps = oracle.hrem(lv, np.arange(first, first + n_sub, dtype=np.uint64), codes)
        total += _level_weight(params, lv, top_weight) * float(eps.sum())
    return total


def hrem_energy(config: SpinConfiguration, params: ModelParams, oracle: DisorderOracle, *, top_weight: float = 1.0) -> float:
    """Energy of one configuration.

    Raises:
        DimensionError: If the configuration length is not 2^K.
    """
    _require_hrem(params)
    check_length(config, params.n_spins)
    return block_energy(config.bits, params.depth, 0, params, oracle, top_weight=top_weight)


def hrem_energy_over_seeds(config: SpinConfiguration, params: ModelParams, seeds: np.ndarray) -> np.ndarray:
    """Energy of a fixed configuration under many disorder seeds at once."""
    _require_hrem(params)
    check_length(config, params.n_spins)
    seeds = np.asarray(seeds, dtype=np.uint64)
    total = np.zeros(seeds.shape)
    for level in range(params.depth + 1):
        size = 1 << level
        for b in range(params.n_blocks(level)):
            eps = keyed_gaussians(seeds, ModelTag.HREM, level, b, config.block_code(b * size, size))
            total += level_scale(level, params.sigma) * eps
    return total


def block_energy_table(
    params: ModelParams,
    oracle: DisorderOracle,
    level: int,
    block: int,
    *,
    top_weight: float = 1.0,
) -> np.ndarray:
    """Energies of every code of one block, indexed by code.

    Built bottom-up: a level-l table is the outer sum of its two children's
    tables (right child in the high bits) plus the level-l energies.
    """
    first_leaf = block << level
    leaf_blocks = np.arange(first_leaf, first_leaf + (1 << level), dtype=np.uint64)
    leaves = oracle.hrem(0, leaf_blocks[:, None], np.arange(2, dtype=np.uint64)[None, :])
    tables = [leaves[j] * _level_weight(params, 0, top_weight) for j in range(len(leaves))]
    for lv in range(1, level + 1):
        n_sub = 1 << (level - lv)
        first = block << (level - lv)
        codes = np.arange(1 << (1 << lv), dtype=np.uint64)
        weight = _level_weight(params, lv, top_weight)
        eps = oracle.hrem(lv, np.arange(first, first + n_sub, dtype=np.uint64)[:, None], codes[None, :])
        tables = [
            (tables[2 * j + 1][:, None] + tables[2 * j][None, :]).ravel() + weight * eps[j]
            for j in range(n_sub)
        ]
    return tables[0]


def energy_table(params: ModelParams, oracle: DisorderOracle, *, top_weight: float = 1.0) -> np.ndarray:
    """Energies of all 2^(2^K) configurations, indexed by configuration code."""
    _require_hrem(params)
    return block_energy_table(params, oracle, params.depth, 0, top_weight=top_weight)


def _stream_energies(
    params: ModelParams,
    oracle: DisorderOracle,
    left: np.ndarray,
    right: np.ndarray,
    top_weight: float,
    start: int,
    stop: int,
) -> np.ndarray:
    codes = np.arange(start, stop, dtype=np.uint64)
    half_bits = np.uint64(params.n_spins // 2)
    low = codes & ((np.uint64(1) << half_bits) - np.uint64(1))
    high = codes >> half_bits
    weight = _level_weight(params, params.depth, top_weight)
    return right[high] + left[low] + weight * oracle.hrem(params.depth, 0, codes)


def resolve_mode(
    params: ModelParams, mode: Mode = "auto", table_budget: int | None = None
) -> Literal["table", "stream"]:
    """Pick the enumeration strategy allowed by the configured budgets.

    Raises:
        CapacityError: If neither strategy fits; Monte Carlo is the way out.
    """
    n_configs = params.n_configs
    table_budget = settings.table_max_entries if table_budget is None else table_budget
    table_ok = n_configs <= table_budget
    half_entries = 1 << (params.n_spins // 2)
    stream_ok = params.depth >= 1 and n_configs <= settings.stream_max_configs and half_entries <= table_budget
    if mode == "table" and not table_ok:
        raise CapacityError(
            f"table mode needs {n_configs} entries > budget {table_budget}; use stream or mc"
        )
    if mode == "stream" and not stream_ok:
        raise CapacityError(f"streaming {n_configs} configurations exceeds the budget; use the mc method")
    if mode == "auto":
        if table_ok:
            return "table"
        if stream_ok:
            return "stream"
        raise CapacityError(
            f"K={params.depth} has {n_configs} configurations, beyond the enumeration budget; use the mc method"
        )
    return mode


def _accumulate(
    params: ModelParams,
    oracle: DisorderOracle,
    mode: Mode,
    top_weight: float,
    chunk_size: int | None,
    workers: int,
    table_budget: int | None,
) -> tuple[LogSumExpAccumulator, str]:
    resolved = resolve_mode(params, mode, table_budget)
    if resolved == "table":
        return accumulate(energy_table(params, oracle, top_weight=top_weight), params.beta), "enumerate-table"
    left = block_energy_table(params, oracle, params.depth - 1, 0)
    right = block_energy_table(params, oracle, params.depth - 1, 1)
    energy_fn = partial(_stream_energies, params, oracle, left, right, top_weight)
    acc = reduce_log_partition(energy_fn, params.n_configs, params.beta, chunk_size or settings.chunk_size, workers)
    return acc, "enumerate-stream"


def exact_log_partition(
    params: ModelParams,
    oracle: DisorderOracle,
    *,
    mode: Mode = "auto",
    t: float = 1.0,
    chunk_size: int | None = None,
    workers: int = 1,
    table_budget: int | None = None,
) -> SampleRecord:
    """Exact log Z, <H> and ground state of one realization by enumeration.

    Args:
        params: HREM parameters (beta included).
        oracle: Disorder of this realization.
        mode: "table", "stream" or "auto" (table when it fits).
        t: Interpolation parameter; the top-level energies are scaled by sqrt(t).
        chunk_size: Streaming chunk size; defaults to the configured one.
        workers: Processes used over streaming chunks.
        table_budget: Largest table-mode configuration count; defaults to the
            configured one.
    """
    _require_hrem(params)
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t must lie in [0, 1], got {t}")
    acc, method = _accumulate(params, oracle, mode, math.sqrt(t), chunk_size, workers, table_budget)
    log_z = params.n_spins * LOG2 if params.beta == 0.0 else acc.log_z
    return SampleRecord.build(
        params, oracle.master_seed, log_z, acc.mean_energy, method, min_energy=acc.min_energy, t=t
    )


def decoupled_log_partition(params: ModelParams, oracle: DisorderOracle) -> float:
    """log Z of the two halves without the top-level coupling (sum of halves)."""
    _require_hrem(params)
    if params.depth < 1:
        raise DimensionError("decoupling needs depth >= 1")
    total = 0.0
    for half in (0, 1):
        table = block_energy_table(params, oracle, params.depth - 1, half)
        total += params.n_spins // 2 * LOG2 if params.beta == 0.0 else accumulate(table, params.beta).log_z
    return total


def quenched_free_energy(
    params: ModelParams,
    n_samples: int,
    seed_stream: SeedStream,
    *,
    mode: Mode = "auto",
    workers: int = 1,
    progress: bool = False,
) -> Estimate:
    """Mean and standard error of log Z / N over independent disorder samples.

    Raises:
        ValueError: If fewer than two samples are requested.
        CapacityError: Propagated from enumeration.
    """
    if n_samples < 2:
        raise ValueError(f"n_samples must be >= 2, got {n_samples}")
    records = sample_records(
        partial(exact_log_partition, mode=mode), params, n_samples, seed_stream, workers=workers, progress=progress
    )
    return free_energy_of(records)


def entropy_estimate(
    params: ModelParams,
    n_samples: int,
    seed_stream: SeedStream,
    *,
    mode: Mode = "auto",
    workers: int = 1,
    progress: bool = False,
) -> Estimate:
    """Finite-volume entropy beta*E[<H>]/N + f, paired per sample."""
    if n_samples < 2:
        raise ValueError(f"n_samples must be >= 2, got {n_samples}")
    records = sample_records(
        partial(exact_log_partition, mode=mode), params, n_samples, seed_stream, workers=workers, progress=progress
    )
    return entropy_of(records)


def interpolated_free_energy(
    params: ModelParams,
    t: float,
    n_samples: int,
    seed_stream: SeedStream,
    *,
    workers: int = 1,
) -> Estimate:
    """Quenched free energy with the top-level energies scaled by sqrt(t).

    t = 1 is the model itself; t = 0 decouples the two halves.
    """
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t must lie in [0, 1], got {t}")
    records = sample_records(partial(exact_log_partition, t=t), params, n_samples, seed_stream, workers=workers)
    return free_energy_of(records)


def concentration_bound(depth: int, sigma: float, beta: float) -> float:
    """Tail bound 2 exp[-2^{K/2} (2^s - 1) / (2 2^s beta^2)] on |log Z/N - f| >= 2^{-K/4}."""
    if beta == 0.0:
        return 0.0
    two_s = 2.0 ** sigma
    return 2.0 * math.exp(-(2.0 ** (depth / 2.0)) * (two_s - 1.0) / (2.0 * two_s * beta * beta))


def concentration_probe(
    params: ModelParams,
    n_samples: int,
    seed_stream: SeedStream,
    *,
    workers: int = 1,
) -> ConcentrationResult:
    """Empirical fraction of samples whose log Z / N deviates by >= 2^{-K/4}.

    The sample mean over the same samples stands in for the exact free energy.
    """
    if n_samples < 2:
        raise ValueError(f"n_samples must be >= 2, got {n_samples}")
    records = sample_records(exact_log_partition, params, n_samples, seed_stream, workers=workers)
    values = np.array([r.log_z_per_spin for r in records])
    f_mean = free_energy_of(records).mean
    threshold = 2.0 ** (-params.depth / 4.0)
    fraction = float(np.mean(np.abs(values - f_mean) >= threshold))
    return ConcentrationResult(
        fraction=fraction,
        bound=concentration_bound(params.depth, params.sigma, params.beta),
        threshold=threshold,
        f_mean=f_mean,
        binomial_stderr=binomial_stderr(fraction, n_samples),
        n=n_samples,
    )


class Tau2(NamedTuple):
    value: float
    bound: float


def variance_tau2(depth: int, sigma: float) -> Tau2:
    """Variance of H at any configuration and its geometric upper bound."""
    if depth < 0:
        raise ValueError(f"depth must be >= 0, got {depth}")
    value = sum(2.0 ** (depth - l) * 2.0 ** (l * (1.0 - sigma)) for l in range(depth + 1))
    two_s = 2.0 ** sigma
    bound = 2.0 ** depth * two_s / (two_s - 1.0) if sigma > 0 else math.inf
    return Tau2(value, bound)


def energy_second_moment(
    config: SpinConfiguration, params: ModelParams, n_samples: int, seed_stream: SeedStream
) -> Estimate:
    """E[H(S)^2] at a fixed configuration over disorder seeds; variance_tau2 in expectation."""
    seeds = np.array(seed_stream.take(n_samples), dtype=np.uint64)
    return mean_stderr(hrem_energy_over_seeds(config, params, seeds) ** 2)


def decoupling_gap(params: ModelParams, seeds: list[int]) -> float:
    """Largest |log Z_{t=0} - (log Z_left + log Z_right)| over the given realizations."""
    gaps = []
    for seed in seeds:
        oracle = DisorderOracle(seed, params)
        gaps.append(abs(exact_log_partition(params, oracle, t=0.0).log_z - decoupled_log_partition(params, oracle)))
    return max(gaps, default=0.0)


def jensen_step_bound(depth: int, sigma: float, beta: float) -> float:
    """Largest possible increase f_K - f_{K-1} allowed by averaging the top level."""
    return beta * beta / 2.0 * 2.0 ** (-depth * sigma)


def interaction_covariance_exact(a: SpinConfiguration, b: SpinConfiguration, params: ModelParams) -> float:
    """Covariance of the top-level interaction energies at two configurations."""
    check_length(a, params.n_spins)
    check_length(b, params.n_spins)
    return 2.0 ** (params.depth * (1.0 - params.sigma)) if a.bits == b.bits else 0.0


def empirical_interaction_covariance(
    a: SpinConfiguration,
    b: SpinConfiguration,
    params: ModelParams,
    n_samples: int,
    seed_stream: SeedStream,
) -> Estimate:
    """Monte Carlo counterpart of `interaction_covariance_exact` over seeds."""
    check_length(a, params.n_spins)
    check_length(b, params.n_spins)
    seeds = np.array(seed_stream.take(n_samples), dtype=np.uint64)
    weight = level_scale(params.depth, params.sigma)
    eta_a = weight * keyed_gaussians(seeds, ModelTag.HREM, params.depth, 0, a.bits)
    eta_b = weight * keyed_gaussians(seeds, ModelTag.HREM, params.depth, 0, b.bits)
    return mean_stderr(eta_a * eta_b)
