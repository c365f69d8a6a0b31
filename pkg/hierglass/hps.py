"""Hierarchical p-spin model.

Every level-l block (p^l spins, l = 1..K) carries its own p-body term over the
sites inside it::

    H(S) = field_strength * sum_i h_i S_i
           + sum_{l=1..K} sum_b a_l sum_{i1>...>ip in b} J S_i1...S_ip,
    a_l = -sqrt(p!) / p^{l(p - 2(1 - sigma))/2}

Couplings are addressed by the colexicographic rank of the tuple inside its
block and drawn from the disorder oracle; an `HpsInstance` caches them per level
when the instance is small enough.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache, partial
from typing import NamedTuple

import numpy as np

from .config import settings
from .disorder import DisorderOracle, ModelTag, SeedStream
from .enumeration import reduce_log_partition
from .errors import CapacityError, DimensionError
from .quenched import free_energy_of, sample_records
from .schemas import LOG2, ModelParams, SampleRecord
from .spins import SpinConfiguration, check_length, spin_matrix
from .stats import Estimate, mean_stderr

logger = logging.getLogger(__name__)

# Products of spins per chunk; bounds the (configs x terms) work matrix.
_TERM_BUDGET = 1 << 22
_SEED_BATCH = 4096


def colex_rank(indices: tuple[int, ...] | list[int]) -> int:
    """Rank of a set of distinct indices in colexicographic order: sum_m C(c_m, m)."""
    ordered = sorted(indices)
    if len(set(ordered)) != len(ordered) or (ordered and ordered[0] < 0):
        raise ValueError(f"indices must be distinct and >= 0, got {indices}")
    return sum(math.comb(c, m) for m, c in enumerate(ordered, start=1))


def colex_unrank(rank: int, p: int) -> tuple[int, ...]:
    """Inverse of `colex_rank`; returns the tuple in decreasing order i1 > ... > ip."""
    if rank < 0:
        raise ValueError(f"rank must be >= 0, got {rank}")
    out = []
    remaining = rank
    for m in range(p, 0, -1):
        c = m - 1
        while math.comb(c + 1, m) <= remaining:
            c += 1
        out.append(c)
        remaining -= math.comb(c, m)
    return tuple(out)


@lru_cache(maxsize=16)
def block_tuples(block_size: int, p: int) -> np.ndarray:
    """All p-subsets of range(block_size) as rows, row r holding the tuple of rank r."""
    combos = sorted(itertools.combinations(range(block_size), p), key=lambda c: c[::-1])
    out = np.array(combos, dtype=np.int64).reshape(-1, p)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, slots=True)
class CouplingIndex:
    """Address of one coupling J: level, block and the tuple's colex rank."""
    level: int
    block: int
    rank: int

    @classmethod
    def from_sites(cls, level: int, block: int, sites: tuple[int, ...], params: ModelParams) -> "CouplingIndex":
        """Build from global site indices, which must all lie in the block."""
        size = params.block_size(level)
        start = block * size
        if any(not start <= s < start + size for s in sites):
            raise ValueError(f"sites {sites} outside block {block} at level {level}")
        return cls(level, block, colex_rank([s - start for s in sites]))

    def local_tuple(self, p: int) -> tuple[int, ...]:
        return colex_unrank(self.rank, p)

    def sites(self, params: ModelParams) -> tuple[int, ...]:
        start = self.block * params.block_size(self.level)
        return tuple(start + i for i in self.local_tuple(params.p))


@dataclass(frozen=True, slots=True)
class OverlapPair:
    """Two configurations of equal length and their overlap."""
    first: SpinConfiguration
    second: SpinConfiguration

    def __post_init__(self) -> None:
        if self.first.n_spins != self.second.n_spins:
            raise DimensionError(f"pair lengths differ: {self.first.n_spins} vs {self.second.n_spins}")

    @property
    def overlap(self) -> float:
        return self.first.overlap(self.second)

    @property
    def agreements(self) -> int:
        """Number m of sites with S_i S'_i = +1."""
        n = self.first.n_spins
        return n - (self.first.bits ^ self.second.bits).bit_count()


def level_prefactor(level: int, p: int, sigma: float) -> float:
    return -math.sqrt(math.factorial(p)) / p ** (level * (p - 2.0 * (1.0 - sigma)) / 2.0)


def coupling_count(params: ModelParams) -> int:
    """Total number of couplings over all levels and blocks."""
    return sum(params.n_blocks(l) * math.comb(params.block_size(l), params.p) for l in range(1, params.depth + 1))


def _require_hps(params: ModelParams) -> None:
    if params.kind != "hps":
        raise DimensionError(f"expected hps parameters, got {params.kind}")


@dataclass(slots=True)
class HpsInstance:
    """One disorder realization with lazily built per-level coupling arrays.

    Level arrays have shape (n_blocks, C(p^l, p)). They are kept when the total
    coupling count is below the configured cache limit.
    """
    params: ModelParams
    oracle: DisorderOracle
    top_weight: float = 1.0
    _cache: dict[int, np.ndarray] = field(default_factory=dict, repr=False)
    _fields: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        _require_hps(self.params)

    @property
    def cacheable(self) -> bool:
        return coupling_count(self.params) < settings.coupling_cache_limit

    def couplings(self, level: int) -> np.ndarray:
        if level in self._cache:
            return self._cache[level]
        params = self.params
        n_tuples = math.comb(params.block_size(level), params.p)
        blocks = np.arange(params.n_blocks(level), dtype=np.uint64)[:, None]
        values = self.oracle.coupling(level, blocks, np.arange(n_tuples, dtype=np.uint64)[None, :])
        values = np.broadcast_to(values, (len(blocks), n_tuples))
        if self.cacheable:
            self._cache[level] = values
        return values

    def fields(self) -> np.ndarray:
        if self._fields is None:
            self._fields = self.params.field_strength * self.oracle.fields()
        return self._fields

    def weight(self, level: int) -> float:
        w = level_prefactor(level, self.params.p, self.params.sigma)
        return w * self.top_weight if level == self.params.depth else w

    def level_sites(self, level: int) -> np.ndarray:
        """Global site indices of every term at `level`, shape (n_blocks * C, p)."""
        size = self.params.block_size(level)
        starts = np.arange(self.params.n_blocks(level), dtype=np.int64) * size
        return (starts[:, None, None] + block_tuples(size, self.params.p)[None, :, :]).reshape(-1, self.params.p)

    def level_terms(self, spins: np.ndarray, level: int) -> np.ndarray:
        """Per-configuration value of sum_b sum_tuples J * prod S at `level` (unweighted)."""
        sites = self.level_sites(level)
        products = np.prod(spins[:, sites], axis=-1, dtype=np.int64)
        return products @ self.couplings(level).ravel()

    def energies_of_spins(self, spins: np.ndarray) -> np.ndarray:
        """Energies of a (m, N) matrix of +/-1 spins."""
        spins = np.atleast_2d(spins)
        if spins.shape[1] != self.params.n_spins:
            raise DimensionError(f"configuration has {spins.shape[1]} spins, model needs {self.params.n_spins}")
        total = spins.astype(np.float64) @ self.fields()
        for level in range(1, self.params.depth + 1):
            total = total + self.weight(level) * self.level_terms(spins, level)
        return total

    def energies(self, codes: np.ndarray) -> np.ndarray:
        return self.energies_of_spins(spin_matrix(codes, self.params.n_spins))

    def range_energies(self, start: int, stop: int) -> np.ndarray:
        return self.energies(np.arange(start, stop, dtype=np.uint64))

    def block_energy(self, spins: np.ndarray, level: int, block: int) -> float:
        """Energy of block `block` at `level`: its fields and every term inside it."""
        size = self.params.block_size(level)
        lo, hi = block * size, (block + 1) * size
        s = np.asarray(spins)
        total = float(s[lo:hi].astype(np.float64) @ self.fields()[lo:hi])
        for lv in range(1, level + 1):
            sub = self.params.block_size(lv)
            first, count = lo // sub, size // sub
            sites = self.level_sites(lv).reshape(self.params.n_blocks(lv), -1, self.params.p)[first:first + count]
            products = np.prod(s[sites], axis=-1, dtype=np.int64)
            total += self.weight(lv) * float(np.sum(products * self.couplings(lv)[first:first + count]))
        return total

    def top_term(self, spins: np.ndarray) -> float:
        """Weighted top-level p-body energy of one configuration."""
        if self.params.depth == 0:
            return 0.0
        return self.weight(self.params.depth) * float(self.level_terms(np.atleast_2d(spins), self.params.depth)[0])


def hps_energy(config: SpinConfiguration, params: ModelParams, oracle: DisorderOracle) -> float:
    """Energy of one configuration.

    Raises:
        DimensionError: If the configuration length is not p^K.
    """
    _require_hps(params)
    check_length(config, params.n_spins)
    return float(HpsInstance(params, oracle).energies_of_spins(config.spins()[None, :])[0])


def enumeration_budget(long_run: bool = False) -> int:
    return settings.hps_long_run_max_configs if long_run else settings.hps_max_configs


def _chunk_size(params: ModelParams) -> int:
    n_terms = max(1, sum(math.comb(params.block_size(l), params.p) * params.n_blocks(l) for l in range(1, params.depth + 1)))
    return max(1, min(settings.chunk_size, _TERM_BUDGET // n_terms))


def hps_exact_log_partition(
    params: ModelParams,
    oracle: DisorderOracle,
    *,
    t: float = 1.0,
    long_run: bool = False,
    workers: int = 1,
) -> SampleRecord:
    """Exact log Z, <H> and ground state of one realization by enumeration.

    Raises:
        CapacityError: If p^K spins exceed the routine budget (or the long-run one).
    """
    _require_hps(params)
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t must lie in [0, 1], got {t}")
    budget = enumeration_budget(long_run)
    if params.n_configs > budget:
        hint = "" if long_run else "; pass the long-run flag or"
        raise CapacityError(
            f"p={params.p}, K={params.depth} has {params.n_configs} configurations > budget {budget}{hint} use the mc method"
        )
    instance = HpsInstance(params, oracle, top_weight=math.sqrt(t))
    acc = reduce_log_partition(instance.range_energies, params.n_configs, params.beta, _chunk_size(params), workers)
    log_z = params.n_spins * LOG2 if params.beta == 0.0 else acc.log_z
    return SampleRecord.build(
        params, oracle.master_seed, log_z, acc.mean_energy, "enumerate", min_energy=acc.min_energy, t=t
    )


def hps_quenched_free_energy(
    params: ModelParams,
    n_samples: int,
    seed_stream: SeedStream,
    *,
    long_run: bool = False,
    workers: int = 1,
    progress: bool = False,
) -> Estimate:
    """Mean and standard error of log Z / N over independent disorder samples."""
    if n_samples < 2:
        raise ValueError(f"n_samples must be >= 2, got {n_samples}")
    solver = partial(hps_exact_log_partition, long_run=long_run)
    return free_energy_of(sample_records(solver, params, n_samples, seed_stream, workers=workers, progress=progress))


def hps_interpolated_free_energy(
    params: ModelParams,
    t: float,
    n_samples: int,
    seed_stream: SeedStream,
    *,
    long_run: bool = False,
    workers: int = 1,
) -> Estimate:
    """Quenched free energy with the top-level p-body term scaled by sqrt(t)."""
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t must lie in [0, 1], got {t}")
    solver = partial(hps_exact_log_partition, t=t, long_run=long_run)
    return free_energy_of(sample_records(solver, params, n_samples, seed_stream, workers=workers))


class JensenStep(NamedTuple):
    value: float
    bound: float


def hps_jensen_step(depth: int, p: int, sigma: float, beta: float) -> JensenStep:
    """Jensen increment of f from adding the depth-`depth` p-body term, and its bound."""
    n = p ** depth
    falling = math.perm(n, p)
    value = beta * beta * falling / (2.0 * p ** (depth * (2.0 * sigma - 1.0 + p)))
    bound = beta * beta / 2.0 * p ** (depth * (1.0 - 2.0 * sigma))
    return JensenStep(value, bound)


def elementary_symmetric(m: int, n: int, p: int) -> int:
    """e_p of a +/-1 vector of length n with m entries equal to +1."""
    return sum(math.comb(m, j) * math.comb(n - m, p - j) * (-1) ** (p - j) for j in range(p + 1))


def _covariance_scale(params: ModelParams) -> float:
    return math.factorial(params.p) / params.p ** (params.depth * (params.p - 2.0 * (1.0 - params.sigma)))


def eta_covariance_exact(pair: OverlapPair, params: ModelParams) -> float:
    """Covariance of the top-level interaction energies at two configurations."""
    _require_hps(params)
    check_length(pair.first, params.n_spins)
    return _covariance_scale(params) * elementary_symmetric(pair.agreements, params.n_spins, params.p)


def eta_covariance_at_overlap(overlap: float, params: ModelParams) -> float:
    """Exact covariance as a function of the overlap alone."""
    n = params.n_spins
    m = round((1.0 + overlap) * n / 2.0)
    return _covariance_scale(params) * elementary_symmetric(m, n, params.p)


def eta_covariance_asymptotic(overlap: float, params: ModelParams) -> float:
    """Large-volume form p^{2K(1-sigma)} Q^p, valid up to diagonal corrections."""
    return params.p ** (2.0 * params.depth * (1.0 - params.sigma)) * overlap ** params.p


def empirical_eta_covariance(
    pair: OverlapPair,
    params: ModelParams,
    n_samples: int,
    seed_stream: SeedStream,
    *,
    oracle: DisorderOracle | None = None,
) -> Estimate:
    """Monte Carlo E[eta_K(S) eta_K(S')] over coupling realizations.

    `oracle` supplies the scale and pinned couplings applied to every sample
    (e.g. a zero override); its own master seed is not used.
    """
    _require_hps(params)
    check_length(pair.first, params.n_spins)
    if params.depth < 1:
        raise DimensionError("the top-level interaction needs depth >= 1")
    tuples = block_tuples(params.n_spins, params.p)
    prod_a = np.prod(pair.first.spins()[tuples], axis=-1, dtype=np.int64)
    prod_b = np.prod(pair.second.spins()[tuples], axis=-1, dtype=np.int64)
    ranks = np.arange(len(tuples), dtype=np.uint64)
    weight = level_prefactor(params.depth, params.p, params.sigma)
    template = DisorderOracle(0, params) if oracle is None else oracle
    seeds = np.array(seed_stream.take(n_samples), dtype=np.uint64)
    products = np.empty(n_samples)
    for start in range(0, n_samples, _SEED_BATCH):
        batch = seeds[start:start + _SEED_BATCH]
        j = template.across_seeds(batch, ModelTag.HPS_COUPLING, params.depth, 0, ranks)
        products[start:start + len(batch)] = (weight * (j @ prod_a)) * (weight * (j @ prod_b))
    return mean_stderr(products)
