"""Metropolis and parallel-tempering sampling beyond enumeration.

Chains hold the configuration as an integer code and update the energy
incrementally; the full energy is recomputed at checkpoints and any drift
beyond 1e-8 (relative) raises IntegrityError. Every chain draws from its own
Philox substream of the master seed, so trajectories are reproducible and do
not depend on scheduling.
"""
from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path
from typing import NamedTuple, Protocol

import numpy as np

from .config import settings
from .disorder import DisorderOracle, SeedStream, chain_seed
from .errors import IntegrityError
from .hps import HpsInstance
from .hrem import level_scale
from .persistence import write_csv
from .quenched import sample_records
from .schemas import LOG2, ModelParams, SampleRecord
from .spins import SpinConfiguration
from .stats import Estimate, discard_equilibration, jackknife, mean_stderr

logger = logging.getLogger(__name__)

DRIFT_TOLERANCE = 1e-8
SWEEP_BATCH = 256


class Hamiltonian(Protocol):
    n_spins: int

    def energy(self, bits: int) -> float: ...

    def delta(self, bits: int, site: int) -> float: ...


class HremHamiltonian:
    """HREM energies from per-level lookup tables.

    Levels with at most `table_max_entries` codes per block are tabulated up
    front; larger levels query the oracle per lookup.
    """

    def __init__(self, params: ModelParams, oracle: DisorderOracle) -> None:
        self.params = params
        self.oracle = oracle
        self.n_spins = params.n_spins
        self.depth = params.depth
        self.weights = [level_scale(l, params.sigma) for l in range(params.depth + 1)]
        self.tables: list[list[list[float]] | None] = []
        for level in range(params.depth + 1):
            n_codes = 1 << (1 << level)
            if n_codes > settings.table_max_entries:
                self.tables.append(None)
                continue
            blocks = np.arange(params.n_blocks(level), dtype=np.uint64)[:, None]
            eps = oracle.hrem(level, blocks, np.arange(n_codes, dtype=np.uint64)[None, :])
            self.tables.append((self.weights[level] * eps).tolist())

    def _term(self, level: int, block: int, code: int) -> float:
        table = self.tables[level]
        if table is not None:
            return table[block][code]
        return self.weights[level] * float(self.oracle.hrem(level, block, code))

    def energy(self, bits: int) -> float:
        total = 0.0
        for level in range(self.depth + 1):
            size = 1 << level
            mask = (1 << size) - 1
            for block in range(self.n_spins >> level):
                total += self._term(level, block, (bits >> (block * size)) & mask)
        return total

    def delta(self, bits: int, site: int) -> float:
        change = 0.0
        for level in range(self.depth + 1):
            block = site >> level
            start = block << level
            code = (bits >> start) & ((1 << (1 << level)) - 1)
            flipped = code ^ (1 << (site - start))
            change += self._term(level, block, flipped) - self._term(level, block, code)
        return change


class HpsHamiltonian:
    """HPS energies with, per site, the weighted terms that contain it."""

    def __init__(self, params: ModelParams, oracle: DisorderOracle) -> None:
        self.params = params
        self.instance = HpsInstance(params, oracle)
        self.n_spins = params.n_spins
        self.fields = self.instance.fields().tolist()
        self.site_terms: list[list[tuple[float, tuple[int, ...]]]] = [[] for _ in range(self.n_spins)]
        for level in range(1, params.depth + 1):
            weights = (self.instance.weight(level) * self.instance.couplings(level)).ravel()
            for w, sites in zip(weights.tolist(), self.instance.level_sites(level).tolist()):
                for i in sites:
                    self.site_terms[i].append((w, tuple(j for j in sites if j != i)))

    def energy(self, bits: int) -> float:
        spins = SpinConfiguration(bits, self.n_spins).spins()
        return float(self.instance.energies_of_spins(spins[None, :])[0])

    def delta(self, bits: int, site: int) -> float:
        local = self.fields[site]
        for w, others in self.site_terms[site]:
            sign = 1
            for j in others:
                if not (bits >> j) & 1:
                    sign = -sign
            local += w * sign
        s = 1.0 if (bits >> site) & 1 else -1.0
        return -2.0 * s * local


def hamiltonian_for(params: ModelParams, oracle: DisorderOracle) -> Hamiltonian:
    return HremHamiltonian(params, oracle) if params.kind == "hrem" else HpsHamiltonian(params, oracle)


@dataclass(slots=True)
class ChainState:
    """One Metropolis replica.

    Attributes:
        bits: Current configuration code.
        n_spins: System size.
        energy: Incrementally maintained energy of `bits`.
        rng: Philox generator of this chain.
        beta: Inverse temperature.
        sweeps: Sweeps performed so far.
        accepted: Accepted single-spin flips so far.
    """
    bits: int
    n_spins: int
    energy: float
    rng: np.random.Generator
    beta: float
    sweeps: int = 0
    accepted: int = 0

    @property
    def config(self) -> SpinConfiguration:
        return SpinConfiguration(self.bits, self.n_spins)

    @property
    def acceptance(self) -> float:
        proposals = self.sweeps * self.n_spins
        return self.accepted / proposals if proposals else 0.0


def new_chain(ham: Hamiltonian, beta: float, seed: int) -> ChainState:
    """Chain started from a uniformly random configuration."""
    rng = np.random.Generator(np.random.Philox(key=seed))
    bits = 0
    for i, b in enumerate(rng.integers(0, 2, size=ham.n_spins).tolist()):
        bits |= b << i
    return ChainState(bits, ham.n_spins, ham.energy(bits), rng, beta)


def check_drift(state: ChainState, ham: Hamiltonian) -> None:
    """Compare the stored energy with a full recomputation and resynchronize.

    Raises:
        IntegrityError: On relative drift above 1e-8.
    """
    exact = ham.energy(state.bits)
    if abs(exact - state.energy) > DRIFT_TOLERANCE * max(1.0, abs(exact)):
        raise IntegrityError(
            f"energy drift after {state.sweeps} sweeps: stored {state.energy!r}, recomputed {exact!r} "
            f"(config {state.bits:#x}, beta {state.beta})"
        )
    state.energy = exact


def advance(state: ChainState, ham: Hamiltonian, n_sweeps: int, series: list[float] | None = None) -> ChainState:
    """Run `n_sweeps` sweeps of N random-site proposals each.

    Random numbers for the whole call are drawn up front. When `series` is
    given, the energy after each sweep is appended to it.
    """
    n = state.n_spins
    sites = state.rng.integers(0, n, size=n_sweeps * n).tolist()
    uniforms = state.rng.random(n_sweeps * n).tolist()
    beta = state.beta
    bits, energy, accepted = state.bits, state.energy, 0
    k = 0
    for _ in range(n_sweeps):
        for _ in range(n):
            site = sites[k]
            d = ham.delta(bits, site)
            if d <= 0.0 or uniforms[k] < math.exp(-beta * d):
                bits ^= 1 << site
                energy += d
                accepted += 1
            k += 1
        if series is not None:
            series.append(energy)
    state.bits, state.energy = bits, energy
    state.accepted += accepted
    state.sweeps += n_sweeps
    return state


def metropolis_sweep(state: ChainState, ham: Hamiltonian) -> ChainState:
    """One sweep followed by the drift check."""
    advance(state, ham, 1)
    check_drift(state, ham)
    return state


@dataclass(slots=True)
class TemperingLadder:
    """Replicas at strictly increasing betas with swap statistics per adjacent pair."""
    betas: tuple[float, ...]
    states: list[ChainState]
    rng: np.random.Generator
    attempts: np.ndarray = field(init=False)
    accepts: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        if len(self.states) != len(self.betas):
            raise ValueError(f"{len(self.states)} replicas for {len(self.betas)} betas")
        if any(b2 <= b1 for b1, b2 in zip(self.betas, self.betas[1:])):
            raise ValueError(f"betas must be strictly increasing, got {self.betas}")
        self.attempts = np.zeros(max(len(self.betas) - 1, 0), dtype=np.int64)
        self.accepts = np.zeros_like(self.attempts)

    @property
    def acceptance(self) -> np.ndarray:
        return np.divide(self.accepts, self.attempts, out=np.zeros(len(self.attempts)), where=self.attempts > 0)


def swap_probability(beta_i: float, beta_j: float, energy_i: float, energy_j: float) -> float:
    exponent = (beta_i - beta_j) * (energy_i - energy_j)
    return 1.0 if exponent >= 0.0 else math.exp(exponent)


def tempering_exchange(ladder: TemperingLadder) -> TemperingLadder:
    """Attempt a configuration swap for every adjacent pair, lowest beta first."""
    uniforms = ladder.rng.random(len(ladder.attempts))
    for i, u in enumerate(uniforms):
        a, b = ladder.states[i], ladder.states[i + 1]
        ladder.attempts[i] += 1
        if u < swap_probability(a.beta, b.beta, a.energy, b.energy):
            a.bits, b.bits = b.bits, a.bits
            a.energy, b.energy = b.energy, a.energy
            ladder.accepts[i] += 1
    return ladder


def new_ladder(ham: Hamiltonian, betas: Sequence[float], master_seed: int, stream: int = 0) -> TemperingLadder:
    states = [new_chain(ham, float(b), chain_seed(master_seed, stream, i)) for i, b in enumerate(betas)]
    swap_rng = np.random.Generator(np.random.Philox(key=chain_seed(master_seed, stream, len(betas))))
    return TemperingLadder(tuple(float(b) for b in betas), states, swap_rng)


class ChainResult(NamedTuple):
    mean_energy: Estimate
    acceptance: float
    energies: np.ndarray
    state: ChainState


def _write_trace(path: str | Path, columns: dict[str, Sequence[float]]) -> None:
    names = list(columns)
    rows = zip(range(len(next(iter(columns.values())))), *columns.values())
    write_csv(path, ["sweep", *names], rows)


def run_chain(
    params: ModelParams,
    oracle: DisorderOracle,
    n_sweeps: int,
    *,
    seed: int | None = None,
    stream: int = 0,
    trace: str | Path | None = None,
) -> ChainResult:
    """Single Metropolis chain at params.beta.

    The first 20% of sweeps are discarded; <H> and its error come from a
    16-bin jackknife over the rest.
    """
    ham = hamiltonian_for(params, oracle)
    state = new_chain(ham, params.beta, chain_seed(oracle.master_seed if seed is None else seed, stream, 0))
    series: list[float] = []
    done = 0
    while done < n_sweeps:
        batch = min(SWEEP_BATCH, n_sweeps - done)
        advance(state, ham, batch, series)
        check_drift(state, ham)
        done += batch
    energies = np.asarray(series)
    if trace is not None:
        _write_trace(trace, {"energy": energies})
    return ChainResult(jackknife(discard_equilibration(energies)), state.acceptance, energies, state)


class TemperingResult(NamedTuple):
    betas: tuple[float, ...]
    mean_energies: list[Estimate]
    swap_acceptance: np.ndarray
    energies: np.ndarray


def run_tempering(
    params: ModelParams,
    oracle: DisorderOracle,
    betas: Sequence[float],
    n_sweeps: int,
    *,
    seed: int | None = None,
    stream: int = 0,
    trace: str | Path | None = None,
) -> TemperingResult:
    """Parallel tempering: one sweep per replica, then an exchange round."""
    ham = hamiltonian_for(params, oracle)
    ladder = new_ladder(ham, betas, oracle.master_seed if seed is None else seed, stream)
    series = np.empty((len(ladder.states), n_sweeps))
    for sweep in range(n_sweeps):
        for state in ladder.states:
            advance(state, ham, 1)
        tempering_exchange(ladder)
        series[:, sweep] = [s.energy for s in ladder.states]
        if (sweep + 1) % SWEEP_BATCH == 0 or sweep + 1 == n_sweeps:
            for state in ladder.states:
                check_drift(state, ham)
    if trace is not None:
        _write_trace(trace, {f"beta_{b:g}": series[i] for i, b in enumerate(ladder.betas)})
    estimates = [jackknife(discard_equilibration(row)) for row in series]
    logger.debug("swap acceptance %s", np.round(ladder.acceptance, 3).tolist())
    return TemperingResult(ladder.betas, estimates, ladder.acceptance, series)


def trapezoid_free_energy(betas: np.ndarray, energy_per_spin: np.ndarray) -> np.ndarray:
    """log 2 - cumulative trapezoid integral of <H>/N from beta = 0."""
    steps = np.diff(betas) * (energy_per_spin[1:] + energy_per_spin[:-1]) / 2.0
    return LOG2 - np.concatenate([[0.0], np.cumsum(steps)])


def trapezoid_weights(betas: np.ndarray) -> np.ndarray:
    """Row j holds the weight of each node in the trapezoid integral up to betas[j]."""
    h = np.diff(betas)
    weights = np.zeros((betas.size, betas.size))
    for j in range(1, betas.size):
        weights[j, :j] += h[:j] / 2.0
        weights[j, 1:j + 1] += h[:j] / 2.0
    return weights


def trapezoid_stderr(betas: np.ndarray, energy_stderr: np.ndarray) -> np.ndarray:
    """Error of each cumulative integral for independent per-node errors."""
    return np.sqrt((trapezoid_weights(betas) ** 2) @ (np.asarray(energy_stderr) ** 2))


class FreeEnergyCurve(NamedTuple):
    betas: np.ndarray
    f: np.ndarray
    stderr: np.ndarray
    refinement_error: float


def _check_grid(beta_grid: Sequence[float]) -> np.ndarray:
    grid = np.asarray(beta_grid, dtype=np.float64)
    if grid.size < 2 or grid[0] != 0.0:
        raise ValueError(f"beta grid must start at 0 and hold >= 2 points, got {grid[:3].tolist()}...")
    if np.any(np.diff(grid) <= 0.0):
        raise ValueError("beta grid must be strictly increasing")
    return grid


def _refinement_error(grid: np.ndarray, curve: np.ndarray) -> float:
    if grid.size < 3:
        return 0.0
    coarse_idx = np.arange(0, grid.size, 2)
    coarse = trapezoid_free_energy(grid[coarse_idx], curve[coarse_idx])
    fine = trapezoid_free_energy(grid, curve)[coarse_idx]
    return float(abs(fine[-1] - coarse[-1]) / 3.0)


def thermo_integration_free_energy(
    params: ModelParams,
    beta_grid: Sequence[float],
    chain_budget: int,
    *,
    n_samples: int = 1,
    seed_stream: SeedStream | None = None,
) -> FreeEnergyCurve:
    """Quenched f(beta) on a grid from tempering-measured <H> per disorder sample.

    Each sample runs a tempering ladder over the whole grid. With several
    samples the error is the spread over samples; with one it is the
    jackknife error propagated through the trapezoid weights.

    Raises:
        ValueError: If the grid does not start at 0.
    """
    grid = _check_grid(beta_grid)
    seed_stream = seed_stream or SeedStream(settings.seed)
    n = params.n_spins
    curves, errors = [], []
    for seed in seed_stream.take(n_samples):
        result = run_tempering(params, DisorderOracle(seed, params), grid, chain_budget)
        e = np.array([est.mean for est in result.mean_energies]) / n
        de = np.array([est.stderr for est in result.mean_energies]) / n
        curves.append(e)
        errors.append(de)
    mean_energy = np.mean(curves, axis=0)
    f = trapezoid_free_energy(grid, mean_energy)
    if n_samples >= 2:
        per_sample = np.array([trapezoid_free_energy(grid, c) for c in curves])
        stderr = np.array([mean_stderr(col).stderr for col in per_sample.T])
    else:
        stderr = trapezoid_stderr(grid, errors[0])
    return FreeEnergyCurve(grid, f, stderr, _refinement_error(grid, mean_energy))


def mc_log_partition(
    params: ModelParams,
    oracle: DisorderOracle,
    *,
    sweeps: int = 2000,
    step: float = 0.05,
) -> SampleRecord:
    """Monte Carlo counterpart of the exact enumerators for one realization.

    log Z is integrated from beta = 0 over a grid of spacing <= `step`.
    """
    if params.beta == 0.0:
        return SampleRecord.build(params, oracle.master_seed, params.n_spins * LOG2, 0.0, "mc", stderr=0.0)
    grid = np.linspace(0.0, params.beta, max(2, math.ceil(params.beta / step) + 1))
    result = run_tempering(params, oracle, grid, sweeps)
    e = np.array([est.mean for est in result.mean_energies])
    de = np.array([est.stderr for est in result.mean_energies])
    f = trapezoid_free_energy(grid, e / params.n_spins)[-1]
    stderr = float(trapezoid_stderr(grid, de)[-1]) / params.n_spins
    return SampleRecord.build(
        params, oracle.master_seed, f * params.n_spins, float(e[-1]), "mc", stderr=stderr
    )


def mc_quenched_free_energy(
    params: ModelParams,
    n_samples: int,
    seed_stream: SeedStream,
    *,
    sweeps: int = 2000,
    workers: int = 1,
) -> list[SampleRecord]:
    """Per-sample Monte Carlo records, the fallback when enumeration does not fit."""
    return sample_records(partial(mc_log_partition, sweeps=sweeps), params, n_samples, seed_stream, workers=workers)
