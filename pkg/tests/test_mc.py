import math

import numpy as np
import pytest
from scipy.stats import chisquare

from hierglass import mc
from hierglass.disorder import DisorderOracle, SeedStream
from hierglass.errors import IntegrityError
from hierglass.hps import hps_exact_log_partition
from hierglass.hrem import exact_log_partition, hrem_energy
from hierglass.mc import (
    HpsHamiltonian,
    HremHamiltonian,
    TemperingLadder,
    advance,
    check_drift,
    hamiltonian_for,
    mc_log_partition,
    mc_quenched_free_energy,
    metropolis_sweep,
    new_chain,
    new_ladder,
    run_chain,
    run_tempering,
    swap_probability,
    tempering_exchange,
    thermo_integration_free_energy,
    trapezoid_free_energy,
    trapezoid_stderr,
    trapezoid_weights,
)
from hierglass.spins import SpinConfiguration
from hierglass.stats import Estimate

from conftest import LOG2, hps, hrem, pinned


def _close(estimate, exact, rel=0.01, n_se=3.0):
    return abs(estimate.mean - exact) <= max(rel * abs(exact), n_se * estimate.stderr)


@pytest.mark.parametrize("params", [hrem(3, sigma=0.7), hps(2, sigma=0.8)], ids=["hrem", "hps"])
def test_incremental_delta_matches_recompute(params):
    ham = hamiltonian_for(params, DisorderOracle(77, params))
    rng = np.random.default_rng(0)
    for bits in rng.integers(0, params.n_configs, size=20).tolist():
        for site in range(params.n_spins):
            flipped = bits ^ (1 << site)
            assert ham.delta(bits, site) == pytest.approx(ham.energy(flipped) - ham.energy(bits), abs=1e-10)


def test_hrem_hamiltonian_matches_direct_energy():
    params = hrem(3, sigma=1.3)
    oracle = DisorderOracle(12, params)
    ham = HremHamiltonian(params, oracle)
    for bits in range(0, params.n_configs, 7):
        direct = hrem_energy(SpinConfiguration(bits, params.n_spins), params, oracle)
        assert ham.energy(bits) == pytest.approx(direct, abs=1e-12)


def test_hrem_hamiltonian_without_tables(monkeypatch):
    params = hrem(2)
    oracle = DisorderOracle(4, params)
    tabulated = HremHamiltonian(params, oracle)
    monkeypatch.setattr("hierglass.mc.settings.table_max_entries", 2)
    queried = HremHamiltonian(params, oracle)
    assert queried.tables[1] is None and queried.tables[2] is None
    for bits in range(params.n_configs):
        assert queried.energy(bits) == pytest.approx(tabulated.energy(bits), abs=1e-12)
        assert queried.delta(bits, 3) == pytest.approx(tabulated.delta(bits, 3), abs=1e-12)


def test_beta_zero_accepts_every_proposal():
    params = hrem(2, beta=0.0)
    ham = hamiltonian_for(params, DisorderOracle(3, params))
    state = new_chain(ham, 0.0, seed=5)
    advance(state, ham, 20_000)
    assert state.acceptance == 1.0


def test_beta_zero_marginals_are_uniform():
    params = hrem(2, beta=0.0)
    ham = hamiltonian_for(params, DisorderOracle(3, params))
    state = new_chain(ham, 0.0, seed=6)
    ups = np.zeros(params.n_spins)
    n = 20_000
    for _ in range(n):
        advance(state, ham, 1)
        ups += [(state.bits >> i) & 1 for i in range(params.n_spins)]
    np.testing.assert_allclose(ups / n, 0.5, atol=0.02)


def test_single_spin_mean_energy():
    params = hps(0, beta=1.0)
    oracle = pinned(params, {(3, 0, 0, 0): 0.7})
    result = run_chain(params, oracle, 200_000)
    assert _close(result.mean_energy, -0.7 * math.tanh(0.7))


def test_hrem_mean_energy_matches_enumeration():
    params = hrem(2, beta=1.0)
    oracle = DisorderOracle(21, params)
    exact = exact_log_partition(params, oracle).mean_energy
    result = run_chain(params, oracle, 50_000)
    assert _close(result.mean_energy, exact)
    assert 0.0 < result.acceptance < 1.0


def test_chains_are_reproducible():
    params = hps(1, beta=0.8)
    oracle = DisorderOracle(8, params)
    first = run_chain(params, oracle, 600)
    again = run_chain(params, oracle, 600)
    other = run_chain(params, oracle, 600, stream=1)
    np.testing.assert_array_equal(first.energies, again.energies)
    assert first.state.bits == again.state.bits
    assert not np.array_equal(first.energies, other.energies)


def test_trace_is_written(tmp_path):
    params = hrem(1, beta=0.5)
    path = tmp_path / "trace.csv"
    run_chain(params, DisorderOracle(2, params), 40, trace=path)
    lines = path.read_text().splitlines()
    assert lines[0] == "sweep,energy"
    assert len(lines) == 41


def test_drift_guard():
    params = hrem(2)
    ham = hamiltonian_for(params, DisorderOracle(9, params))
    state = new_chain(ham, 1.0, seed=1)
    exact = state.energy
    state.energy = exact + 1e-12
    check_drift(state, ham)
    assert state.energy == exact
    state.energy = exact + 1.0
    with pytest.raises(IntegrityError, match="drift"):
        metropolis_sweep(state, ham)


def test_swap_probability():
    assert swap_probability(1.0, 2.0, 3.0, 5.0) == 1.0
    assert swap_probability(1.0, 2.0, 5.0, 3.0) == pytest.approx(math.exp(-2.0))
    assert swap_probability(0.5, 0.5, 1.0, -4.0) == 1.0


def test_ladder_requires_increasing_betas():
    params = hrem(1)
    ham = hamiltonian_for(params, DisorderOracle(1, params))
    with pytest.raises(ValueError, match="strictly increasing"):
        new_ladder(ham, [0.5, 0.5], 3)
    with pytest.raises(ValueError, match="strictly increasing"):
        new_ladder(ham, [1.0, 0.2], 3)
    with pytest.raises(ValueError):
        TemperingLadder((0.1, 0.2), [], np.random.default_rng(0))


def test_exchange_keeps_energies_consistent():
    params = hps(1)
    ham = HpsHamiltonian(params, DisorderOracle(6, params))
    ladder = new_ladder(ham, [0.1, 0.6, 1.2, 2.0], 11)
    for _ in range(200):
        for state in ladder.states:
            advance(state, ham, 1)
        tempering_exchange(ladder)
    for state in ladder.states:
        check_drift(state, ham)
    assert ladder.attempts.tolist() == [200, 200, 200]
    assert np.all(ladder.acceptance > 0.0)


@pytest.mark.slow
def test_tempering_matches_enumeration_at_depth_three():
    params = hrem(3)
    oracle = DisorderOracle(31, params)
    betas = np.linspace(0.2, 2.0, 8)
    result = run_tempering(params, oracle, betas, 40_000)
    assert np.all((result.swap_acceptance > 0.0) & (result.swap_acceptance < 1.0))
    for beta, estimate in zip(result.betas, result.mean_energies):
        exact = exact_log_partition(params.with_beta(beta), oracle).mean_energy
        assert _close(estimate, exact, rel=0.02, n_se=4.0), beta


@pytest.mark.slow
def test_stationary_distribution_is_boltzmann():
    params = hrem(1, beta=0.7)
    oracle = DisorderOracle(14, params)
    ham = hamiltonian_for(params, oracle)
    energies = np.array([ham.energy(b) for b in range(params.n_configs)])
    weights = np.exp(-params.beta * energies)
    state = new_chain(ham, params.beta, seed=99)
    n = 20_000
    counts = np.zeros(params.n_configs)
    for _ in range(n):
        advance(state, ham, 10)
        counts[state.bits] += 1
    assert chisquare(counts, n * weights / weights.sum()).pvalue > 1e-3


def test_trapezoid_starts_at_log_two():
    f = trapezoid_free_energy(np.array([0.0, 0.5, 1.0]), np.array([0.0, -1.0, -1.0]))
    assert f[0] == LOG2
    assert f.tolist() == pytest.approx([LOG2, LOG2 + 0.25, LOG2 + 0.75])


def test_trapezoid_weights_share_interior_nodes():
    weights = trapezoid_weights(np.array([0.0, 0.5, 1.0]))
    assert weights.tolist() == [[0.0, 0.0, 0.0], [0.25, 0.25, 0.0], [0.25, 0.5, 0.25]]
    stderr = trapezoid_stderr(np.array([0.0, 0.5, 1.0]), np.array([1.0, 2.0, 3.0]))
    assert stderr.tolist() == pytest.approx([0.0, math.sqrt(0.3125), math.sqrt(1.625)])


def test_mc_log_partition_propagates_node_errors(monkeypatch):
    params = hrem(1, beta=0.1)
    de = np.array([0.4, 0.8, 1.2])

    def fake_tempering(params, oracle, grid, sweeps):
        assert np.allclose(grid, [0.0, 0.05, 0.1])
        return mc.TemperingResult(tuple(grid), [Estimate(-1.0, d, 16) for d in de], np.zeros(2), np.zeros((3, 1)))

    monkeypatch.setattr(mc, "run_tempering", fake_tempering)
    record = mc_log_partition(params, DisorderOracle(1, params))
    w = np.array([0.025, 0.05, 0.025])
    assert record.stderr == pytest.approx(math.sqrt(w ** 2 @ de ** 2) / params.n_spins)


def test_integration_grid_must_start_at_zero():
    with pytest.raises(ValueError, match="start at 0"):
        thermo_integration_free_energy(hrem(1), [0.1, 0.5], 100)
    with pytest.raises(ValueError, match="increasing"):
        thermo_integration_free_energy(hrem(1), [0.0, 0.5, 0.5], 100)


@pytest.mark.parametrize(
    "params,exact_fn",
    [(hrem(2), exact_log_partition), (hps(1), hps_exact_log_partition)],
    ids=["hrem", "hps"],
)
def test_thermodynamic_integration_matches_enumeration(params, exact_fn):
    stream = SeedStream(404)
    grid = np.linspace(0.0, 1.0, 21)
    curve = thermo_integration_free_energy(params, grid, 4000, seed_stream=stream)
    assert curve.f[0] == LOG2
    oracle = DisorderOracle(stream.take(1)[0], params)
    exact = exact_fn(params.with_beta(1.0), oracle).log_z_per_spin
    tolerance = 4 * curve.stderr[-1] + 3 * curve.refinement_error + 2e-3
    assert abs(curve.f[-1] - exact) <= tolerance


def test_mc_log_partition_at_beta_zero():
    params = hps(1, beta=0.0)
    record = mc_log_partition(params, DisorderOracle(1, params))
    assert record.log_z == 3 * LOG2
    assert record.method == "mc"


def test_mc_quenched_records(seeds):
    records = mc_quenched_free_energy(hrem(1, beta=0.5), 3, seeds, sweeps=300)
    assert [r.seed for r in records] == seeds.take(3)
    assert all(r.method == "mc" and r.stderr is not None for r in records)
