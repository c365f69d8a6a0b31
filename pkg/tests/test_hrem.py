import math

import numpy as np
import pytest

from hierglass.analysis import finite_k_lower_bound, gaussian_min_probe, hrem_jensen_upper_bound, kauzmann_slope
from hierglass.disorder import DisorderOracle, ModelTag, SeedStream, keyed_gaussians, zero_override
from hierglass.errors import CapacityError, DimensionError
from hierglass.hrem import (
    block_energy,
    concentration_bound,
    concentration_probe,
    decoupled_log_partition,
    decoupling_gap,
    empirical_interaction_covariance,
    energy_second_moment,
    energy_table,
    entropy_estimate,
    exact_log_partition,
    hrem_energy,
    hrem_energy_over_seeds,
    interaction_covariance_exact,
    interpolated_free_energy,
    jensen_step_bound,
    level_scale,
    quenched_free_energy,
    resolve_mode,
    variance_tau2,
)
from hierglass.quenched import free_energy_of, sample_records, self_averaging_scan
from hierglass.spins import SpinConfiguration
from hierglass.stats import combined_stderr, paired_difference

from conftest import LOG2, hrem, pinned


def test_two_level_hand_value():
    # S = (+1, -1): site 1 has code 1, site 2 has code 0, the pair has code 0b01.
    oracle = pinned(hrem(1), {(1, 0, 0, 1): 0.3, (1, 0, 1, 0): -0.5, (1, 1, 0, 1): 0.2})
    assert hrem_energy(SpinConfiguration(0b01, 2), hrem(1), oracle) == pytest.approx(0.0, abs=1e-12)


def test_four_configuration_hand_enumeration():
    eps0 = {(0, 0): 0.4, (0, 1): -1.1, (1, 0): 0.7, (1, 1): 0.05}
    eps1 = [0.3, -0.2, 1.3, -0.6]
    values = {(1, 0, b, c): v for (b, c), v in eps0.items()}
    values.update({(1, 1, 0, c): v for c, v in enumerate(eps1)})
    params = hrem(1, beta=1.0)
    oracle = pinned(params, values)
    energies = [eps0[(0, x & 1)] + eps0[(1, x >> 1)] + eps1[x] for x in range(4)]
    expected = math.log(sum(math.exp(-e) for e in energies))
    record = exact_log_partition(params, oracle)
    assert record.log_z == pytest.approx(expected, rel=1e-12)
    assert record.min_energy == pytest.approx(min(energies), abs=1e-12)
    weights = [math.exp(-e) for e in energies]
    assert record.mean_energy == pytest.approx(sum(w * e for w, e in zip(weights, energies)) / sum(weights), rel=1e-12)


def test_beta_zero_is_exactly_n_log_two():
    record = exact_log_partition(hrem(3, beta=0.0), DisorderOracle(5, hrem(3)))
    assert record.log_z == 8 * LOG2
    assert record.log_z_per_spin == LOG2


def test_zero_disorder_log_partition():
    params = hrem(2, beta=2.5)
    record = exact_log_partition(params, zero_override(DisorderOracle(5, params)))
    assert record.log_z == pytest.approx(4 * LOG2, abs=1e-12)
    assert record.mean_energy == 0.0


@pytest.mark.parametrize("depth", [1, 2, 3])
def test_energy_decomposes_into_halves_and_top(depth):
    params = hrem(depth, sigma=0.7)
    oracle = DisorderOracle(17, params)
    half = params.n_spins // 2
    for bits in range(params.n_configs):
        cfg = SpinConfiguration(bits, params.n_spins)
        left = block_energy(cfg.block_code(0, half), depth - 1, 0, params, oracle)
        right = block_energy(cfg.block_code(half, half), depth - 1, 1, params, oracle)
        top = level_scale(depth, 0.7) * float(oracle.hrem(depth, 0, bits))
        assert hrem_energy(cfg, params, oracle) == pytest.approx(left + right + top, abs=1e-12)


def test_energy_table_matches_direct_evaluation():
    params = hrem(2, sigma=2.0)
    oracle = DisorderOracle(23, params)
    table = energy_table(params, oracle)
    direct = [hrem_energy(SpinConfiguration(b, 4), params, oracle) for b in range(16)]
    np.testing.assert_allclose(table, direct, rtol=0, atol=1e-12)


@pytest.mark.parametrize("depth", [1, 2, 3])
def test_table_and_stream_modes_agree(depth):
    params = hrem(depth, beta=1.3)
    for seed in SeedStream(8).take(100):
        oracle = DisorderOracle(seed, params)
        table = exact_log_partition(params, oracle, mode="table")
        stream = exact_log_partition(params, oracle, mode="stream", chunk_size=7)
        assert stream.method == "enumerate-stream" and table.method == "enumerate-table"
        assert stream.log_z == pytest.approx(table.log_z, rel=1e-12)
        assert stream.mean_energy == pytest.approx(table.mean_energy, rel=1e-10, abs=1e-12)


def test_stream_result_does_not_depend_on_worker_count():
    params = hrem(3, beta=0.9)
    oracle = DisorderOracle(31, params)
    one = exact_log_partition(params, oracle, mode="stream", chunk_size=16, workers=1)
    two = exact_log_partition(params, oracle, mode="stream", chunk_size=16, workers=2)
    assert one == two


def test_log_z_derivative_is_minus_mean_energy():
    h = 1e-4
    for seed in SeedStream(3).take(10):
        params = hrem(2, beta=1.0)
        oracle = DisorderOracle(seed, params)
        up = exact_log_partition(params.with_beta(1.0 + h), oracle).log_z
        down = exact_log_partition(params.with_beta(1.0 - h), oracle).log_z
        mean_energy = exact_log_partition(params, oracle).mean_energy
        assert -(up - down) / (2 * h) == pytest.approx(mean_energy, rel=1e-6, abs=1e-6)


def test_large_beta_stays_finite():
    record = exact_log_partition(hrem(3, beta=50.0), DisorderOracle(4, hrem(3)))
    assert math.isfinite(record.log_z)
    assert -50.0 * record.min_energy <= record.log_z <= -50.0 * record.min_energy + 8 * LOG2 + 1e-9


def test_capacity_limits():
    assert resolve_mode(hrem(4)) == "table"
    assert resolve_mode(hrem(5)) == "stream"
    with pytest.raises(CapacityError, match="mc"):
        exact_log_partition(hrem(6), DisorderOracle(1, hrem(6)))
    with pytest.raises(CapacityError):
        resolve_mode(hrem(5), "table")
    with pytest.raises(CapacityError):
        resolve_mode(hrem(1), "auto", 0)
    assert resolve_mode(hrem(1), "auto", None) == "table"


def test_wrong_length_is_rejected():
    with pytest.raises(DimensionError):
        hrem_energy(SpinConfiguration(0, 3), hrem(2), DisorderOracle(1, hrem(2)))


def test_tau2_values():
    assert variance_tau2(2, 1.0) == (7.0, 8.0)
    assert variance_tau2(3, 50.0).value == pytest.approx(8.0, rel=1e-10)
    for depth in range(6):
        for sigma in (0.1, 0.5, 1.0, 3.0):
            tau = variance_tau2(depth, sigma)
            assert tau.value <= tau.bound


def test_energy_variance_over_seeds_matches_tau2():
    params = hrem(2)
    seeds = np.array(SeedStream(77).take(200_000), dtype=np.uint64)
    energies = hrem_energy_over_seeds(SpinConfiguration(0b1010, 4), params, seeds)
    var = energies.var(ddof=1)
    stderr = var * math.sqrt(2.0 / (len(energies) - 1))
    assert abs(var - variance_tau2(2, 1.0).value) < 3 * stderr


@pytest.mark.parametrize("depth,sigma", [(1, 1.0), (2, 0.5), (3, 2.0)])
def test_energy_second_moment_matches_tau2(depth, sigma):
    params = hrem(depth, sigma=sigma)
    n = params.n_spins
    moment = energy_second_moment(SpinConfiguration((1 << n) - 1, n), params, 50_000, SeedStream(31))
    assert abs(moment.mean - variance_tau2(depth, sigma).value) <= 3 * moment.stderr


def test_quenched_free_energy_at_beta_zero(seeds):
    est = quenched_free_energy(hrem(3, beta=0.0), 20, seeds)
    assert est.mean == LOG2 and est.stderr == 0.0
    assert entropy_estimate(hrem(3, beta=0.0), 20, seeds).mean == pytest.approx(LOG2, abs=1e-12)


def test_quenched_needs_two_samples(seeds):
    with pytest.raises(ValueError, match="n_samples"):
        quenched_free_energy(hrem(1), 1, seeds)


@pytest.mark.slow
def test_free_energy_grows_with_depth_and_respects_jensen(seeds):
    f = {k: quenched_free_energy(hrem(k), 2000, seeds) for k in (1, 2, 3)}
    for lo, hi in ((1, 2), (2, 3)):
        slack = 3 * combined_stderr(f[lo].stderr, f[hi].stderr)
        assert f[hi].mean >= f[lo].mean - slack
        assert f[hi].mean <= f[lo].mean + jensen_step_bound(hi, 1.0, 1.0) + slack
    assert f[3].mean <= hrem_jensen_upper_bound(1.0, 1.0) + 3 * f[3].stderr


@pytest.mark.slow
def test_entropy_matches_finite_difference_and_bound():
    stream = SeedStream(11)
    h = 1e-3
    beta = 1.0
    params = hrem(3, beta=beta)
    s = entropy_estimate(params, 300, stream)
    f = quenched_free_energy(params, 300, stream)
    f_up = quenched_free_energy(params.with_beta(beta + h), 300, stream)
    f_down = quenched_free_energy(params.with_beta(beta - h), 300, stream)
    finite_difference = -beta * (f_up.mean - f_down.mean) / (2 * h) + f.mean
    assert abs(s.mean - finite_difference) <= 3 * s.stderr
    assert s.mean >= f.mean - beta * kauzmann_slope(1.0) - 3 * s.stderr


def test_interpolation_endpoints(seeds):
    params = hrem(2)
    assert interpolated_free_energy(params, 1.0, 50, seeds) == quenched_free_energy(params, 50, seeds)
    with pytest.raises(ValueError):
        interpolated_free_energy(params, 1.5, 10, seeds)


@pytest.mark.slow
def test_interpolation_decouples_and_is_monotone(seeds):
    params = hrem(2)
    phi0 = interpolated_free_energy(params, 0.0, 2000, seeds)
    f1 = quenched_free_energy(hrem(1), 2000, seeds)
    assert abs(phi0.mean - f1.mean) <= 3 * combined_stderr(phi0.stderr, f1.stderr)
    curve = [interpolated_free_energy(params, t / 10, 5000, seeds) for t in range(11)]
    for a, b in zip(curve, curve[1:]):
        assert b.mean >= a.mean - 3 * combined_stderr(a.stderr, b.stderr)


def test_decoupled_top_level_is_sum_of_halves():
    params = hrem(2, beta=0.8)
    oracle = DisorderOracle(101, params)
    record = exact_log_partition(params, oracle, t=0.0)
    assert record.log_z == pytest.approx(decoupled_log_partition(params, oracle), rel=1e-12)
    assert decoupling_gap(params, SeedStream(101).take(5)) <= 1e-12 * params.n_spins
    assert decoupling_gap(params, []) == 0.0


def test_concentration_bound_values():
    assert concentration_bound(4, 1.0, 1.0) == pytest.approx(2 * math.exp(-1), rel=1e-12)
    assert concentration_bound(3, 1.0, 1.0) == pytest.approx(2 * math.exp(-(2**1.5) / 4), rel=1e-12)
    assert concentration_bound(3, 1.0, 0.0) == 0.0


def test_concentration_at_beta_zero_has_no_tail(seeds):
    res = concentration_probe(hrem(3, beta=0.0), 20, seeds)
    assert res.fraction == 0.0 and res.bound == 0.0


@pytest.mark.slow
def test_concentration_tail_below_bound(seeds):
    res = concentration_probe(hrem(3), 10_000, seeds)
    assert res.fraction <= res.bound + 2 * res.binomial_stderr
    assert res.threshold == pytest.approx(2 ** -0.75)


@pytest.mark.slow
def test_concentration_tail_at_depth_four(seeds):
    res = concentration_probe(hrem(4), 10_000, seeds)
    assert res.bound == pytest.approx(2 * math.exp(-1), rel=1e-12)
    assert res.threshold == 0.5
    assert res.fraction <= res.bound + 2 * res.binomial_stderr


@pytest.mark.slow
@pytest.mark.parametrize("beta", [0.5, 1.0, 2.0])
def test_depth_monotonicity_and_jensen_bounds(seeds, beta):
    upper = hrem_jensen_upper_bound(1.0, beta)
    by_depth = {}
    for depth in range(1, 5):
        f = quenched_free_energy(hrem(depth, beta=beta), 400, seeds)
        assert f.mean <= upper + 3 * f.stderr
        assert f.mean >= finite_k_lower_bound(1.0, beta, depth) - 3 * f.stderr
        by_depth[depth] = f
    for depth in range(2, 5):
        lo, hi = by_depth[depth - 1], by_depth[depth]
        slack = 3 * combined_stderr(lo.stderr, hi.stderr)
        assert hi.mean >= lo.mean - slack
        assert hi.mean <= lo.mean + jensen_step_bound(depth, 1.0, beta) + slack


@pytest.mark.parametrize("sigma", [0.5, 1.0, 2.0])
@pytest.mark.parametrize("beta", [0.5, 1.0])
def test_finite_depth_and_entropy_lower_bounds(seeds, sigma, beta):
    for depth in range(1, 4):
        records = sample_records(exact_log_partition, hrem(depth, sigma=sigma, beta=beta), 200, seeds)
        f = free_energy_of(records)
        assert f.mean >= finite_k_lower_bound(sigma, beta, depth) - 3 * f.stderr
        # s - f = beta <H> / N per sample
        gap = paired_difference([r.entropy for r in records], [r.log_z_per_spin for r in records])
        assert gap.mean >= -beta * kauzmann_slope(sigma) - 3 * gap.stderr


def test_interaction_covariance(seeds):
    params = hrem(2, sigma=0.5)
    a, b = SpinConfiguration(0b0110, 4), SpinConfiguration(0b0111, 4)
    assert interaction_covariance_exact(a, a, params) == pytest.approx(2 ** (2 * 0.5))
    assert interaction_covariance_exact(a, b, params) == 0.0
    same = empirical_interaction_covariance(a, a, params, 100_000, seeds)
    assert abs(same.mean - 2.0) <= 3 * same.stderr
    cross = empirical_interaction_covariance(a, b, params, 100_000, seeds)
    assert abs(cross.mean) <= 3 * cross.stderr


def test_ground_state_respects_gaussian_minimum(seeds):
    records = sample_records(exact_log_partition, hrem(3), 200, seeds)
    probe = gaussian_min_probe(records, 1.0)
    assert probe.min_energy_per_spin.mean >= probe.lower_bound - 3 * probe.min_energy_per_spin.stderr


def test_self_averaging_spread_shrinks(seeds):
    points = self_averaging_scan(exact_log_partition, hrem(1), [1, 3], 400, seeds)
    assert [p.depth for p in points] == [1, 3]
    assert points[1].spread < points[0].spread


def test_seed_vectorized_energy_matches_oracle_path():
    params = hrem(2)
    seeds = SeedStream(5).take(3)
    cfg = SpinConfiguration(0b1001, 4)
    batch = hrem_energy_over_seeds(cfg, params, np.array(seeds, dtype=np.uint64))
    for value, seed in zip(batch, seeds):
        assert value == pytest.approx(hrem_energy(cfg, params, DisorderOracle(seed, params)), abs=1e-12)
    assert keyed_gaussians(seeds[0], ModelTag.HREM, 0, 0, 1) == DisorderOracle(seeds[0], params).hrem(0, 0, 1)
