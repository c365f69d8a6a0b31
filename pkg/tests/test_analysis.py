import logging
import math

import numpy as np
import pytest

from hierglass.analysis import (
    QuadratureRule,
    beta_star,
    bound_report,
    c_sigma,
    entropy_lower_bounds,
    expected_log2cosh,
    finite_k_lower_bound,
    gaussian_min_probe,
    hps_jensen_upper_bound,
    hrem_jensen_upper_bound,
    kauzmann_slope,
    mean_field_beta,
    mean_field_critical_beta,
    min_energy_sandwich,
    phi,
    phi_derivative,
    single_site_bound_term,
)
from hierglass.errors import DomainError
from hierglass.schemas import SampleRecord

from conftest import LOG2, hrem


def test_hermite_rule_is_exact_for_low_moments():
    rule = QuadratureRule.hermite(32)
    assert rule.expect(lambda z: z**2) == pytest.approx(1.0, rel=1e-12)
    assert rule.expect(lambda z: z**4) == pytest.approx(3.0, rel=1e-12)
    assert rule.expect(lambda z: z**8) == pytest.approx(105.0, rel=1e-12)
    assert rule.expect(lambda z: z**9 + z**3) == pytest.approx(0.0, abs=1e-10)


def test_two_dimensional_hermite_rule():
    rule = QuadratureRule.hermite(32, dim=2)
    assert rule.expect(lambda x, y: x**2 * y**2) == pytest.approx(1.0, rel=1e-12)
    assert rule.expect(lambda x, y: (x + y) ** 4) == pytest.approx(12.0, rel=1e-12)
    with pytest.raises(ValueError):
        QuadratureRule.hermite(8, dim=3)


def test_two_state_expectation_reduces_to_one_dimension():
    rule = QuadratureRule.hermite(64, dim=2)
    two_d = rule.expect(lambda x, y: np.logaddexp(-0.5 * x, -0.5 * y))
    assert two_d == pytest.approx(single_site_bound_term(0.5, "hrem"), abs=1e-8)


def test_single_site_term_against_sampling():
    rng = np.random.default_rng(0)
    beta = 1.2
    draws = np.logaddexp(-beta * rng.standard_normal(1_000_000), -beta * rng.standard_normal(1_000_000))
    stderr = draws.std(ddof=1) / math.sqrt(draws.size)
    assert abs(draws.mean() - single_site_bound_term(beta, "hrem")) <= 4 * stderr


def test_hps_single_site_term_against_sampling():
    rng = np.random.default_rng(1)
    draws = np.logaddexp(*(np.multiply.outer([1.0, -1.0], rng.standard_normal(1_000_000))))
    stderr = draws.std(ddof=1) / math.sqrt(draws.size)
    assert abs(draws.mean() - single_site_bound_term(1.0, "hps")) <= 3 * stderr


def test_hrem_single_site_term_is_phi_with_unit_scale():
    # c(sigma) -> 1 as sigma grows
    assert single_site_bound_term(1.0, "hrem") == pytest.approx(phi(60.0, 1.0), rel=1e-12)
    assert single_site_bound_term(0.0, "hrem") == single_site_bound_term(0.0, "hps") == LOG2


def test_phi_limits():
    assert phi(1.0, 0.0) == LOG2
    assert phi(1.0, 1.0) > LOG2
    assert expected_log2cosh(0.0) == LOG2


def test_phi_slope_at_large_beta(caplog):
    beta = 30.0
    with caplog.at_level(logging.WARNING, logger="hierglass.analysis"):
        value = phi(1.0, beta)
    assert value / beta == pytest.approx(c_sigma(1.0) / math.sqrt(math.pi), abs=1e-2)
    assert "accuracy is degraded" in caplog.text


@pytest.mark.parametrize("beta", [0.3, 1.0, 3.0])
def test_quadrature_order_converged(beta):
    assert phi(1.0, beta, order=32) == pytest.approx(phi(1.0, beta, order=64), abs=1e-10)


def test_phi_derivative():
    assert phi_derivative(1.0, 0.0) == 0.0
    h = 1e-5
    for sigma, beta in [(0.5, 0.4), (1.0, 1.0), (2.0, 2.5)]:
        fd = (phi(sigma, beta + h) - phi(sigma, beta - h)) / (2 * h)
        assert phi_derivative(sigma, beta) == pytest.approx(fd, abs=1e-7)
        assert 0.0 < phi_derivative(sigma, beta) <= kauzmann_slope(sigma)


def test_c_sigma_and_slopes():
    assert c_sigma(1.0) == pytest.approx(math.sqrt(2.0))
    assert kauzmann_slope(1.0) == pytest.approx(2.0 * math.sqrt(LOG2))
    assert mean_field_beta(1.0) == pytest.approx(math.sqrt(LOG2 / 4.0))
    assert mean_field_critical_beta(1.0) == pytest.approx(math.sqrt(LOG2))
    # the entropy bound log 2 - beta * slope vanishes at beta_mf
    assert LOG2 - mean_field_beta(0.7) * kauzmann_slope(0.7) == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("sigma", [0.01, 0.5, 1.0, 2.0, 5.0])
def test_beta_star_root(sigma):
    star = beta_star(sigma)
    assert star.residual < 1e-9
    assert mean_field_beta(sigma) < star.root
    assert entropy_lower_bounds(sigma, star.root).improved == pytest.approx(0.0, abs=1e-9)


def test_beta_star_small_sigma():
    assert beta_star(0.01).root < 0.07


def test_entropy_bounds_ordering():
    for beta in (0.0, 0.4, 1.0, 2.0):
        bounds = entropy_lower_bounds(1.0, beta)
        assert bounds.improved >= bounds.mean_field
    assert entropy_lower_bounds(1.0, 0.0) == (LOG2, LOG2)


def test_finite_depth_bound_approaches_phi():
    values = [finite_k_lower_bound(1.0, 1.2, k) for k in range(6)]
    assert values == sorted(values)
    assert finite_k_lower_bound(1.0, 1.2, 200) == pytest.approx(phi(1.0, 1.2), rel=1e-12)
    assert finite_k_lower_bound(0.8, 1.5, 0) == pytest.approx(single_site_bound_term(1.5, "hrem"), rel=1e-12)


def test_jensen_upper_bounds():
    assert hrem_jensen_upper_bound(1.0, 1.0) == pytest.approx(0.5 + single_site_bound_term(1.0, "hrem"))
    assert hps_jensen_upper_bound(1.0, 1.0, 3) == pytest.approx(0.25 + expected_log2cosh(1.0))
    assert hps_jensen_upper_bound(1.0, 1.0, 3, field_strength=0.0) == pytest.approx(LOG2 + 0.25)


@pytest.mark.parametrize("beta", [0.5, 1.0, 2.0, 4.0])
def test_min_energy_sandwich(beta):
    lower, middle, upper = min_energy_sandwich(1.0, beta)
    assert lower <= middle <= upper


def test_domain_errors():
    with pytest.raises(DomainError):
        phi(0.0, 1.0)
    with pytest.raises(DomainError):
        phi(1.0, -0.5)
    with pytest.raises(DomainError):
        c_sigma(-1.0)
    with pytest.raises(DomainError, match="1/2"):
        hps_jensen_upper_bound(0.5, 1.0, 3)
    with pytest.raises(DomainError):
        min_energy_sandwich(1.0, 0.0)
    with pytest.raises(DomainError):
        finite_k_lower_bound(1.0, 1.0, -1)


def test_bound_report():
    report = bound_report(1.0, [0.0, 0.5, 1.0], depths=(1, 4))
    assert report.phi[0] == LOG2
    assert report.phi_minus_log2[0] == 0.0
    assert set(report.finite_k_bounds) == {1, 4}
    assert report.beta_mf < report.beta_star
    assert report.jensen_upper_bounds[1] == pytest.approx(hrem_jensen_upper_bound(1.0, 0.5))
    hps_report = bound_report(1.0, [1.0], model="hps", p=3)
    assert hps_report.model == "hps"
    assert hps_report.jensen_upper_bounds == [pytest.approx(hps_jensen_upper_bound(1.0, 1.0, 3))]


def test_ground_state_probe():
    params = hrem(1)
    records = [
        SampleRecord.build(params, s, 1.0, 0.0, "enumerate-table", min_energy=e) for s, e in enumerate((-2.0, -3.0))
    ]
    probe = gaussian_min_probe(records, 1.0)
    assert probe.min_energy_per_spin.mean == pytest.approx(-1.25)
    assert probe.lower_bound == pytest.approx(-kauzmann_slope(1.0))
    with pytest.raises(ValueError):
        gaussian_min_probe([SampleRecord.build(params, 0, 1.0, 0.0, "mc")], 1.0)


@pytest.mark.parametrize("sigma", [0.5, 1.0, 2.0])
def test_improved_entropy_bound_is_non_increasing(sigma):
    grid = np.round(np.arange(0.0, 3.0 + 1e-9, 0.1), 10)
    improved = [entropy_lower_bounds(sigma, b).improved for b in grid]
    assert np.all(np.diff(improved) <= 1e-12)
    assert all(phi_derivative(sigma, b) <= kauzmann_slope(sigma) + 1e-12 for b in grid)


@pytest.mark.parametrize("sigma,beta", [(0.5, 0.7), (1.0, 1.0), (2.0, 2.0)])
def test_phi_against_sampling(sigma, beta):
    rng = np.random.default_rng(7)
    scale = beta * c_sigma(sigma)
    draws = np.logaddexp(-scale * rng.standard_normal(2_000_000), -scale * rng.standard_normal(2_000_000))
    stderr = draws.std(ddof=1) / math.sqrt(draws.size)
    assert abs(draws.mean() - phi(sigma, beta)) <= 3 * stderr
