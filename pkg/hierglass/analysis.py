"""Analytic bounds: single-site Gaussian expectations, beta*, and bound reports.

All expectations are over standard normals. The two-state single-site free
energy reduces to one dimension: for independent e+, e-,

    E[log(exp(-b e+) + exp(-b e-))] = E[log 2cosh(b Z / sqrt 2)],

and log 2cosh is even, so it is integrated over [0, 9.5] on fixed panels with
Gauss-Legendre nodes. The Gauss-Hermite `QuadratureRule` covers smooth
integrands in one or two dimensions.
"""
from __future__ import annotations

import logging
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass
from functools import lru_cache
from typing import Literal, NamedTuple

import numpy as np
from numpy.polynomial.hermite import hermgauss
from numpy.polynomial.legendre import leggauss
from scipy.optimize import bisect

from .config import settings
from .errors import DomainError, SolverError
from .schemas import LOG2, BoundReport, SampleRecord
from .stats import Estimate, mean_stderr

logger = logging.getLogger(__name__)

PANEL_EDGES = (0.0, 0.125, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 5.0, 6.0, 7.5, 9.5)
ACCURATE_BETA_MAX = 5.0
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
_MAX_DOUBLINGS = 60


@dataclass(frozen=True, slots=True)
class QuadratureRule:
    """Gauss-Hermite nodes and weights for integrals against exp(-x^2).

    `dim` is 1 or 2; the 2D rule is the tensor product of the 1D one.
    """
    n: int
    nodes: np.ndarray
    weights: np.ndarray
    dim: int = 1

    @classmethod
    def hermite(cls, n: int | None = None, dim: int = 1) -> "QuadratureRule":
        n = n or settings.quadrature_order
        if dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {dim}")
        nodes, weights = hermgauss(n)
        return cls(n, nodes, weights, dim)

    def integrate(self, fn: Callable[..., np.ndarray]) -> float:
        """Integral of fn(x[, y]) * exp(-|x|^2)."""
        if self.dim == 1:
            return float(np.dot(self.weights, fn(self.nodes)))
        x, y = np.meshgrid(self.nodes, self.nodes, indexing="ij")
        return float(np.sum(np.outer(self.weights, self.weights) * fn(x, y)))

    def expect(self, fn: Callable[..., np.ndarray]) -> float:
        """E[fn(Z)] (or E[fn(Z1, Z2)]) for independent standard normals."""
        root2 = math.sqrt(2.0)
        if self.dim == 1:
            return self.integrate(lambda x: fn(root2 * x)) / math.sqrt(math.pi)
        return self.integrate(lambda x, y: fn(root2 * x, root2 * y)) / math.pi


@lru_cache(maxsize=8)
def _panel_nodes(order: int) -> tuple[np.ndarray, np.ndarray]:
    base_x, base_w = leggauss(order)
    xs, ws = [], []
    for lo, hi in zip(PANEL_EDGES[:-1], PANEL_EDGES[1:]):
        half = (hi - lo) / 2.0
        xs.append(lo + half * (base_x + 1.0))
        ws.append(half * base_w)
    x = np.concatenate(xs)
    w = np.concatenate(ws) * _INV_SQRT_2PI * np.exp(-x * x / 2.0)
    return x, w


def even_expectation(fn: Callable[[np.ndarray], np.ndarray], order: int | None = None) -> float:
    """E[fn(Z)] for an even fn, as twice the integral over the positive half-line."""
    x, w = _panel_nodes(order or settings.quadrature_order)
    return 2.0 * float(np.dot(w, fn(x)))


def log2cosh(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(x, -x)


def expected_log2cosh(b: float, order: int | None = None) -> float:
    """E[log 2cosh(b Z)]."""
    if b == 0.0:
        return LOG2
    return even_expectation(lambda z: log2cosh(b * z), order)


def _check_sigma(sigma: float) -> None:
    if not sigma > 0.0:
        raise DomainError(f"sigma must be > 0, got {sigma}")


def _check_beta(beta: float) -> None:
    if beta < 0.0:
        raise DomainError(f"beta must be >= 0, got {beta}")
    if beta > ACCURATE_BETA_MAX:
        logger.warning("beta=%g > %g: quadrature accuracy is degraded", beta, ACCURATE_BETA_MAX)


def c_sigma(sigma: float) -> float:
    """Disorder rescaling c(sigma) = sqrt(2^s / (2^s - 1))."""
    _check_sigma(sigma)
    two_s = 2.0 ** sigma
    return math.sqrt(two_s / (two_s - 1.0))


def kauzmann_slope(sigma: float) -> float:
    """c(sigma) * sqrt(2 log 2), the ground-state energy scale per spin."""
    return c_sigma(sigma) * math.sqrt(2.0 * LOG2)


def phi(sigma: float, beta: float, order: int | None = None) -> float:
    """Single-site free energy with disorder rescaled by c(sigma).

    Raises:
        DomainError: If sigma <= 0 or beta < 0.
    """
    c = c_sigma(sigma)
    _check_beta(beta)
    if beta == 0.0:
        return LOG2
    return expected_log2cosh(beta * c / math.sqrt(2.0), order)


def phi_derivative(sigma: float, beta: float, order: int | None = None) -> float:
    """d phi / d beta = (c / sqrt 2) E[Z tanh(beta c Z / sqrt 2)]."""
    c = c_sigma(sigma)
    _check_beta(beta)
    a = beta * c / math.sqrt(2.0)
    return c / math.sqrt(2.0) * even_expectation(lambda z: z * np.tanh(a * z), order)


def mean_field_beta(sigma: float) -> float:
    """Lower bound on the inverse Kauzmann temperature from s >= log 2 - beta*c*sqrt(2 log 2)."""
    _check_sigma(sigma)
    two_s = 2.0 ** sigma
    return math.sqrt((two_s - 1.0) / two_s * LOG2 / 2.0)


def mean_field_critical_beta(sigma: float) -> float:
    """Critical inverse temperature of a REM with per-spin variance c(sigma)^2."""
    _check_sigma(sigma)
    two_s = 2.0 ** sigma
    return math.sqrt((two_s - 1.0) / two_s * 2.0 * LOG2)


class BetaStar(NamedTuple):
    root: float
    residual: float
    doublings: int


def improved_entropy_bound(sigma: float, beta: float) -> float:
    return phi(sigma, beta) - beta * kauzmann_slope(sigma)


def beta_star(sigma: float, xtol: float = 1e-12) -> BetaStar:
    """Unique zero of phi(beta) - beta * c * sqrt(2 log 2).

    The bracket starts at [beta_mf, 2 beta_mf], where the function is positive
    at the lower end, and its upper end doubles until the sign changes.

    Raises:
        DomainError: If sigma <= 0.
        SolverError: If no sign change appears within 60 doublings.
    """
    lo = mean_field_beta(sigma)
    hi = 2.0 * lo
    fn = lambda b: improved_entropy_bound(sigma, b)  # noqa: E731
    doublings = 0
    while fn(hi) > 0.0:
        doublings += 1
        if doublings > _MAX_DOUBLINGS:
            raise SolverError(f"no sign change for beta* bracket up to {hi:g} (sigma={sigma})")
        lo, hi = hi, 2.0 * hi
    root = bisect(fn, lo, hi, xtol=xtol, maxiter=200)
    residual = abs(fn(root))
    logger.debug("beta*(sigma=%g) = %.12f, residual %.2e", sigma, root, residual)
    return BetaStar(root, residual, doublings)


class EntropyBounds(NamedTuple):
    mean_field: float
    improved: float


def entropy_lower_bounds(sigma: float, beta: float) -> EntropyBounds:
    """Mean-field (log 2 - beta*slope) and improved (phi - beta*slope) entropy bounds."""
    _check_beta(beta)
    slope = kauzmann_slope(sigma)
    return EntropyBounds(LOG2 - beta * slope, phi(sigma, beta) - beta * slope)


def finite_k_lower_bound(sigma: float, beta: float, depth: int, order: int | None = None) -> float:
    """Lower bound on f_K: the single-site free energy with variance 1 + sum_{l=1..K} 2^{-l sigma}."""
    _check_sigma(sigma)
    _check_beta(beta)
    if depth < 0:
        raise DomainError(f"depth must be >= 0, got {depth}")
    variance = 1.0 + sum(2.0 ** (-l * sigma) for l in range(1, depth + 1))
    return expected_log2cosh(beta * math.sqrt(variance / 2.0), order)


def single_site_bound_term(
    beta: float, model: Literal["hrem", "hps"] = "hrem", field_strength: float = 1.0, order: int | None = None
) -> float:
    """Single-site free energy entering the Jensen upper bounds.

    HREM: E[log sum_{S=+-1} exp(-beta eps_S)]. HPS: E[log 2cosh(beta h)].
    """
    _check_beta(beta)
    if model == "hrem":
        return expected_log2cosh(beta / math.sqrt(2.0), order)
    return expected_log2cosh(beta * field_strength, order)


def hrem_jensen_upper_bound(sigma: float, beta: float) -> float:
    """f_K <= beta^2 / (2 (2^s - 1)) + single-site term, for every K."""
    _check_sigma(sigma)
    return beta * beta / (2.0 * (2.0 ** sigma - 1.0)) + single_site_bound_term(beta, "hrem")


def hps_jensen_upper_bound(sigma: float, beta: float, p: int, field_strength: float = 1.0) -> float:
    """f_K <= E[log 2cosh(beta h)] + beta^2 / (2 (p^{2s-1} - 1)), for sigma > 1/2."""
    if not sigma > 0.5:
        raise DomainError(f"sigma must be > 1/2 for the hps bound, got {sigma}")
    return single_site_bound_term(beta, "hps", field_strength) + beta * beta / (2.0 * (p ** (2.0 * sigma - 1.0) - 1.0))


def min_energy_sandwich(sigma: float, beta: float) -> tuple[float, float, float]:
    """(lower, phi/beta, upper) with lower = c/sqrt(pi) and upper = lower + log 2 / beta."""
    if beta <= 0.0:
        raise DomainError(f"beta must be > 0, got {beta}")
    lower = c_sigma(sigma) / math.sqrt(math.pi)
    return lower, phi(sigma, beta) / beta, lower + LOG2 / beta


class GroundStateProbe(NamedTuple):
    min_energy_per_spin: Estimate
    lower_bound: float


def gaussian_min_probe(records: Sequence[SampleRecord], sigma: float) -> GroundStateProbe:
    """Mean enumerated ground-state energy per spin against -c(sigma) sqrt(2 log 2)."""
    values = [r.min_energy / r.n_spins for r in records if r.min_energy is not None]
    if not values:
        raise ValueError("no records carry a ground-state energy")
    return GroundStateProbe(mean_stderr(values), -kauzmann_slope(sigma))


def bound_report(
    sigma: float,
    betas: Sequence[float],
    *,
    depths: Sequence[int] = (1, 2, 3),
    model: Literal["hrem", "hps"] = "hrem",
    p: int = 3,
) -> BoundReport:
    """Assemble every analytic curve for one sigma over a beta grid."""
    betas = [float(b) for b in betas]
    star = beta_star(sigma)
    phis = [phi(sigma, b) for b in betas]
    bounds = [entropy_lower_bounds(sigma, b) for b in betas]
    if model == "hrem":
        jensen = [hrem_jensen_upper_bound(sigma, b) for b in betas]
    else:
        jensen = [hps_jensen_upper_bound(sigma, b, p) for b in betas]
    return BoundReport(
        model=model,
        sigma=sigma,
        c=c_sigma(sigma),
        betas=betas,
        phi=phis,
        dphi=[phi_derivative(sigma, b) for b in betas],
        phi_minus_log2=[v - LOG2 for v in phis],
        beta_mf=mean_field_beta(sigma),
        beta_c=mean_field_critical_beta(sigma),
        beta_star=star.root,
        beta_star_residual=star.residual,
        mean_field_entropy_bound=[b.mean_field for b in bounds],
        improved_entropy_bound=[b.improved for b in bounds],
        finite_k_bounds={k: [finite_k_lower_bound(sigma, b, k) for b in betas] for k in depths},
        jensen_upper_bounds=jensen,
    )
