"""Verdict rows for every inequality the models must satisfy.

A row compares `lhs relation rhs` with a statistical `slack` (3 standard
errors unless noted) plus an absolute tolerance of 1e-12 for rounding.
"""
from __future__ import annotations

import logging
from collections.abc import Mapping, Sequence
from functools import partial
from typing import Literal, NamedTuple

from .analysis import (
    finite_k_lower_bound,
    hps_jensen_upper_bound,
    hrem_jensen_upper_bound,
    kauzmann_slope,
)
from .config import ExperimentConfig
from .disorder import SeedStream
from .errors import ConfigError, VerificationError
from .hps import (
    OverlapPair,
    empirical_eta_covariance,
    enumeration_budget,
    eta_covariance_exact,
    hps_exact_log_partition,
)
from .hrem import (
    concentration_probe,
    decoupling_gap,
    energy_second_moment,
    exact_log_partition,
    interpolated_free_energy,
    jensen_step_bound,
    variance_tau2,
)
from .quenched import entropy_of, free_energy_of, sample_records
from .schemas import ModelParams, VerdictRow
from .spins import SpinConfiguration
from .stats import Estimate, combined_stderr

logger = logging.getLogger(__name__)

ABS_TOLERANCE = 1e-12
SIGMAS_SLACK = 3.0


class Measured(NamedTuple):
    f: Estimate
    s: Estimate


def check_row(name: str, lhs: float, relation: Literal["<=", ">="], rhs: float, slack: float = 0.0) -> VerdictRow:
    if relation == "<=":
        ok = lhs <= rhs + slack + ABS_TOLERANCE
    else:
        ok = lhs >= rhs - slack - ABS_TOLERANCE
    return VerdictRow(check=name, lhs=lhs, relation=relation, rhs=rhs, slack=slack, status="PASS" if ok else "FAIL")


def _tag(name: str, **labels: object) -> str:
    return name + "[" + ",".join(f"{k}={v:g}" if isinstance(v, float) else f"{k}={v}" for k, v in labels.items()) + "]"


def hrem_rows(sigma: float, beta: float, by_depth: Mapping[int, Measured]) -> list[VerdictRow]:
    """Depth monotonicity, Jensen, entropy and finite-depth rows from per-depth estimates."""
    rows = []
    depths = sorted(by_depth)
    upper = hrem_jensen_upper_bound(sigma, beta)
    slope = kauzmann_slope(sigma)
    for k in depths:
        f, s = by_depth[k]
        rows.append(check_row(_tag("jensen-upper-bound", K=k, sigma=sigma, beta=beta), f.mean, "<=", upper,
                              SIGMAS_SLACK * f.stderr))
        rows.append(check_row(_tag("entropy-lower-bound", K=k, sigma=sigma, beta=beta), s.mean, ">=",
                              f.mean - beta * slope, SIGMAS_SLACK * s.stderr))
        rows.append(check_row(_tag("finite-depth-lower-bound", K=k, sigma=sigma, beta=beta), f.mean, ">=",
                              finite_k_lower_bound(sigma, beta, k), SIGMAS_SLACK * f.stderr))
    for lo, hi in zip(depths, depths[1:]):
        if hi != lo + 1:
            continue
        f_lo, f_hi = by_depth[lo].f, by_depth[hi].f
        se = SIGMAS_SLACK * combined_stderr(f_lo.stderr, f_hi.stderr)
        rows.append(check_row(_tag("free-energy-monotone-in-depth", K=hi, sigma=sigma, beta=beta), f_hi.mean, ">=",
                              f_lo.mean, se))
        rows.append(check_row(_tag("jensen-step", K=hi, sigma=sigma, beta=beta), f_hi.mean, "<=",
                              f_lo.mean + jensen_step_bound(hi, sigma, beta), se))
    return rows


def interpolation_rows(
    sigma: float, beta: float, depth: int, t_grid: Sequence[float], curve: Sequence[Estimate], f_model: Estimate,
    f_halves: Estimate,
) -> list[VerdictRow]:
    """Monotonicity in t and the two endpoint identities."""
    rows = []
    for (t0, a), (t1, b) in zip(zip(t_grid, curve), list(zip(t_grid, curve))[1:]):
        rows.append(check_row(_tag("interpolation-monotone", K=depth, t=float(t1)), b.mean, ">=", a.mean,
                              SIGMAS_SLACK * combined_stderr(a.stderr, b.stderr)))
    ends = dict(zip(t_grid, curve))
    if 1.0 in ends:
        gap = abs(ends[1.0].mean - f_model.mean)
        rows.append(check_row(_tag("interpolation-endpoints", K=depth, t=1.0), gap, "<=", 0.0,
                              SIGMAS_SLACK * combined_stderr(ends[1.0].stderr, f_model.stderr)))
    if 0.0 in ends:
        gap = abs(ends[0.0].mean - f_halves.mean)
        rows.append(check_row(_tag("interpolation-endpoints", K=depth, t=0.0), gap, "<=", 0.0,
                              SIGMAS_SLACK * combined_stderr(ends[0.0].stderr, f_halves.stderr)))
    return rows


def hps_rows(sigma: float, beta: float, p: int, by_depth: Mapping[int, Estimate], field_strength: float = 1.0) -> list[VerdictRow]:
    rows = []
    depths = sorted(by_depth)
    upper = hps_jensen_upper_bound(sigma, beta, p, field_strength)
    for k in depths:
        f = by_depth[k]
        rows.append(check_row(_tag("hps-upper-bound", K=k, p=p, sigma=sigma, beta=beta), f.mean, "<=", upper,
                              SIGMAS_SLACK * f.stderr))
    for lo, hi in zip(depths, depths[1:]):
        if hi == lo + 1:
            a, b = by_depth[lo], by_depth[hi]
            rows.append(check_row(_tag("hps-monotone-in-depth", K=hi, p=p, sigma=sigma, beta=beta), b.mean, ">=",
                                  a.mean, SIGMAS_SLACK * combined_stderr(a.stderr, b.stderr)))
    return rows


def covariance_row(pair: OverlapPair, params: ModelParams, empirical: Estimate) -> VerdictRow:
    exact = eta_covariance_exact(pair, params)
    return check_row(_tag("hps-eta-covariance", K=params.depth, Q=float(pair.overlap)), abs(empirical.mean - exact),
                     "<=", 0.0, SIGMAS_SLACK * empirical.stderr)


def energy_variance_row(depth: int, sigma: float, moment: Estimate) -> VerdictRow:
    tau2 = variance_tau2(depth, sigma).value
    return check_row(_tag("energy-variance", K=depth, sigma=sigma), abs(moment.mean - tau2), "<=", 0.0,
                     SIGMAS_SLACK * moment.stderr)


def concentration_row(depth: int, sigma: float, beta: float, fraction: float, bound: float, stderr: float) -> VerdictRow:
    return check_row(_tag("concentration-tail", K=depth, sigma=sigma, beta=beta), fraction, "<=", bound, 2.0 * stderr)


def rows_from_aggregates(
    aggregates: Sequence[Mapping[str, str]], depths: Sequence[int], sigmas: Sequence[float], betas: Sequence[float]
) -> list[VerdictRow]:
    """HREM rows from persisted aggregate CSV rows.

    Raises:
        ConfigError: Listing every (K, sigma, beta) run that is missing.
    """
    table = {
        (int(r["K"]), float(r["sigma"]), float(r["beta"])): Measured(
            Estimate(float(r["f_mean"]), float(r["f_stderr"]), int(r["n"])),
            Estimate(float(r["s_mean"]), float(r["s_stderr"]), int(r["n"])),
        )
        for r in aggregates
        if r.get("model") == "hrem"
    }
    missing = [(k, s, b) for s in sigmas for b in betas for k in depths if (k, s, b) not in table]
    if missing:
        runs = "; ".join(f"free-energy --model hrem --k {k} --sigma {s:g} --beta {b:g}" for k, s, b in missing)
        raise ConfigError(f"missing aggregate rows, run: {runs}")
    rows = []
    for s in sigmas:
        for b in betas:
            rows.extend(hrem_rows(s, b, {k: table[(k, s, b)] for k in depths}))
    return rows


def _alternating_pair(params: ModelParams) -> OverlapPair:
    """Fixed pair whose overlap pattern (+,+,-) repeats, so Q = 1/3 when 3 divides N."""
    n = params.n_spins
    a = SpinConfiguration((1 << n) - 1, n)
    flips = sum(1 << i for i in range(2, n, 3))
    return OverlapPair(a, SpinConfiguration(a.bits ^ flips, n))


def verification_suite(config: ExperimentConfig) -> list[VerdictRow]:
    """Compute every row for the configured grid, enumerating where budgets allow."""
    seeds = SeedStream(config.seed)
    n = config.n_samples
    rows: list[VerdictRow] = []
    for sigma in config.sigmas:
        for beta in config.betas:
            by_depth = {}
            for k in config.depths:
                params = ModelParams(kind="hrem", depth=k, sigma=sigma, beta=beta)
                records = sample_records(exact_log_partition, params, n, seeds, workers=config.workers)
                by_depth[k] = Measured(free_energy_of(records), entropy_of(records))
            rows.extend(hrem_rows(sigma, beta, by_depth))
            interp_depth = 2 if 2 in by_depth else max(by_depth)
            if interp_depth >= 1 and interp_depth - 1 in by_depth:
                params = ModelParams(kind="hrem", depth=interp_depth, sigma=sigma, beta=beta)
                curve = [interpolated_free_energy(params, t, n, seeds, workers=config.workers) for t in config.t_grid]
                rows.extend(interpolation_rows(sigma, beta, interp_depth, config.t_grid, curve,
                                               by_depth[interp_depth].f, by_depth[interp_depth - 1].f))
                gap = decoupling_gap(params, seeds.take(min(n, 8)))
                rows.append(check_row(_tag("interpolation-decoupled", K=interp_depth, sigma=sigma, beta=beta), gap,
                                      "<=", 0.0, 1e-9 * params.n_spins))
            top = max(config.depths)
            probe = concentration_probe(ModelParams(kind="hrem", depth=top, sigma=sigma, beta=beta), n,
                                        SeedStream(config.seed, stream=1), workers=config.workers)
            rows.append(concentration_row(top, sigma, beta, probe.fraction, probe.bound, probe.binomial_stderr))
            if sigma > 0.5:
                rows.extend(_hps_suite(config, sigma, beta, seeds))
        var_params = ModelParams(kind="hrem", depth=min(max(config.depths), 3), sigma=sigma)
        all_up = SpinConfiguration((1 << var_params.n_spins) - 1, var_params.n_spins)
        moment = energy_second_moment(all_up, var_params, max(n, 10_000), SeedStream(config.seed, stream=3))
        rows.append(energy_variance_row(var_params.depth, sigma, moment))
    rows.append(_covariance_suite(config))
    failed = [r.check for r in rows if not r.passed]
    logger.info("verification: %d rows, %d failed", len(rows), len(failed))
    return rows


def _hps_suite(config: ExperimentConfig, sigma: float, beta: float, seeds: SeedStream) -> list[VerdictRow]:
    by_depth = {}
    for k in range(0, 3):
        params = ModelParams(kind="hps", depth=k, sigma=sigma, beta=beta, p=config.p, field_strength=config.field_strength)
        if params.n_configs > enumeration_budget(config.long_run):
            break
        solver = partial(hps_exact_log_partition, long_run=config.long_run)
        records = sample_records(solver, params, config.n_samples, seeds, workers=config.workers)
        by_depth[k] = free_energy_of(records)
    return hps_rows(sigma, beta, config.p, by_depth, config.field_strength)


def _covariance_suite(config: ExperimentConfig) -> VerdictRow:
    params = ModelParams(kind="hps", depth=1, sigma=1.0, p=config.p)
    pair = _alternating_pair(params)
    n = max(config.n_samples, 1000)
    return covariance_row(pair, params, empirical_eta_covariance(pair, params, n, SeedStream(config.seed, stream=2)))


def exit_status(rows: Sequence[VerdictRow]) -> int:
    return 0 if all(r.passed for r in rows) else VerificationError.exit_code


def format_table(rows: Sequence[VerdictRow]) -> str:
    width = max((len(r.check) for r in rows), default=5)
    lines = [f"{'check':<{width}}  {'lhs':>14}  rel  {'rhs':>14}  {'slack':>10}  status"]
    for r in rows:
        lines.append(f"{r.check:<{width}}  {r.lhs:>14.8g}  {r.relation:>3}  {r.rhs:>14.8g}  {r.slack:>10.3g}  {r.status}")
    return "\n".join(lines)
