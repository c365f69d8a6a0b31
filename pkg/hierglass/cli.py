"""Command-line front end: experiment runs, verdict tables and plots.

Every subcommand reads an optional key=value config file (``--config``) and
lets flags override it. Outputs are written atomically into the configured
output directory, with the manifest written last.

Exit codes: 0 success, 1 usage, 2 capacity, 3 verification failure,
4 internal consistency.
"""
from __future__ import annotations

import argparse
import logging
import sys
import time
from collections.abc import Callable, Sequence
from functools import partial
from pathlib import Path
from typing import Any

from . import __version__
from .analysis import beta_star, bound_report, entropy_lower_bounds, mean_field_beta
from .config import ExperimentConfig, load_experiment_config, settings
from .disorder import DisorderOracle, SeedStream
from .errors import CapacityError, ConfigError, HierglassError
from .hps import (
    OverlapPair,
    empirical_eta_covariance,
    enumeration_budget,
    eta_covariance_asymptotic,
    eta_covariance_exact,
    hps_exact_log_partition,
    hps_interpolated_free_energy,
)
from .hrem import concentration_probe, exact_log_partition, interpolated_free_energy, resolve_mode
from .mc import mc_log_partition, run_chain
from .persistence import (
    AGGREGATE_HEADER,
    HPS_AGGREGATE_HEADER,
    read_csv,
    write_csv,
    write_json,
    write_jsonl,
    write_manifest,
)
from .plotting import plot_directory
from .quenched import entropy_of, free_energy_of, sample_records
from .schemas import ModelParams, SampleRecord
from .spins import SpinConfiguration
from .verify import exit_status, format_table, rows_from_aggregates, verification_suite

logger = logging.getLogger("hierglass")


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        raise ConfigError(message)


# flag -> ExperimentConfig field
_FLAGS: dict[str, tuple[str, dict[str, Any]]] = {
    "--model": ("model", {"choices": ["hrem", "hps"]}),
    "--k": ("depths", {"help": "depth K, list 'a,b' or range 'lo-hi'"}),
    "--sigma": ("sigmas", {"help": "sigma or comma list"}),
    "--beta": ("betas", {"help": "beta, comma list or start:stop:step"}),
    "--p": ("p", {"type": int}),
    "--n": ("n_samples", {"type": int, "help": "disorder samples"}),
    "--seed": ("seed", {"type": int}),
    "--method": ("method", {"choices": ["enumerate", "mc", "auto"]}),
    "--memory-cap": ("memory_cap", {"type": int, "help": "largest energy table (entries)"}),
    "--time-cap": ("time_cap", {"type": float, "help": "seconds; 0 disables"}),
    "--output-dir": ("output_dir", {}),
    "--workers": ("workers", {"type": int}),
    "--field-strength": ("field_strength", {"type": float}),
    "--t-grid": ("t_grid", {}),
    "--sweeps": ("sweeps", {"type": int}),
    "--trace": ("trace", {"help": "per-sweep energy CSV (mc-run)"}),
}


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value experiment file")
    for flag, (dest, kwargs) in _FLAGS.items():
        p.add_argument(flag, dest=dest, default=None, **kwargs)
    p.add_argument("--long-run", dest="long_run", action="store_const", const=True, default=None,
                   help="allow larger hps enumerations")


def _load(args: argparse.Namespace) -> ExperimentConfig:
    overrides = {dest: getattr(args, dest) for dest, _ in _FLAGS.values()}
    overrides["long_run"] = args.long_run
    return load_experiment_config(args.config, **overrides)


class _Deadline:
    def __init__(self, seconds: float) -> None:
        self.seconds = seconds
        self.start = time.monotonic()

    def check(self, what: str) -> None:
        if self.seconds > 0 and time.monotonic() - self.start > self.seconds:
            raise CapacityError(f"time cap of {self.seconds:g}s exceeded after {what}")


def _params(cfg: ExperimentConfig, depth: int, sigma: float, beta: float) -> ModelParams:
    return ModelParams(kind=cfg.model, depth=depth, sigma=sigma, beta=beta, p=cfg.p, field_strength=cfg.field_strength)


def _solver(cfg: ExperimentConfig, params: ModelParams) -> Callable[[ModelParams, Any], SampleRecord]:
    """Enumerator for the model, or Monte Carlo when asked or when nothing fits."""
    if cfg.method == "mc":
        return partial(mc_log_partition, sweeps=cfg.sweeps)
    if params.kind == "hrem":
        try:
            resolve_mode(params, "auto", cfg.memory_cap)
        except CapacityError:
            if cfg.method == "enumerate":
                raise
            logger.info("K=%d does not fit the enumeration budget; using mc", params.depth)
            return partial(mc_log_partition, sweeps=cfg.sweeps)
        return partial(exact_log_partition, table_budget=cfg.memory_cap)
    if params.n_configs > enumeration_budget(cfg.long_run) and cfg.method == "auto":
        logger.info("p^K=%d spins do not fit the enumeration budget; using mc", params.n_spins)
        return partial(mc_log_partition, sweeps=cfg.sweeps)
    return partial(hps_exact_log_partition, long_run=cfg.long_run)


def _records(cfg: ExperimentConfig, params: ModelParams) -> list[SampleRecord]:
    return sample_records(_solver(cfg, params), params, cfg.n_samples, SeedStream(cfg.seed), workers=cfg.workers,
                          progress=cfg.workers == 1)


def _aggregate_row(cfg: ExperimentConfig, params: ModelParams, records: list[SampleRecord]) -> list[Any]:
    f, s = free_energy_of(records), entropy_of(records)
    row = [params.kind, params.depth, params.sigma, params.beta, len(records), f.mean, f.stderr, s.mean, s.stderr,
           records[0].method]
    return [*row, params.p] if params.kind == "hps" else row


def _start(cfg: ExperimentConfig, command: str) -> None:
    write_manifest(cfg.output_dir, cfg.model_dump(), command, [], __version__, status="running")


def _finish(cfg: ExperimentConfig, command: str, files: Sequence[Path]) -> None:
    write_manifest(cfg.output_dir, cfg.model_dump(), command, files, __version__)


def cmd_gen_config(cfg: ExperimentConfig, args: argparse.Namespace) -> int:
    text = cfg.to_key_values()
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        logger.info("wrote %s", args.out)
    else:
        sys.stdout.write(text)
    return 0


def cmd_free_energy(cfg: ExperimentConfig, args: argparse.Namespace) -> int:
    out = Path(cfg.output_dir)
    _start(cfg, "free-energy")
    deadline = _Deadline(cfg.time_cap)
    all_records: list[SampleRecord] = []
    rows = []
    for sigma in cfg.sigmas:
        for depth in cfg.depths:
            for beta in cfg.betas:
                params = _params(cfg, depth, sigma, beta)
                records = _records(cfg, params)
                all_records.extend(records)
                rows.append(_aggregate_row(cfg, params, records))
                print(f"{cfg.model} K={depth} sigma={sigma:g} beta={beta:g}: "
                      f"f={rows[-1][5]:.10f} +- {rows[-1][6]:.3g}  s={rows[-1][7]:.10f} +- {rows[-1][8]:.3g}")
                deadline.check(f"K={depth} sigma={sigma:g} beta={beta:g}")
    header = HPS_AGGREGATE_HEADER if cfg.model == "hps" else AGGREGATE_HEADER
    files = [write_jsonl(out / "records.jsonl", all_records), write_csv(out / "aggregate.csv", header, rows)]
    _finish(cfg, "free-energy", files)
    return 0


ENTROPY_HEADER = ["model", "K", "sigma", "beta", "n", "s_mean", "s_stderr", "f_mean", "f_stderr",
                  "mean_field_bound", "improved_bound"]


def cmd_entropy_scan(cfg: ExperimentConfig, args: argparse.Namespace) -> int:
    out = Path(cfg.output_dir)
    _start(cfg, "entropy-scan")
    deadline = _Deadline(cfg.time_cap)
    rows = []
    for sigma in cfg.sigmas:
        for depth in cfg.depths:
            for beta in cfg.betas:
                params = _params(cfg, depth, sigma, beta)
                records = _records(cfg, params)
                f, s = free_energy_of(records), entropy_of(records)
                bounds = entropy_lower_bounds(sigma, beta)
                rows.append([cfg.model, depth, sigma, beta, len(records), s.mean, s.stderr, f.mean, f.stderr,
                             bounds.mean_field, bounds.improved])
                deadline.check(f"K={depth} sigma={sigma:g} beta={beta:g}")
    files = [write_csv(out / "entropy.csv", ENTROPY_HEADER, rows)]
    _finish(cfg, "entropy-scan", files)
    print(f"wrote {len(rows)} rows to {files[0]}")
    return 0


def cmd_bounds(cfg: ExperimentConfig, args: argparse.Namespace) -> int:
    out = Path(cfg.output_dir)
    _start(cfg, "bounds")
    files = []
    for sigma in cfg.sigmas:
        report = bound_report(sigma, cfg.betas, depths=cfg.depths, model=cfg.model, p=cfg.p)
        stem = f"bounds_sigma{sigma:g}"
        files.append(write_json(out / f"{stem}.json", report))
        header = ["beta", "phi", "dphi", "mean_field_bound", "improved_bound", "jensen_upper",
                  *[f"finite_k{k}" for k in sorted(report.finite_k_bounds)]]
        curves = zip(report.betas, report.phi, report.dphi, report.mean_field_entropy_bound,
                     report.improved_entropy_bound, report.jensen_upper_bounds,
                     *[report.finite_k_bounds[k] for k in sorted(report.finite_k_bounds)])
        files.append(write_csv(out / f"{stem}.csv", header, curves))
        print(f"sigma={sigma:g}: c={report.c:.10f} beta_mf={report.beta_mf:.10f} beta_c={report.beta_c:.10f} "
              f"beta*={report.beta_star:.10f} (residual {report.beta_star_residual:.1e})")
    _finish(cfg, "bounds", files)
    return 0


def cmd_beta_star(cfg: ExperimentConfig, args: argparse.Namespace) -> int:
    for sigma in cfg.sigmas:
        star = beta_star(sigma)
        print(f"sigma={sigma:g}: beta*={star.root:.12f} residual={star.residual:.2e} beta_mf={mean_field_beta(sigma):.12f}")
    return 0


def cmd_interpolate(cfg: ExperimentConfig, args: argparse.Namespace) -> int:
    out = Path(cfg.output_dir)
    _start(cfg, "interpolate")
    seeds = SeedStream(cfg.seed)
    rows = []
    for sigma in cfg.sigmas:
        for beta in cfg.betas:
            params = _params(cfg, cfg.depths[0], sigma, beta)
            for t in cfg.t_grid:
                if cfg.model == "hrem":
                    est = interpolated_free_energy(params, t, cfg.n_samples, seeds, workers=cfg.workers)
                else:
                    est = hps_interpolated_free_energy(params, t, cfg.n_samples, seeds, long_run=cfg.long_run,
                                                       workers=cfg.workers)
                rows.append([cfg.model, params.depth, sigma, beta, t, est.n, est.mean, est.stderr])
                print(f"t={t:g}: phi_t={est.mean:.10f} +- {est.stderr:.3g}")
    files = [write_csv(out / "interpolation.csv", ["model", "K", "sigma", "beta", "t", "n", "phi_mean", "phi_stderr"],
                       rows)]
    _finish(cfg, "interpolate", files)
    return 0


def cmd_concentration(cfg: ExperimentConfig, args: argparse.Namespace) -> int:
    if cfg.model != "hrem":
        raise ConfigError("concentration has a closed-form bound for hrem only")
    out = Path(cfg.output_dir)
    _start(cfg, "concentration")
    rows = []
    for sigma in cfg.sigmas:
        for beta in cfg.betas:
            for depth in cfg.depths:
                res = concentration_probe(_params(cfg, depth, sigma, beta), cfg.n_samples, SeedStream(cfg.seed),
                                          workers=cfg.workers)
                rows.append([depth, sigma, beta, res.n, res.fraction, res.bound, res.threshold, res.binomial_stderr])
                print(f"K={depth}: tail fraction {res.fraction:.4f} (+- {res.binomial_stderr:.2g}) bound {res.bound:.4f}")
    header = ["K", "sigma", "beta", "n", "fraction", "bound", "threshold", "binomial_stderr"]
    files = [write_csv(out / "concentration.csv", header, rows)]
    _finish(cfg, "concentration", files)
    return 0


def cmd_hps_covariance(cfg: ExperimentConfig, args: argparse.Namespace) -> int:
    out = Path(cfg.output_dir)
    _start(cfg, "hps-covariance")
    rows = []
    for sigma in cfg.sigmas:
        for depth in cfg.depths:
            params = ModelParams(kind="hps", depth=depth, sigma=sigma, p=cfg.p)
            if depth < 1:
                raise ConfigError("hps-covariance needs K >= 1")
            n = params.n_spins
            same = SpinConfiguration((1 << n) - 1, n)
            pattern = SpinConfiguration(same.bits ^ sum(1 << i for i in range(cfg.p - 1, n, cfg.p)), n)
            for pair in (OverlapPair(same, same), OverlapPair(same, pattern)):
                exact = eta_covariance_exact(pair, params)
                emp = empirical_eta_covariance(pair, params, cfg.n_samples, SeedStream(cfg.seed))
                rows.append([depth, cfg.p, sigma, pair.overlap, exact, eta_covariance_asymptotic(pair.overlap, params),
                             emp.mean, emp.stderr])
                print(f"K={depth} Q={pair.overlap:.4f}: exact {exact:.6g} empirical {emp.mean:.6g} +- {emp.stderr:.2g}")
    header = ["K", "p", "sigma", "Q", "exact", "asymptotic", "empirical", "stderr"]
    files = [write_csv(out / "covariance.csv", header, rows)]
    _finish(cfg, "hps-covariance", files)
    return 0


def cmd_mc_run(cfg: ExperimentConfig, args: argparse.Namespace) -> int:
    out = Path(cfg.output_dir)
    _start(cfg, "mc-run")
    seed = SeedStream(cfg.seed).take(1)[0]
    rows = []
    for sigma in cfg.sigmas:
        for depth in cfg.depths:
            for beta in cfg.betas:
                params = _params(cfg, depth, sigma, beta)
                trace = None
                if cfg.trace:
                    trace = out / f"{Path(cfg.trace).stem}_K{depth}_s{sigma:g}_b{beta:g}.csv"
                res = run_chain(params, DisorderOracle(seed, params), cfg.sweeps, trace=trace)
                rows.append([cfg.model, depth, sigma, beta, cfg.sweeps, res.mean_energy.mean, res.mean_energy.stderr,
                             res.acceptance])
                print(f"K={depth} sigma={sigma:g} beta={beta:g}: <H>={res.mean_energy.mean:.8g} "
                      f"+- {res.mean_energy.stderr:.2g} acceptance {res.acceptance:.3f}")
    header = ["model", "K", "sigma", "beta", "sweeps", "mean_energy", "stderr", "acceptance"]
    files = [write_csv(out / "mc.csv", header, rows)]
    if cfg.trace:
        files.extend(sorted(out.glob(f"{Path(cfg.trace).stem}_K*.csv")))
    _finish(cfg, "mc-run", files)
    return 0


def cmd_verify(cfg: ExperimentConfig, args: argparse.Namespace) -> int:
    if args.input:
        aggregate = Path(args.input) / "aggregate.csv"
        if not aggregate.is_file():
            raise ConfigError(f"{aggregate} not found; run free-energy for depths {cfg.depths} first")
        rows = rows_from_aggregates(read_csv(aggregate), cfg.depths, cfg.sigmas, cfg.betas)
    else:
        rows = verification_suite(cfg)
    out = Path(cfg.output_dir)
    _start(cfg, "verify")
    files = [write_csv(out / "verdicts.csv", ["check", "lhs", "relation", "rhs", "slack", "status"],
                       ([r.check, r.lhs, r.relation, r.rhs, r.slack, r.status] for r in rows))]
    _finish(cfg, "verify", files)
    print(format_table(rows))
    return exit_status(rows)


def cmd_plot(cfg: ExperimentConfig, args: argparse.Namespace) -> int:
    written = plot_directory(args.input or cfg.output_dir)
    for path in written:
        print(f"wrote {path}")
    return 0


COMMANDS: dict[str, tuple[Callable[[ExperimentConfig, argparse.Namespace], int], str]] = {
    "gen-config": (cmd_gen_config, "write a key=value config with every field"),
    "free-energy": (cmd_free_energy, "quenched free energy and entropy per grid point"),
    "entropy-scan": (cmd_entropy_scan, "entropy against beta with both lower bounds"),
    "bounds": (cmd_bounds, "analytic bound report per sigma"),
    "beta-star": (cmd_beta_star, "solve for beta* per sigma"),
    "interpolate": (cmd_interpolate, "free energy along the top-level interpolation"),
    "concentration": (cmd_concentration, "empirical tail fraction against its bound"),
    "hps-covariance": (cmd_hps_covariance, "exact, asymptotic and sampled interaction covariance"),
    "mc-run": (cmd_mc_run, "single Metropolis chain per grid point"),
    "verify": (cmd_verify, "verdict table for every inequality"),
    "plot": (cmd_plot, "SVG charts from CSV outputs"),
}


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="hierglass", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"hierglass {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        _add_common(p)
        if name == "gen-config":
            p.add_argument("--out", help="file to write (stdout when omitted)")
        if name in ("verify", "plot"):
            p.add_argument("--input", help="run directory with previously written CSV files")
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(level=settings.log_level.upper(), format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
        cfg = _load(args)
        return COMMANDS[args.command][0](cfg, args)
    except HierglassError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
