"""Configuration for hierglass runs.

Process-wide settings come from the environment (optionally a `.env` file) and
live in a Pydantic model, as do per-experiment configurations. Experiment files
are flat ``key=value`` text parsed with python-dotenv; CLI flags override them.
"""
from __future__ import annotations

import math
import os
from pathlib import Path
from typing import Any, Literal

from dotenv import dotenv_values, load_dotenv
from pydantic import BaseModel, ValidationError, field_validator, model_validator

from .errors import ConfigError
from .schemas import HREM_MAX_DEPTH

load_dotenv()


class Settings(BaseModel):
    """Typed process settings sourced from environment variables.

    Attributes:
        seed: Default master seed when neither config nor flags give one.
        output_dir: Default output directory for persisted runs.
        workers: Default number of worker processes.
        log_level: Logging level name for the CLI.
        table_max_entries: Largest full energy table built in table mode.
        stream_max_configs: Largest configuration count enumerated by streaming.
        hps_max_configs: Routine HPS enumeration cap.
        hps_long_run_max_configs: HPS enumeration cap with the long-run flag.
        chunk_size: Configurations per streaming chunk; fixes the merge order.
        coupling_cache_limit: Maximum number of cached HPS couplings.
        quadrature_order: Nodes per quadrature panel (or per Hermite axis).
    """
    seed: int = int(os.getenv("HIERGLASS_SEED", "20240101"))
    output_dir: str = os.getenv("HIERGLASS_OUTPUT_DIR", "runs")
    workers: int = int(os.getenv("HIERGLASS_WORKERS", "1"))
    log_level: str = os.getenv("HIERGLASS_LOG_LEVEL", "INFO")
    table_max_entries: int = int(os.getenv("HIERGLASS_TABLE_MAX_ENTRIES", str(2**16)))
    stream_max_configs: int = int(os.getenv("HIERGLASS_STREAM_MAX_CONFIGS", str(2**32)))
    hps_max_configs: int = int(os.getenv("HIERGLASS_HPS_MAX_CONFIGS", str(2**9)))
    hps_long_run_max_configs: int = int(os.getenv("HIERGLASS_HPS_LONG_RUN_MAX_CONFIGS", str(2**27)))
    chunk_size: int = int(os.getenv("HIERGLASS_CHUNK_SIZE", str(2**16)))
    coupling_cache_limit: int = int(os.getenv("HIERGLASS_COUPLING_CACHE_LIMIT", str(10**6)))
    quadrature_order: int = int(os.getenv("HIERGLASS_QUADRATURE_ORDER", "64"))


settings = Settings()

Method = Literal["enumerate", "mc", "auto"]
ModelName = Literal["hrem", "hps"]


def _float_list(value: Any) -> Any:
    if isinstance(value, str):
        return [float(v) for v in value.replace(",", " ").split()]
    if isinstance(value, (int, float)):
        return [float(value)]
    return value


class ExperimentConfig(BaseModel):
    """One experiment: model, grid, sampling and budget choices.

    `beta` accepts either an explicit list or a ``start:stop:step`` range string.
    `depths` accepts a list or a ``lo-hi`` range string.
    """
    model: ModelName = "hrem"
    depths: list[int] = [3]
    sigmas: list[float] = [1.0]
    betas: list[float] = [1.0]
    p: int = 3
    n_samples: int = 2000
    seed: int = settings.seed
    method: Method = "auto"
    memory_cap: int = settings.table_max_entries
    time_cap: float = 0.0
    output_dir: str = settings.output_dir
    workers: int = settings.workers
    field_strength: float = 1.0
    t_grid: list[float] = [i / 10 for i in range(11)]
    long_run: bool = False
    sweeps: int = 20000
    trace: str | None = None

    @field_validator("depths", mode="before")
    @classmethod
    def _parse_depths(cls, value: Any) -> Any:
        if isinstance(value, str):
            if "-" in value:
                lo, hi = value.split("-", 1)
                return list(range(int(lo), int(hi) + 1))
            return [int(v) for v in value.replace(",", " ").split()]
        if isinstance(value, int):
            return [value]
        return value

    @field_validator("betas", mode="before")
    @classmethod
    def _parse_betas(cls, value: Any) -> Any:
        if isinstance(value, str) and ":" in value:
            start, stop, step = (float(v) for v in value.split(":"))
            count = int(math.floor((stop - start) / step + 1e-9)) + 1
            return [round(start + i * step, 12) for i in range(count)]
        return _float_list(value)

    @field_validator("sigmas", "t_grid", mode="before")
    @classmethod
    def _parse_floats(cls, value: Any) -> Any:
        return _float_list(value)

    @model_validator(mode="after")
    def _check_ranges(self) -> "ExperimentConfig":
        if any(k < 0 for k in self.depths):
            raise ValueError("depths must be >= 0")
        if self.model == "hrem" and any(k > HREM_MAX_DEPTH for k in self.depths):
            raise ValueError(f"hrem depths must be <= {HREM_MAX_DEPTH}")
        if any(b < 0 for b in self.betas):
            raise ValueError("betas must be >= 0")
        if self.model == "hrem" and any(s <= 0 for s in self.sigmas):
            raise ValueError("sigmas must be > 0 for hrem")
        if self.model == "hps" and self.p < 3:
            raise ValueError("p must be >= 3")
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if any(not 0.0 <= t <= 1.0 for t in self.t_grid):
            raise ValueError("t_grid values must lie in [0, 1]")
        return self

    def to_key_values(self) -> str:
        """Render the config as a flat ``key=value`` file body."""
        lines = []
        for name, value in self.model_dump().items():
            if value is None:
                continue
            if isinstance(value, list):
                value = ",".join(repr(v) for v in value)
            lines.append(f"{name}={value}")
        return "\n".join(lines) + "\n"


def load_experiment_config(path: str | Path | None = None, **overrides: Any) -> ExperimentConfig:
    """Build an ExperimentConfig from an optional key=value file plus overrides.

    Overrides whose value is None are ignored, so unset CLI flags never mask
    values from the file.

    Raises:
        ConfigError: If the file is missing or any field fails validation; the
            message lists each offending field.
    """
    values: dict[str, Any] = {}
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        values.update({k: v for k, v in dotenv_values(p).items() if v is not None})
    values.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return ExperimentConfig(**values)
    except ValidationError as exc:
        fields = "; ".join(
            f"{'.'.join(str(x) for x in err['loc']) or 'config'}: {err['msg']}" for err in exc.errors()
        )
        raise ConfigError(f"invalid config: {fields}") from exc
