"""Pydantic models for parameters, per-sample records and reports."""
from __future__ import annotations

import math
from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator

LOG2 = math.log(2.0)

# Depth beyond which an HREM top-level block code no longer fits in 64 bits.
HREM_MAX_DEPTH = 6


class ModelParams(BaseModel):
    """Full symbol set of one model instance.

    Attributes:
        kind: "hrem" or "hps".
        depth: Number of hierarchical levels K above single spins.
        sigma: Decay exponent of the block interactions.
        p: Interaction order (HPS only; ignored by the HREM).
        beta: Inverse temperature.
        field_strength: Multiplier applied to the HPS fields h_i.
    """
    model_config = ConfigDict(frozen=True)

    kind: Literal["hrem", "hps"] = "hrem"
    depth: int = Field(ge=0)
    sigma: float = 1.0
    p: int = Field(default=3, ge=3)
    beta: float = Field(default=1.0, ge=0.0)
    field_strength: float = 1.0

    @model_validator(mode="after")
    def _check_depth(self) -> "ModelParams":
        if self.kind == "hrem" and self.depth > HREM_MAX_DEPTH:
            raise ValueError(f"hrem depth must be <= {HREM_MAX_DEPTH}, got {self.depth}")
        return self

    @property
    def branching(self) -> int:
        return 2 if self.kind == "hrem" else self.p

    @property
    def n_spins(self) -> int:
        return self.branching ** self.depth

    @property
    def n_configs(self) -> int:
        return 1 << self.n_spins

    def block_size(self, level: int) -> int:
        return self.branching ** level

    def n_blocks(self, level: int) -> int:
        return self.branching ** (self.depth - level)

    def with_beta(self, beta: float) -> "ModelParams":
        return self.model_copy(update={"beta": float(beta)})

    def with_depth(self, depth: int) -> "ModelParams":
        return ModelParams(**{**self.model_dump(), "depth": depth})


class SampleRecord(BaseModel):
    """Thermodynamics of one disorder realization.

    `stderr` is None for exact enumeration and the jackknife error of the
    per-spin log Z for Monte Carlo estimates.
    """
    model: Literal["hrem", "hps"]
    seed: int
    depth: int
    p: int | None = None
    sigma: float
    beta: float
    t: float = 1.0
    n_spins: int
    log_z: float
    log_z_per_spin: float
    mean_energy: float
    min_energy: float | None = None
    entropy: float
    method: str
    stderr: float | None = None

    @classmethod
    def build(
        cls,
        params: ModelParams,
        seed: int,
        log_z: float,
        mean_energy: float,
        method: str,
        *,
        min_energy: float | None = None,
        t: float = 1.0,
        stderr: float | None = None,
    ) -> "SampleRecord":
        """Fill the derived per-spin columns from log Z and <H>."""
        n = params.n_spins
        per_spin = log_z / n
        return cls(
            model=params.kind,
            seed=int(seed),
            depth=params.depth,
            p=params.p if params.kind == "hps" else None,
            sigma=params.sigma,
            beta=params.beta,
            t=t,
            n_spins=n,
            log_z=log_z,
            log_z_per_spin=per_spin,
            mean_energy=mean_energy,
            min_energy=min_energy,
            entropy=params.beta * mean_energy / n + per_spin,
            method=method,
            stderr=stderr,
        )


class VerdictRow(BaseModel):
    """One checked inequality: `lhs relation rhs` up to `slack`."""
    check: str
    lhs: float
    relation: Literal["<=", ">="]
    rhs: float
    slack: float = 0.0
    status: Literal["PASS", "FAIL"]

    @property
    def passed(self) -> bool:
        return self.status == "PASS"


class BoundReport(BaseModel):
    """Analytic bound curves for one sigma, with measured checks attached."""
    model: Literal["hrem", "hps"] = "hrem"
    sigma: float
    c: float
    betas: list[float]
    phi: list[float]
    dphi: list[float]
    phi_minus_log2: list[float]
    beta_mf: float
    beta_c: float
    beta_star: float
    beta_star_residual: float
    mean_field_entropy_bound: list[float]
    improved_entropy_bound: list[float]
    finite_k_bounds: dict[int, list[float]] = {}
    jensen_upper_bounds: list[float] = []
    checks: list[VerdictRow] = []


class RunManifest(BaseModel):
    """Echo of a run's config with content digests of every persisted file."""
    config: dict[str, Any]
    version: str
    command: str
    digests: dict[str, str] = {}
    status: Literal["running", "complete"] = "running"
