"""Lazily evaluated quenched disorder.

Every Gaussian of a model instance (HREM energies, HPS couplings and fields) is a
pure function of a master seed and a structured key. Philox4x32-10 maps the 128-bit
counter block built from the key to 64 random bits, keyed by the 64-bit seed; the
bits become a uniform in (0, 1) and then a standard normal via the inverse CDF.
Nothing is stored, so disorder sets of size 2^(2^K) behave as if materialized.

Counter block layout (four 32-bit words)::

    w0 = local_index & 0xFFFFFFFF
    w1 = local_index >> 32
    w2 = block
    w3 = (tag << 24) | level

Seeds for the i-th disorder sample and for Monte Carlo chains are derived from
the master seed through the same function under their own tags.
"""
from __future__ import annotations

import dataclasses
import math
from collections.abc import Mapping
from dataclasses import dataclass
from enum import IntEnum
from typing import Any

import numpy as np
from scipy.special import ndtri

from .errors import KeyRangeError
from .schemas import ModelParams

_MASK32 = np.uint64(0xFFFFFFFF)
_PHILOX_M0 = np.uint64(0xD2511F53)
_PHILOX_M1 = np.uint64(0xCD9E8D57)
_PHILOX_W0 = np.uint64(0x9E3779B9)
_PHILOX_W1 = np.uint64(0xBB67AE85)
_PHILOX_ROUNDS = 10
_TWO_POW_M53 = 2.0 ** -53


class ModelTag(IntEnum):
    HREM = 1
    HPS_COUPLING = 2
    HPS_FIELD = 3
    SAMPLE_SEED = 8
    CHAIN_SEED = 9


@dataclass(frozen=True, slots=True)
class DisorderKey:
    """Address of one Gaussian in a model's disorder set.

    `local_index` is the block's spin code for HREM energies, the colex rank of
    the p-tuple for HPS couplings and the site index for HPS fields.
    """
    tag: ModelTag
    level: int
    block: int
    local_index: int


def _as_u64(name: str, value: Any) -> np.ndarray:
    arr = np.asarray(value)
    if arr.dtype == object:
        arr = np.asarray([int(v) for v in arr.ravel()], dtype=np.uint64).reshape(arr.shape)
    if arr.dtype.kind == "i" and arr.size and arr.min() < 0:
        raise KeyRangeError(f"{name} must be >= 0, got {int(arr.min())}")
    if arr.dtype.kind not in "iu":
        raise KeyRangeError(f"{name} must be an integer, got dtype {arr.dtype}")
    return arr.astype(np.uint64)


def philox4x32(counter: tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray],
               key0: np.ndarray, key1: np.ndarray) -> tuple[np.ndarray, ...]:
    """Ten-round Philox4x32 on broadcastable arrays of 32-bit words (held in uint64)."""
    c0, c1, c2, c3 = counter
    k0 = np.asarray(key0, dtype=np.uint64)
    k1 = np.asarray(key1, dtype=np.uint64)
    for _ in range(_PHILOX_ROUNDS):
        prod0 = c0 * _PHILOX_M0
        prod1 = c2 * _PHILOX_M1
        c0, c1, c2, c3 = (
            (prod1 >> np.uint64(32)) ^ c1 ^ k0,
            prod1 & _MASK32,
            (prod0 >> np.uint64(32)) ^ c3 ^ k1,
            prod0 & _MASK32,
        )
        k0 = (k0 + _PHILOX_W0) & _MASK32
        k1 = (k1 + _PHILOX_W1) & _MASK32
    return c0, c1, c2, c3


def keyed_bits(seed: Any, tag: int, level: Any, block: Any, local_index: Any) -> np.ndarray:
    """64 pseudorandom bits per key; all arguments broadcast against each other."""
    seed_u = _as_u64("seed", seed)
    level_u = _as_u64("level", level)
    block_u = _as_u64("block", block)
    local_u = _as_u64("local_index", local_index)
    if level_u.size and level_u.max() >= (1 << 24):
        raise KeyRangeError(f"level must be < 2^24, got {int(level_u.max())}")
    if block_u.size and block_u.max() > 0xFFFFFFFF:
        raise KeyRangeError(f"block must be < 2^32, got {int(block_u.max())}")
    w0 = local_u & _MASK32
    w1 = local_u >> np.uint64(32)
    w2 = block_u
    w3 = (np.uint64(int(tag)) << np.uint64(24)) | level_u
    w0, w1, w2, w3 = np.broadcast_arrays(w0, w1, w2, w3)
    out0, out1, _, _ = philox4x32((w0, w1, w2, w3), seed_u & _MASK32, seed_u >> np.uint64(32))
    return (out0 << np.uint64(32)) | out1


def bits_to_normal(bits: np.ndarray) -> np.ndarray:
    """Top 53 bits to a uniform in (0, 1), then to a standard normal."""
    uniform = ((bits >> np.uint64(11)).astype(np.float64) + 0.5) * _TWO_POW_M53
    return ndtri(uniform)


def keyed_gaussians(seed: Any, tag: int, level: Any, block: Any, local_index: Any) -> np.ndarray:
    """Unchecked standard-normal deviates for broadcastable key arrays."""
    return bits_to_normal(keyed_bits(seed, tag, level, block, local_index))


@dataclass(frozen=True, slots=True)
class DisorderOracle:
    """Deterministic Gaussian disorder for one model instance.

    `scale` multiplies every generated value; `overrides` pins individual keys to
    fixed values after scaling. Both exist for hand-checkable fixtures.
    """
    master_seed: int
    params: ModelParams
    scale: float = 1.0
    overrides: tuple[tuple[DisorderKey, float], ...] = ()

    def __post_init__(self) -> None:
        if not 0 <= self.master_seed < 2**64:
            raise KeyRangeError(f"master_seed must be a 64-bit unsigned integer, got {self.master_seed}")

    def check(self, tag: ModelTag, level: int, block: Any, local_index: Any) -> None:
        """Validate a (possibly vectorized) key against the model's ranges."""
        params = self.params
        block_u = _as_u64("block", block)
        local_u = _as_u64("local_index", local_index)
        if tag == ModelTag.HREM:
            if params.kind != "hrem":
                raise KeyRangeError(f"tag HREM is invalid for a {params.kind} oracle")
            if not 0 <= level <= params.depth:
                raise KeyRangeError(f"level {level} outside [0, {params.depth}]")
            local_limit = 1 << params.block_size(level)
        elif tag == ModelTag.HPS_COUPLING:
            if params.kind != "hps":
                raise KeyRangeError(f"tag HPS_COUPLING is invalid for a {params.kind} oracle")
            if not 1 <= level <= params.depth:
                raise KeyRangeError(f"level {level} outside [1, {params.depth}]")
            local_limit = math.comb(params.block_size(level), params.p)
        elif tag == ModelTag.HPS_FIELD:
            if params.kind != "hps":
                raise KeyRangeError(f"tag HPS_FIELD is invalid for a {params.kind} oracle")
            if level != 0:
                raise KeyRangeError(f"level must be 0 for fields, got {level}")
            if block_u.size and block_u.max() != 0:
                raise KeyRangeError("block must be 0 for fields")
            local_limit = params.n_spins
        else:
            raise KeyRangeError(f"tag {tag!r} is not a disorder tag")
        block_limit = params.n_blocks(level) if tag != ModelTag.HPS_FIELD else 1
        if block_u.size and int(block_u.max()) >= block_limit:
            raise KeyRangeError(f"block {int(block_u.max())} >= {block_limit} at level {level}")
        if local_u.size and int(local_u.max()) >= local_limit:
            raise KeyRangeError(f"local_index {int(local_u.max())} >= {local_limit} at level {level}")

    def values(self, tag: ModelTag, level: int, block: Any, local_index: Any, *, check: bool = True) -> np.ndarray:
        """Gaussians for a scalar level and broadcastable block/local arrays."""
        if check:
            self.check(tag, level, block, local_index)
        return self._generate(self.master_seed, tag, level, block, local_index)

    def across_seeds(self, seeds: Any, tag: ModelTag, level: int, block: Any, local_index: Any) -> np.ndarray:
        """Values at one key set for many master seeds, with a leading seed axis.

        Scale and pinned keys apply to every seed as they do for this oracle.
        """
        self.check(tag, level, block, local_index)
        seeds = _as_u64("seed", seeds).reshape(-1, *([1] * max(np.ndim(block), np.ndim(local_index))))
        return self._generate(seeds, tag, level, block, local_index)

    def _generate(self, seed: Any, tag: ModelTag, level: int, block: Any, local_index: Any) -> np.ndarray:
        shape = np.broadcast_shapes(np.shape(seed), np.shape(block), np.shape(local_index))
        if self.scale == 0.0:
            out = np.zeros(shape)
        else:
            out = keyed_gaussians(seed, int(tag), level, block, local_index)
            if self.scale != 1.0:
                out = out * self.scale
        if self.overrides:
            out = np.array(np.broadcast_to(out, shape), dtype=np.float64, copy=True)
            blocks, locals_ = np.broadcast_arrays(_as_u64("block", block), _as_u64("local_index", local_index))
            for key, value in self.overrides:
                if key.tag == tag and key.level == level:
                    out[..., (blocks == key.block) & (locals_ == key.local_index)] = value
        return out

    def hrem(self, level: int, block: Any, codes: Any) -> np.ndarray:
        return self.values(ModelTag.HREM, level, block, codes)

    def coupling(self, level: int, block: Any, ranks: Any) -> np.ndarray:
        return self.values(ModelTag.HPS_COUPLING, level, block, ranks)

    def fields(self) -> np.ndarray:
        """All N fields h_i (before the model's field_strength)."""
        return self.values(ModelTag.HPS_FIELD, 0, 0, np.arange(self.params.n_spins, dtype=np.uint64))


def gaussian_at(key: DisorderKey, oracle: DisorderOracle) -> float:
    """Single standard-normal value at `key`; range-checked against the model."""
    return float(oracle.values(key.tag, key.level, key.block, key.local_index))


def zero_override(oracle: DisorderOracle) -> DisorderOracle:
    """Copy of `oracle` that yields 0 for every key."""
    return dataclasses.replace(oracle, scale=0.0, overrides=())


def with_values(oracle: DisorderOracle, values: Mapping[DisorderKey, float]) -> DisorderOracle:
    """Copy of `oracle` with the given keys pinned to fixed values."""
    for key in values:
        oracle.check(key.tag, key.level, key.block, key.local_index)
    pinned = dict(oracle.overrides)
    pinned.update(values)
    return dataclasses.replace(oracle, overrides=tuple(pinned.items()))


@dataclass(frozen=True, slots=True)
class SeedStream:
    """Per-sample seeds derived from one master seed.

    Distinct `stream` values give independent seed sequences, so e.g. a
    concentration probe and a free-energy run can avoid sharing samples.
    """
    master_seed: int
    stream: int = 0

    def take(self, n: int, start: int = 0) -> list[int]:
        idx = np.arange(start, start + n, dtype=np.uint64)
        bits = keyed_bits(self.master_seed, ModelTag.SAMPLE_SEED, 0, self.stream, idx)
        return [int(b) for b in bits]


def chain_seed(master_seed: int, stream: int, index: int) -> int:
    """Seed of Monte Carlo substream `index` under `stream` for a master seed."""
    return int(keyed_bits(master_seed, ModelTag.CHAIN_SEED, 0, stream, index))
