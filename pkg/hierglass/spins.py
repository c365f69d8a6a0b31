"""Bit-packed Ising configurations.

Bit b of the code holds spin S_{b+1}: set means +1, clear means -1. Blocks are
contiguous bit ranges, so a block's own code is a shift and a mask.
"""
from __future__ import annotations

from dataclasses import dataclass
from collections.abc import Sequence

import numpy as np

from .errors import DimensionError


@dataclass(frozen=True, slots=True)
class SpinConfiguration:
    """Spin assignment of length `n_spins` packed into the integer `bits`."""
    bits: int
    n_spins: int

    def __post_init__(self) -> None:
        if self.n_spins < 1:
            raise DimensionError(f"n_spins must be >= 1, got {self.n_spins}")
        if not 0 <= self.bits < (1 << self.n_spins):
            raise DimensionError(f"bits {self.bits} do not fit {self.n_spins} spins")

    @classmethod
    def from_spins(cls, spins: Sequence[int] | np.ndarray) -> "SpinConfiguration":
        bits = 0
        for i, s in enumerate(spins):
            if s not in (1, -1):
                raise DimensionError(f"spin {i} must be +1 or -1, got {s}")
            if s == 1:
                bits |= 1 << i
        return cls(bits=bits, n_spins=len(spins))

    def spins(self) -> np.ndarray:
        return unpack_bits(self.bits, self.n_spins)

    def spin(self, site: int) -> int:
        return 1 if (self.bits >> site) & 1 else -1

    def block_code(self, start: int, size: int) -> int:
        """Code of the contiguous block [start, start + size)."""
        return (self.bits >> start) & ((1 << size) - 1)

    def flip(self, site: int) -> "SpinConfiguration":
        return SpinConfiguration(self.bits ^ (1 << site), self.n_spins)

    def overlap(self, other: "SpinConfiguration") -> float:
        """Normalized overlap Q = N^-1 sum_i S_i S'_i."""
        if other.n_spins != self.n_spins:
            raise DimensionError(f"overlap of {self.n_spins} and {other.n_spins} spins")
        differing = (self.bits ^ other.bits).bit_count()
        return (self.n_spins - 2 * differing) / self.n_spins

    def __neg__(self) -> "SpinConfiguration":
        return SpinConfiguration(self.bits ^ ((1 << self.n_spins) - 1), self.n_spins)


def unpack_bits(bits: int, n_spins: int) -> np.ndarray:
    """Single code to a length-n int8 vector of +/-1."""
    out = np.empty(n_spins, dtype=np.int8)
    for i in range(n_spins):
        out[i] = 1 if (bits >> i) & 1 else -1
    return out


def spin_matrix(codes: np.ndarray, n_spins: int) -> np.ndarray:
    """Codes (uint64, shape (m,)) to a (m, n_spins) int8 matrix of +/-1."""
    codes = np.asarray(codes, dtype=np.uint64)
    shifts = np.arange(n_spins, dtype=np.uint64)
    bits = (codes[:, None] >> shifts[None, :]) & np.uint64(1)
    return (bits.astype(np.int8) * 2 - 1).astype(np.int8)


def check_length(config: SpinConfiguration, n_spins: int) -> None:
    if config.n_spins != n_spins:
        raise DimensionError(f"configuration has {config.n_spins} spins, model needs {n_spins}")
