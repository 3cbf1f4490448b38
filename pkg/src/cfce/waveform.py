"""OFDM grids, unitary DFTs and the phase-quantized constant-envelope alphabet.

Matrix layout used throughout: antenna signals are (M, S) arrays with time
or subcarrier along the last axis, so ``X_bar = X F`` is a row-wise unitary
FFT.  Symbol grids are (S, K).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import LengthMismatch

SQRT_HALF = np.sqrt(0.5)


def dft(rows: np.ndarray, S: int | None = None) -> np.ndarray:
    """Unitary DFT of each row (time -> frequency)."""
    rows = np.asarray(rows)
    if S is not None and rows.shape[-1] != S:
        raise LengthMismatch(f"expected rows of length {S}, got {rows.shape[-1]}")
    return np.fft.fft(rows, axis=-1, norm="ortho")


def idft(rows: np.ndarray, S: int | None = None) -> np.ndarray:
    """Inverse unitary DFT of each row (frequency -> time)."""
    rows = np.asarray(rows)
    if S is not None and rows.shape[-1] != S:
        raise LengthMismatch(f"expected rows of length {S}, got {rows.shape[-1]}")
    return np.fft.ifft(rows, axis=-1, norm="ortho")


# ---------------------------------------------------------------------------
# QPSK

def qpsk_map(bits: np.ndarray) -> np.ndarray:
    """Gray QPSK with unit energy; ``bits[..., 0]`` sets the imaginary sign.

    00 -> (1+j)/sqrt2, 01 -> (-1+j)/sqrt2, 11 -> (-1-j)/sqrt2, 10 -> (1-j)/sqrt2.
    """
    bits = np.asarray(bits)
    return SQRT_HALF * ((1 - 2 * bits[..., 1].astype(float)) + 1j * (1 - 2 * bits[..., 0].astype(float)))


def demap_qpsk(soft) -> np.ndarray:
    """Hard quadrant decision, inverse of :func:`qpsk_map`; output (..., 2)."""
    soft = np.asarray(soft)
    return np.stack([(soft.imag < 0), (soft.real < 0)], axis=-1).astype(np.uint8)


@dataclass(frozen=True)
class SymbolGrid:
    """Data symbols of one OFDM symbol, or a stack of them.

    ``s`` is (S, K), or (B, S, K) for a batch of B independent OFDM symbols
    sharing the occupied set.
    """

    s: np.ndarray  # (..., S, K); zero rows on guard subcarriers
    occupied: np.ndarray  # (S_I,) int indices
    bits: np.ndarray  # (..., S_I, K, 2) uint8 bits behind s[occupied]

    @property
    def S(self) -> int:
        return self.s.shape[-2]

    @property
    def K(self) -> int:
        return self.s.shape[-1]

    @property
    def S_I(self) -> int:
        return self.occupied.size

    @property
    def batched(self) -> bool:
        return self.s.ndim == 3

    @property
    def batch_size(self) -> int:
        return self.s.shape[0] if self.batched else 1

    @property
    def s_occ(self) -> np.ndarray:
        return self.s[..., self.occupied, :]

    def scaled(self, c: float) -> "SymbolGrid":
        return SymbolGrid(self.s * c, self.occupied, self.bits)

    def take(self, idx) -> "SymbolGrid":
        """Sub-batch (array index) or single member (int index)."""
        return SymbolGrid(self.s[idx], self.occupied, self.bits[idx])

    def as_batch(self) -> "SymbolGrid":
        return self if self.batched else SymbolGrid(self.s[None], self.occupied, self.bits[None])


def stack_grids(grids) -> SymbolGrid:
    grids = list(grids)
    return SymbolGrid(np.stack([g.s for g in grids]), grids[0].occupied, np.stack([g.bits for g in grids]))


def grid_from_bits(bits: np.ndarray, occupied, S: int) -> SymbolGrid:
    occupied = np.asarray(occupied, dtype=np.int64)
    bits = np.asarray(bits, dtype=np.uint8)
    s = np.zeros((S, bits.shape[1]), dtype=complex)
    s[occupied] = qpsk_map(bits)
    return SymbolGrid(s, occupied, bits)


def build_symbol_grid(K: int, occupied, S: int, rng: np.random.Generator) -> SymbolGrid:
    occupied = np.asarray(occupied, dtype=np.int64)
    bits = rng.integers(0, 2, size=(occupied.size, K, 2), dtype=np.uint8)
    return grid_from_bits(bits, occupied, S)


# ---------------------------------------------------------------------------
# constant-envelope alphabet

@dataclass(frozen=True)
class CEAlphabet:
    p: int
    amplitude: float = 1.0

    def __post_init__(self):
        if self.p < 1:
            raise ValueError("DAC resolution must be at least one bit")

    @property
    def size(self) -> int:
        return 1 << self.p

    @property
    def points(self) -> np.ndarray:
        q = np.arange(self.size)
        return self.amplitude * np.exp(1j * np.pi * (2 * q + 1) / self.size)


def quantize_ce(value, alphabet: CEAlphabet):
    """Nearest alphabet point to each entry of ``value`` (array or scalar)."""
    arr = np.asarray(value, dtype=complex)
    out = alphabet.amplitude * kernels.quantize_phase(np.atleast_1d(arr), alphabet.p)
    return out.reshape(arr.shape) if arr.ndim else complex(out[0])
