"""Gray-labelled square QAM with unit average energy.

Point ``k`` of a :class:`Constellation` carries the bit label whose integer
value is ``k``. The first ``m/2`` bits select the in-phase level and the
last ``m/2`` bits the quadrature level, most significant bit first, each
axis using a reflected Gray code.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

__all__ = ["Constellation", "qam", "map_bits", "unmap_symbols", "bits_to_ints", "ints_to_bits"]

SUPPORTED_M = (2, 4, 6, 8)


def _gray_to_binary(g: np.ndarray) -> np.ndarray:
    b = g.copy()
    shift = g >> 1
    while np.any(shift):
        b ^= shift
        shift >>= 1
    return b


@dataclass(frozen=True, eq=False)
class Constellation:
    m: int
    points: np.ndarray

    @property
    def size(self) -> int:
        return len(self.points)

    @cached_property
    def bit_labels(self) -> np.ndarray:
        """``(2^m, m)`` array of 0/1; row ``k`` is the label of ``points[k]``."""
        return ints_to_bits(np.arange(self.size), self.m)

    @cached_property
    def min_distance2(self) -> float:
        d = np.abs(self.points[:, None] - self.points[None, :]) ** 2
        return float(d[~np.eye(self.size, dtype=bool)].min())

    @cached_property
    def difference_set(self) -> np.ndarray:
        """Distinct values of ``a - b`` for ``a, b`` in the alphabet, zero first."""
        d = (self.points[:, None] - self.points[None, :]).ravel()
        # Square QAM differences sit on a scaled integer grid; round to dedupe.
        scale = np.sqrt(1.5 / (self.size - 1))
        key = np.round(d.real / scale).astype(int) * 4096 + np.round(d.imag / scale).astype(int)
        _, idx = np.unique(key, return_index=True)
        vals = d[np.sort(idx)]
        vals = vals[np.argsort(np.abs(vals) > 1e-12, kind="stable")]
        return vals

    def energy(self) -> float:
        return float(np.mean(np.abs(self.points) ** 2))

    def index_of(self, symbols) -> np.ndarray:
        """Point indices of ``symbols``; raises if any is not in the alphabet."""
        sym = np.atleast_1d(np.asarray(symbols, dtype=complex))
        dist = np.abs(sym[:, None] - self.points[None, :])
        idx = dist.argmin(axis=1)
        if np.any(dist[np.arange(len(sym)), idx] > 1e-9):
            raise ValueError("symbol is not a constellation point")
        return idx


def qam(m: int) -> Constellation:
    """Square ``2^m``-QAM scaled to unit average energy."""
    if m not in SUPPORTED_M:
        raise ValueError(f"unsupported bits per symbol m={m}; expected one of {SUPPORTED_M}")
    half = m // 2
    levels = 1 << half
    labels = np.arange(1 << m)
    i_pos = _gray_to_binary(labels >> half)
    q_pos = _gray_to_binary(labels & (levels - 1))
    pts = (2 * i_pos - (levels - 1)) + 1j * (2 * q_pos - (levels - 1))
    pts = pts / np.sqrt(2 * ((1 << m) - 1) / 3)
    return Constellation(m=m, points=pts.astype(complex))


def bits_to_ints(bits, width: int) -> np.ndarray:
    """Pack consecutive ``width``-bit groups (MSB first) into integers."""
    b = np.asarray(bits, dtype=np.int64)
    if b.shape[-1] % width:
        raise ValueError(f"bit length {b.shape[-1]} is not a multiple of {width}")
    groups = b.reshape(*b.shape[:-1], -1, width)
    weights = 1 << np.arange(width - 1, -1, -1, dtype=np.int64)
    return groups @ weights


def ints_to_bits(values, width: int) -> np.ndarray:
    """Unpack integers into a trailing axis of ``width`` bits, MSB first."""
    v = np.asarray(values, dtype=np.int64)
    shifts = np.arange(width - 1, -1, -1, dtype=np.int64)
    return (v[..., None] >> shifts) & 1


def map_bits(c: Constellation, bits) -> np.ndarray:
    """Map a flat bit list of length ``m*S`` to ``S`` constellation symbols."""
    bits = np.asarray(bits)
    if bits.ndim != 1:
        raise ValueError("bits must be a flat sequence")
    if np.any((bits != 0) & (bits != 1)):
        raise ValueError("bits must be 0 or 1")
    return c.points[bits_to_ints(bits, c.m)]


def unmap_symbols(c: Constellation, symbols) -> np.ndarray:
    """Inverse of :func:`map_bits`."""
    idx = c.index_of(symbols)
    return ints_to_bits(idx, c.m).ravel()
