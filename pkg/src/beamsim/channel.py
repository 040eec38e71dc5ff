"""Rayleigh flat-fading channels and their ordered SVD.

Only the leading singular values enter the detected-symbol model, so the
phase convention of the singular vectors returned by LAPACK is kept as is.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "RngStream",
    "ChannelRealization",
    "sample_channel",
    "sample_channels",
    "svd_ordered",
    "beamformers",
]


@dataclass(frozen=True)
class RngStream:
    """Reproducible random stream identified by ``(seed, stream_id)``.

    Backed by numpy's counter-based Philox generator keyed through a
    ``SeedSequence``, so the draws are identical on every platform.
    """

    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=int(self.seed), spawn_key=(int(self.stream_id),))
        return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class ChannelRealization:
    h: np.ndarray
    singular_values: np.ndarray
    u: np.ndarray
    v: np.ndarray

    @property
    def m(self) -> int:
        return self.h.shape[0]

    @property
    def n(self) -> int:
        return self.h.shape[1]


def _check_dims(m: int, n: int) -> None:
    if m < 1 or n < 1:
        raise ValueError(f"channel dimensions must be positive, got {m}x{n}")


def sample_channels(m: int, n: int, gen: np.random.Generator, count: int) -> np.ndarray:
    """Draw ``count`` i.i.d. CN(0, 1) channel matrices, shape ``(count, m, n)``."""
    _check_dims(m, n)
    g = gen.standard_normal((count, m, n, 2))
    return (g[..., 0] + 1j * g[..., 1]) * np.sqrt(0.5)


def sample_channel(m: int, n: int, rng: RngStream | np.random.Generator) -> np.ndarray:
    """Draw one ``m x n`` Rayleigh channel with unit-variance entries."""
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    return sample_channels(m, n, gen, 1)[0]


def svd_ordered(h: np.ndarray) -> ChannelRealization:
    """SVD with singular values sorted in decreasing order.

    ``u`` is M x M and ``v`` is N x N, both unitary, with
    ``h = u[:, :k] @ diag(singular_values) @ v[:, :k].conj().T`` where
    ``k = min(M, N)``.
    """
    h = np.asarray(h, dtype=complex)
    if h.ndim != 2:
        raise ValueError("channel must be a 2-D matrix")
    if not np.all(np.isfinite(h)):
        raise ValueError("channel matrix has non-finite entries")
    u, sv, vh = np.linalg.svd(h, full_matrices=True)
    # LAPACK already returns descending order; enforce it anyway.
    order = np.argsort(-sv, kind="stable")
    k = len(sv)
    u = np.concatenate([u[:, :k][:, order], u[:, k:]], axis=1)
    v = vh.conj().T
    v = np.concatenate([v[:, :k][:, order], v[:, k:]], axis=1)
    return ChannelRealization(h=h, singular_values=sv[order], u=u, v=v)


def beamformers(ch: ChannelRealization, s: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return ``(U~, V~, lambdas)``: the first ``s`` singular vectors and values."""
    if not 1 <= s <= min(ch.m, ch.n):
        raise ValueError(f"stream count {s} outside 1..{min(ch.m, ch.n)}")
    return ch.u[:, :s], ch.v[:, :s], ch.singular_values[:s].copy()
