"""End-to-end symbol path over the SVD-diagonalised channel.

Every scheme is expressed as one linear map ``A`` (``L x K``) from ``K``
constellation symbols to ``L`` beamformed subchannels:

* SB: ``A = [[1]]``
* PSB: ``A = theta^T / sqrt(R)`` with ``theta`` a unit-modulus rotation vector,
  so the transmitted scalar has unit average energy
* FPMB / PPMB: ``A = Theta`` (unitary ``S x S``)

The received vector is ``r = lambda[:L] * (A x) + n`` with complex noise of
variance ``N0 = N / SNR`` per subchannel. Noise is drawn after the receive
beamformer, which is equivalent because its columns are orthonormal.

With ``power="total"`` (the default) every scheme spends the same total
transmit energy per channel use: ``N0`` is multiplied by the average
``||A x||^2`` (``S`` for multiple beamforming, 1 otherwise), which is the
same as scaling the transmitted vector to unit energy. ``power="per_stream"``
keeps unit energy on every stream instead.

Candidate ``k`` of the ML search is the symbol vector whose concatenated
bit labels read ``k`` in binary, so bit errors are popcounts of XORs.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .channel import ChannelRealization, RngStream, sample_channels
from .constellation import Constellation, bits_to_ints, ints_to_bits
from .precoder import Precoder, optimize_rotation_angle, rotation_vector

__all__ = [
    "SCHEMES",
    "POWER_MODES",
    "MAX_CANDIDATES",
    "SchemeConfig",
    "sb_config",
    "psb_config",
    "pmb_config",
    "transmit",
    "noise_variance",
    "complex_noise",
    "ml_metric",
    "decode_indices",
    "ml_decode",
    "run_trial",
    "run_trials",
]

SCHEMES = ("SB", "PSB", "FPMB", "PPMB")
POWER_MODES = ("total", "per_stream")
MAX_CANDIDATES = 1 << 16
_CHUNK_ELEMS = 1 << 22


@dataclass(frozen=True, eq=False)
class SchemeConfig:
    scheme: str
    m_rx: int
    n_tx: int
    constellation: Constellation
    mapping: np.ndarray
    precoder: Precoder | None = None
    power: str = "total"

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.power not in POWER_MODES:
            raise ValueError(f"power must be one of {POWER_MODES}")
        if self.m_rx < 1 or self.n_tx < 1:
            raise ValueError("antenna counts must be positive")
        a = self.mapping
        if a.ndim != 2:
            raise ValueError("mapping must be a matrix")
        streams, k = a.shape
        if streams > min(self.m_rx, self.n_tx):
            raise ValueError(f"{streams} streams exceed min(M, N) = {min(self.m_rx, self.n_tx)}")
        if self.scheme == "SB" and (streams, k) != (1, 1):
            raise ValueError("SB carries exactly one symbol on one stream")
        if self.scheme == "PSB" and streams != 1:
            raise ValueError("PSB transmits on a single stream")
        if self.scheme in ("FPMB", "PPMB"):
            if self.precoder is None or streams != k:
                raise ValueError("multiple beamforming needs a square precoder")
            if self.scheme == "PPMB" and not 0 < self.precoder.r < self.precoder.s:
                raise ValueError("PPMB needs 0 < r < s")
            if self.scheme == "FPMB" and self.precoder.r != self.precoder.s:
                raise ValueError("FPMB needs r = s")
        if self.constellation.size ** k > MAX_CANDIDATES:
            raise ValueError(f"ML search over {self.constellation.size}^{k} candidates is too large")

    @property
    def s(self) -> int:
        """Number of beamformed streams used."""
        return self.mapping.shape[0]

    @property
    def n_symbols(self) -> int:
        return self.mapping.shape[1]

    @property
    def r(self) -> int:
        if self.precoder is not None:
            return self.precoder.r
        return self.n_symbols if self.scheme == "PSB" else 1

    @property
    def bits_per_use(self) -> int:
        """System data rate in bits per channel use."""
        return self.constellation.m * self.n_symbols

    @property
    def n_candidates(self) -> int:
        return self.constellation.size ** self.n_symbols

    @cached_property
    def tx_energy(self) -> float:
        """Average ``||A x||^2`` under uniformly distributed symbols."""
        return float(np.mean(self._codebook_energy.sum(axis=0)))

    @property
    def noise_scale(self) -> float:
        return self.tx_energy if self.power == "total" else 1.0

    def n0(self, snr: float) -> float:
        """Per-subchannel noise variance at linear ``snr`` (0 for ``inf``)."""
        if np.isinf(snr):
            return 0.0
        return noise_variance(self.n_tx, snr) * self.noise_scale

    @cached_property
    def candidates(self) -> np.ndarray:
        """``(K, n_candidates)`` symbol vectors in bit-label order."""
        k = np.arange(self.n_candidates)
        digits = ints_to_bits(k, self.bits_per_use).reshape(-1, self.n_symbols, self.constellation.m)
        idx = digits @ (1 << np.arange(self.constellation.m - 1, -1, -1))
        return self.constellation.points[idx].T

    @cached_property
    def codebook(self) -> np.ndarray:
        """Noise-free subchannel inputs ``A x`` for every candidate, ``(L, n_candidates)``."""
        return self.mapping @ self.candidates

    @cached_property
    def _codebook_energy(self) -> np.ndarray:
        cb = self.codebook
        return cb.real**2 + cb.imag**2


def sb_config(m_rx: int, n_tx: int, c: Constellation, power: str = "total") -> SchemeConfig:
    return SchemeConfig("SB", m_rx, n_tx, c, np.ones((1, 1), dtype=complex), power=power)


def psb_config(
    m_rx: int, n_tx: int, c: Constellation, r: int, phi: float | None = None, power: str = "total"
) -> SchemeConfig:
    """PSB with the rotation vector; ``phi`` defaults to the optimised angle."""
    if phi is None:
        phi, _ = optimize_rotation_angle(r, c)
    row = rotation_vector(phi, r) / np.sqrt(r)
    return SchemeConfig("PSB", m_rx, n_tx, c, row[None, :], power=power)


def pmb_config(m_rx: int, n_tx: int, c: Constellation, precoder: Precoder, power: str = "total") -> SchemeConfig:
    scheme = "FPMB" if precoder.r == precoder.s else "PPMB"
    return SchemeConfig(scheme, m_rx, n_tx, c, np.asarray(precoder.theta, dtype=complex), precoder, power)


def _check_lengths(cfg: SchemeConfig, **arrays) -> None:
    for name, arr in arrays.items():
        if np.shape(arr)[-1] != cfg.s:
            raise ValueError(f"{name} has length {np.shape(arr)[-1]}, expected {cfg.s}")


def transmit(cfg: SchemeConfig, x, lambdas, noise) -> np.ndarray:
    """``r = lambdas * (A x) + noise`` for one symbol vector."""
    x = np.asarray(x, dtype=complex)
    if x.shape != (cfg.n_symbols,):
        raise ValueError(f"symbol vector must have length {cfg.n_symbols}")
    lambdas = np.asarray(lambdas, dtype=float)
    noise = np.asarray(noise, dtype=complex)
    _check_lengths(cfg, lambdas=lambdas, noise=noise)
    return lambdas * (cfg.mapping @ x) + noise


def noise_variance(n_tx: int, snr_linear: float) -> float:
    """Complex noise variance ``N0 = N / SNR`` (``N0 / 2`` per real dimension)."""
    if not snr_linear > 0:
        raise ValueError("snr must be positive")
    return n_tx / snr_linear


def ml_metric(cfg: SchemeConfig, rx, lambdas) -> np.ndarray:
    """``||r - lambdas * (A x)||^2`` for every candidate, computed directly."""
    rx = np.asarray(rx, dtype=complex)
    lam = np.asarray(lambdas, dtype=float)
    diff = rx[:, None] - lam[:, None] * cfg.codebook
    return (np.abs(diff) ** 2).sum(axis=0)


def decode_indices(cfg: SchemeConfig, rx: np.ndarray, lambdas: np.ndarray) -> np.ndarray:
    """Batched exhaustive ML over all candidates; ``rx`` and ``lambdas`` are ``(B, L)``.

    Uses ``||r||^2 - 2 Re<r, lam*c> + ||lam*c||^2`` with the constant first
    term dropped. Ties resolve to the lowest candidate index.
    """
    rx = np.atleast_2d(rx)
    lam = np.atleast_2d(np.asarray(lambdas, dtype=float))
    cb = cfg.codebook
    energy = cfg._codebook_energy
    out = np.empty(rx.shape[0], dtype=np.int64)
    step = max(1, _CHUNK_ELEMS // cfg.n_candidates)
    for i in range(0, rx.shape[0], step):
        r, l = rx[i:i + step], lam[i:i + step]
        score = (l * l) @ energy - 2.0 * ((np.conj(r) * l) @ cb).real
        out[i:i + step] = score.argmin(axis=1)
    return out


def ml_decode(cfg: SchemeConfig, rx, lambdas) -> np.ndarray:
    """ML symbol vector for one received vector."""
    rx = np.asarray(rx, dtype=complex)
    lambdas = np.asarray(lambdas, dtype=float)
    _check_lengths(cfg, rx=rx, lambdas=lambdas)
    k = decode_indices(cfg, rx[None, :], lambdas[None, :])[0]
    return cfg.candidates[:, k].copy()


def complex_noise(gen: np.random.Generator, shape, n0: float = 1.0) -> np.ndarray:
    """Circularly-symmetric complex Gaussian samples of variance ``n0``."""
    g = gen.standard_normal(tuple(shape) + (2,))
    return (g[..., 0] + 1j * g[..., 1]) * np.sqrt(0.5 * n0)


def run_trial(cfg: SchemeConfig, bits, ch: ChannelRealization, rng: RngStream, snr: float) -> tuple[int, int]:
    """One channel use: returns ``(bit_errors, bits_sent)``.

    ``snr = inf`` switches the noise off.
    """
    bits = np.asarray(bits, dtype=np.int64)
    if bits.shape != (cfg.bits_per_use,):
        raise ValueError(f"need {cfg.bits_per_use} bits per channel use")
    tx = int(bits_to_ints(bits, cfg.bits_per_use)[0])
    lam = ch.singular_values[: cfg.s]
    if len(lam) < cfg.s:
        raise ValueError("channel has fewer subchannels than streams")
    noise = complex_noise(rng.generator(), (cfg.s,), cfg.n0(snr))
    rx = transmit(cfg, cfg.candidates[:, tx], lam, noise)
    dec = int(decode_indices(cfg, rx[None, :], lam[None, :])[0])
    return int(np.bitwise_count(tx ^ dec)), cfg.bits_per_use


def run_trials(cfg: SchemeConfig, snr: float, rng: RngStream, count: int) -> tuple[int, int]:
    """``count`` independent channel uses from one stream: ``(bit_errors, bits_sent)``.

    Draw order within the stream is channels, payloads, then unit-variance
    noise, none of which depend on ``snr``; sweeps therefore reuse the same
    realisations at every SNR point.
    """
    gen = rng.generator()
    h = sample_channels(cfg.m_rx, cfg.n_tx, gen, count)
    lam = np.linalg.svd(h, compute_uv=False)[:, : cfg.s]
    tx = gen.integers(0, cfg.n_candidates, size=count)
    noise = complex_noise(gen, (count, cfg.s))
    rx = lam * cfg.codebook[:, tx].T + np.sqrt(cfg.n0(snr)) * noise
    dec = decode_indices(cfg, rx, lam)
    return int(np.bitwise_count(tx ^ dec).sum()), count * cfg.bits_per_use
