"""Constellation precoders for SVD beamforming.

All design metrics depend on a symbol pair only through its difference
``x - x_hat``, so they are evaluated over the set of nonzero difference
vectors rather than over symbol pairs. For square QAM that set is closed
under multiplication by ``j`` and every metric here uses magnitudes only,
so by default one representative per ``{1, j, -1, -j}`` orbit is kept.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .constellation import Constellation

__all__ = [
    "InfeasibleDesignError",
    "Precoder",
    "GivensParams",
    "difference_vectors",
    "rotation_vector",
    "optimize_rotation_angle",
    "givens_unitary",
    "ifft_matrix",
    "min_coordinate_distance",
    "first_coordinate_distance",
    "geometric_mean_distance",
    "design_phi1",
    "design_phi2",
    "design_phi3",
    "build_partial",
    "identity_precoder",
    "default_p_candidates",
    "precoder_to_dict",
    "precoder_from_dict",
    "save_precoder",
    "load_precoder",
]

MAX_SEARCH_BITS = 16
# Cap on the number of (orbit-reduced) difference vectors held in memory.
MAX_DIFFERENCE_VECTORS = 1 << 22
_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


class InfeasibleDesignError(ValueError):
    """No candidate precoder satisfies the design criterion."""


@dataclass(frozen=True, eq=False)
class Precoder:
    """S x S unitary precoder ``theta = P @ blockdiag(theta_tilde, I)``.

    ``b_p`` and ``b_n`` are 1-based subchannel indices carrying the precoded
    and the plain symbols. ``objective`` is the design metric reported by the
    designer that produced the matrix, if any.
    """

    s: int
    r: int
    theta_tilde: np.ndarray
    b_p: tuple[int, ...]
    b_n: tuple[int, ...]
    theta: np.ndarray
    criterion: str = ""
    objective: float | None = field(default=None)

    @property
    def is_full(self) -> bool:
        return self.r == self.s


@dataclass(frozen=True)
class GivensParams:
    """Angles ``(psi_kl, rho_kl)`` for ``1 <= k < l <= s`` in row-major pair order."""

    s: int
    angles: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if len(self.angles) != self.s * (self.s - 1) // 2:
            raise ValueError(f"need {self.s * (self.s - 1) // 2} angle pairs for s={self.s}")
        for psi, rho in self.angles:
            if not (-math.pi - 1e-12 <= psi <= math.pi + 1e-12):
                raise ValueError(f"psi={psi} outside [-pi, pi]")
            if not (-math.pi / 2 - 1e-12 <= rho <= math.pi / 2 + 1e-12):
                raise ValueError(f"rho={rho} outside [-pi/2, pi/2]")

    @classmethod
    def from_vector(cls, s: int, vec) -> GivensParams:
        v = np.asarray(vec, dtype=float).reshape(-1, 2)
        return cls(s=s, angles=tuple((float(a), float(b)) for a, b in v))


def _pairs(s: int) -> list[tuple[int, int]]:
    return [(k, l) for k in range(s) for l in range(k + 1, s)]


def _check_search_size(s: int, c: Constellation) -> None:
    if s < 1:
        raise ValueError("dimension must be at least 1")
    if s * c.m > MAX_SEARCH_BITS:
        raise ValueError(f"exhaustive search infeasible: {s} x {c.m} bits > {MAX_SEARCH_BITS}")


def difference_vectors(c: Constellation, s: int, reduced: bool = True) -> np.ndarray:
    """Nonzero difference vectors in ``(chi - chi)^s`` as columns, shape ``(s, count)``.

    With ``reduced`` only vectors whose first nonzero entry lies in the
    sector ``re > 0, im >= 0`` are kept, one per rotation orbit.
    """
    _check_search_size(s, c)
    dset = c.difference_set
    n = len(dset)
    total = n**s - 1
    if (total // 4 if reduced else total) > MAX_DIFFERENCE_VECTORS:
        raise ValueError(f"{total} difference vectors exceed the enumeration cap")
    grids = np.stack(np.meshgrid(*([np.arange(n)] * s), indexing="ij"), axis=0).reshape(s, -1)
    vecs = dset[grids][:, 1:]  # column 0 is the all-zero vector
    if reduced:
        nz = np.abs(vecs) > 1e-12
        first = vecs[nz.argmax(axis=0), np.arange(vecs.shape[1])]
        keep = (first.real > 1e-12) & (first.imag > -1e-12)
        vecs = vecs[:, keep]
    return vecs


def rotation_vector(phi: float, r: int) -> np.ndarray:
    """``[1, e^{j phi}, e^{j 2 phi}, e^{j 4 phi}, ..., e^{j 2^{r-2} phi}]``."""
    if r < 1:
        raise ValueError("r must be at least 1")
    exps = np.array([0] + [2**k for k in range(r - 1)], dtype=float)
    return np.exp(1j * phi * exps)


def _golden_max(f, lo, hi, tol: float = 1e-9, max_iter: int = 200):
    """Vectorised golden-section maximisation on brackets ``[lo, hi]``.

    ``f`` maps an array of abscissae to objective values of the same shape.
    """
    a = np.array(lo, dtype=float)
    b = np.array(hi, dtype=float)
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if np.all(np.abs(b - a) <= tol):
            break
        right = fc < fd
        a = np.where(right, c, a)
        b = np.where(right, b, d)
        new_c = np.where(right, d, b - _INV_PHI * (b - a))
        new_d = np.where(right, a + _INV_PHI * (b - a), c)
        c, d = new_c, new_d
        fnew = f(np.where(right, d, c))
        fc, fd = np.where(right, fd, fnew), np.where(right, fnew, fc)
    x = np.where(fc >= fd, c, d)
    return x, np.maximum(fc, fd)


def _rotation_dmin2(phis: np.ndarray, diffs: np.ndarray, chunk: int = 1 << 22) -> np.ndarray:
    shape = np.shape(phis)
    phis = np.atleast_1d(np.asarray(phis, dtype=float))
    r = diffs.shape[0]
    exps = np.array([0] + [2**k for k in range(r - 1)], dtype=float)
    step = max(1, chunk // max(1, diffs.shape[1]))
    flat = phis.ravel()
    res = np.empty(len(flat))
    for i in range(0, len(flat), step):
        theta = np.exp(1j * np.outer(flat[i:i + step], exps))
        res[i:i + step] = (np.abs(theta @ diffs) ** 2).min(axis=1)
    return res.reshape(shape) / r


def optimize_rotation_angle(r: int, c: Constellation, grid: int = 10_000) -> tuple[float, float]:
    """Rotation angle maximising the normalised minimum distance of ``theta^T x``.

    Scans ``grid`` points over ``(0, pi/2]`` (square QAM makes the metric
    ``pi/2``-periodic) and refines the best one by golden-section search.
    Returns ``(phi, dmin2)`` where ``dmin2 = min |theta^T d|^2 / r``.
    """
    _check_search_size(r, c)
    diffs = difference_vectors(c, r)
    if r == 1:
        return 0.0, float((np.abs(diffs[0]) ** 2).min())
    phis = (math.pi / 2) * np.arange(1, grid + 1) / grid
    vals = _rotation_dmin2(phis, diffs)
    k = int(np.argmax(vals))
    h = (math.pi / 2) / grid
    x, fx = _golden_max(lambda p: _rotation_dmin2(p, diffs), phis[k] - h, phis[k] + h, tol=1e-12)
    if float(fx) > vals[k]:
        return float(x), float(fx)
    return float(phis[k]), float(vals[k])


def _givens_factor(s: int, k: int, l: int, psi, rho) -> np.ndarray:
    psi = np.asarray(psi, dtype=float)
    rho = np.asarray(rho, dtype=float)
    g = np.broadcast_to(np.eye(s, dtype=complex), psi.shape + (s, s)).copy()
    cs, sn = np.cos(psi), np.sin(psi)
    g[..., k, k] = cs
    g[..., l, l] = cs
    g[..., k, l] = np.exp(-1j * rho) * sn
    g[..., l, k] = -np.exp(1j * rho) * sn
    return g


def givens_unitary(p: GivensParams) -> np.ndarray:
    """Product of complex Givens factors ``G_12 G_13 ... G_{s-1,s}`` (``D = I``)."""
    out = np.eye(p.s, dtype=complex)
    for (k, l), (psi, rho) in zip(_pairs(p.s), p.angles):
        out = out @ _givens_factor(p.s, k, l, psi, rho)
    return out


def ifft_matrix(s: int) -> np.ndarray:
    """Unitary IFFT matrix with entries ``exp(j 2 pi (l-1)(m-1) / s) / sqrt(s)``."""
    if s < 1:
        raise ValueError("s must be at least 1")
    idx = np.arange(s)
    return np.exp(2j * np.pi * np.outer(idx, idx) / s) / np.sqrt(s)


def min_coordinate_distance(theta: np.ndarray, diffs: np.ndarray) -> float:
    """``min over d, i of |(theta d)_i|^2``."""
    return float((np.abs(np.asarray(theta) @ diffs) ** 2).min())


def first_coordinate_distance(theta: np.ndarray, diffs: np.ndarray) -> float:
    return float((np.abs(np.asarray(theta)[0] @ diffs) ** 2).min())


def geometric_mean_distance(theta: np.ndarray, diffs: np.ndarray) -> float:
    """``min over d of prod_i |(theta d)_i|^{2/S}``."""
    d2 = np.abs(np.asarray(theta) @ diffs) ** 2
    s = d2.shape[0]
    return float(np.prod(d2 ** (1.0 / s), axis=0).min())


def _full(theta: np.ndarray, criterion: str, objective: float) -> Precoder:
    s = theta.shape[0]
    return Precoder(
        s=s, r=s, theta_tilde=theta, b_p=tuple(range(1, s + 1)), b_n=(),
        theta=theta, criterion=criterion, objective=objective,
    )


def identity_precoder(s: int) -> Precoder:
    """Unprecoded multiple beamforming, ``theta = I``."""
    return _full(np.eye(s, dtype=complex), "identity", None)


def _phi1_batch_objective(mats: np.ndarray, diffs: np.ndarray) -> np.ndarray:
    z = mats @ diffs
    return (z.real**2 + z.imag**2).min(axis=(-2, -1))


def design_phi1(
    s: int,
    c: Constellation,
    starts: int = 64,
    seed: int = 0,
    tol: float = 1e-6,
    max_sweeps: int = 60,
    scan_points: int = 16,
) -> Precoder:
    """Maximise the minimum per-coordinate squared distance over unitary matrices.

    Multi-start cyclic coordinate ascent over the ``s(s-1)`` Givens angles.
    Each coordinate step scans ``scan_points`` values over the angle's range,
    then refines the best one by golden-section search; a step is kept only
    if it does not lower the objective. All starts advance in lockstep so the
    objective is evaluated on stacked matrices. A start stops once a full
    sweep moves no angle by more than ``tol``.
    """
    _check_search_size(s, c)
    diffs = difference_vectors(c, s)
    if s == 1:
        theta = np.ones((1, 1), dtype=complex)
        return _full(theta, "phi1", min_coordinate_distance(theta, diffs))

    pairs = _pairs(s)
    nf = len(pairs)
    lo = np.tile([-math.pi, -math.pi / 2], nf)
    hi = np.tile([math.pi, math.pi / 2], nf)
    gen = np.random.default_rng(np.random.SeedSequence(seed))
    angles = lo + (hi - lo) * gen.random((starts, 2 * nf))

    def factors(a: np.ndarray) -> np.ndarray:
        # (starts, nf, s, s)
        return np.stack(
            [_givens_factor(s, k, l, a[:, 2 * f], a[:, 2 * f + 1]) for f, (k, l) in enumerate(pairs)],
            axis=1,
        )

    def product(fs: np.ndarray, start: int, stop: int) -> np.ndarray:
        out = np.broadcast_to(np.eye(s, dtype=complex), (fs.shape[0], s, s)).copy()
        for f in range(start, stop):
            out = out @ fs[:, f]
        return out

    fs = factors(angles)
    current = _phi1_batch_objective(product(fs, 0, nf), diffs)
    active = np.ones(starts, dtype=bool)
    for _ in range(max_sweeps):
        if not active.any():
            break
        moved = np.zeros(starts)
        for coord in range(2 * nf):
            f, which = divmod(coord, 2)
            k, l = pairs[f]
            left = product(fs, 0, f)
            right = product(fs, f + 1, nf)
            other = angles[:, 2 * f + (1 - which)]

            def obj(t: np.ndarray) -> np.ndarray:
                # t has shape (starts,) or (starts, q)
                t2 = t.reshape(starts, -1)
                o = np.broadcast_to(other[:, None], t2.shape)
                psi, rho = (o, t2) if which else (t2, o)
                g = _givens_factor(s, k, l, psi, rho)
                mats = left[:, None] @ g @ right[:, None]
                return _phi1_batch_objective(mats, diffs).reshape(t.shape)

            span = hi[coord] - lo[coord]
            grid = lo[coord] + span * np.arange(scan_points) / scan_points
            cand = np.concatenate([angles[:, coord:coord + 1], np.broadcast_to(grid, (starts, scan_points))], axis=1)
            vals = obj(cand)
            best = cand[np.arange(starts), vals.argmax(axis=1)]
            h = span / scan_points
            x, fx = _golden_max(obj, np.maximum(best - h, lo[coord]), np.minimum(best + h, hi[coord]), tol=tol)
            newval = np.where(fx >= vals.max(axis=1), x, best)
            newobj = np.maximum(fx, vals.max(axis=1))
            # Strict improvement only: flat directions of the max-min objective
            # would otherwise let angles wander forever.
            upd = active & (newobj > current + 1e-13 * np.abs(current))
            moved = np.maximum(moved, np.where(upd, np.abs(newval - angles[:, coord]), 0.0))
            angles[:, coord] = np.where(upd, newval, angles[:, coord])
            current = np.where(upd, newobj, current)
            fs[:, f] = _givens_factor(s, k, l, angles[:, 2 * f], angles[:, 2 * f + 1])
        active &= moved > tol

    # Re-evaluate from the angles so the reported objective matches the matrix.
    mats = product(fs, 0, nf)
    final = _phi1_batch_objective(mats, diffs)
    i = int(np.argmax(final))
    return _full(mats[i], "phi1", float(final[i]))


def design_phi2(s: int, c: Constellation, grid: int = 10_000) -> Precoder:
    """``theta = F_s^T diag(rotation_vector)``; its first row is the optimal rotation."""
    _check_search_size(s, c)
    phi, _ = optimize_rotation_angle(s, c, grid=grid)
    theta = ifft_matrix(s).T @ np.diag(rotation_vector(phi, s))
    diffs = difference_vectors(c, s)
    return _full(theta, "phi2", first_coordinate_distance(theta, diffs))


def default_p_candidates(s: int) -> list[int]:
    return [2 * s, 4 * s, 4 * s - 1, 4 * s + 1, 8 * s - 1, 8 * s + 1]


def design_phi3(s: int, c: Constellation, p_candidates=None) -> Precoder:
    """Best of ``F_s^T diag(1, sigma, ..., sigma^{s-1})``, ``sigma = e^{j 2 pi / P}``.

    The candidate ``P`` maximising the minimum geometric-mean distance wins;
    ties keep the earliest candidate.
    """
    _check_search_size(s, c)
    cands = default_p_candidates(s) if p_candidates is None else list(p_candidates)
    if not cands:
        raise ValueError("empty P candidate list")
    diffs = difference_vectors(c, s)
    best, best_val = None, 0.0
    for p in cands:
        if p == 0:
            raise ValueError("P must be nonzero")
        sigma = np.exp(2j * np.pi / p)
        theta = ifft_matrix(s).T @ np.diag(sigma ** np.arange(s))
        val = geometric_mean_distance(theta, diffs)
        if val > best_val + 1e-15:
            best, best_val = theta, val
    if best is None or best_val <= 1e-12:
        raise InfeasibleDesignError("every P candidate has zero geometric-mean distance")
    return _full(best, "phi3", best_val)


def build_partial(theta_tilde: np.ndarray, b_p, s: int) -> Precoder:
    """Assemble ``P @ blockdiag(theta_tilde, I_{s-r})``.

    Precoded output ``i`` goes to subchannel ``b_p[i]`` and plain symbol
    ``r + i`` to subchannel ``b_n[i]`` (1-based, both increasing).
    """
    tt = np.atleast_2d(np.asarray(theta_tilde, dtype=complex))
    r = tt.shape[0]
    if tt.shape != (r, r):
        raise ValueError("theta_tilde must be square")
    b_p = tuple(int(b) for b in b_p)
    if len(b_p) != r:
        raise ValueError(f"b_p has {len(b_p)} entries for an {r}x{r} theta_tilde")
    if any(b < 1 or b > s for b in b_p):
        raise ValueError(f"b_p entries must lie in 1..{s}")
    if any(b2 <= b1 for b1, b2 in zip(b_p, b_p[1:])):
        raise ValueError("b_p must be strictly increasing")
    b_n = tuple(i for i in range(1, s + 1) if i not in b_p)
    block = np.eye(s, dtype=complex)
    block[:r, :r] = tt
    theta = np.empty_like(block)
    theta[[b - 1 for b in b_p]] = block[:r]
    theta[[b - 1 for b in b_n]] = block[r:]
    return Precoder(s=s, r=r, theta_tilde=tt, b_p=b_p, b_n=b_n, theta=theta)


def precoder_to_dict(p: Precoder) -> dict:
    return {
        "s": p.s,
        "r": p.r,
        "b_p": list(p.b_p),
        "theta": [[float(z.real), float(z.imag)] for z in p.theta.ravel()],
        "criterion": p.criterion,
        "objective": p.objective,
    }


def precoder_from_dict(d: dict) -> Precoder:
    for key in ("s", "r", "b_p", "theta"):
        if key not in d:
            raise ValueError(f"precoder field '{key}' is missing")
    s, r = int(d["s"]), int(d["r"])
    flat = np.asarray(d["theta"], dtype=float)
    if flat.shape != (s * s, 2):
        raise ValueError(f"precoder field 'theta' must hold {s * s} [re, im] pairs")
    theta = (flat[:, 0] + 1j * flat[:, 1]).reshape(s, s)
    b_p = tuple(int(b) for b in d["b_p"])
    if len(b_p) != r:
        raise ValueError("precoder field 'b_p' must have r entries")
    rows = [b - 1 for b in b_p]
    p = build_partial(theta[np.ix_(rows, list(range(r)))], b_p, s)
    return Precoder(
        s=s, r=r, theta_tilde=p.theta_tilde, b_p=p.b_p, b_n=p.b_n, theta=theta,
        criterion=d.get("criterion", ""), objective=d.get("objective"),
    )


def save_precoder(p: Precoder, path) -> None:
    Path(path).write_text(json.dumps(precoder_to_dict(p), indent=2) + "\n")


def load_precoder(path) -> Precoder:
    return precoder_from_dict(json.loads(Path(path).read_text()))
