"""Diversity-order combinatorics and pairwise-error bounds.

A pairwise error whose weighted squared-distance vector (ordered by
subchannel) first becomes nonzero at index ``delta`` decays at high SNR
with exponent ``(M - delta + 1)(N - delta + 1)``. The bound constant in
front of that exponent is never evaluated here; only exponents are.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .constellation import Constellation
from .precoder import Precoder, difference_vectors

__all__ = [
    "ZERO_TOL",
    "SubchannelAssignment",
    "DiversityReport",
    "delta_for_pair",
    "delta_max",
    "diversity_order",
    "diversity_report",
    "table_one",
    "render_table_one",
    "table_one_csv",
    "group_deltas_oracle",
    "delta_max_oracle",
    "pep_bound_psb",
    "worst_case_delta",
    "pep_exponent_fpmb",
]

ZERO_TOL = 1e-12


@dataclass(frozen=True)
class SubchannelAssignment:
    s: int
    b_p: tuple[int, ...]
    b_n: tuple[int, ...]

    def __post_init__(self):
        if sorted(self.b_p + self.b_n) != list(range(1, self.s + 1)):
            raise ValueError("b_p and b_n must partition 1..s")
        for b in (self.b_p, self.b_n):
            if any(y <= x for x, y in zip(b, b[1:])):
                raise ValueError("subchannel index lists must be increasing")

    @property
    def r(self) -> int:
        return len(self.b_p)

    @classmethod
    def from_precoded(cls, b_p, s: int) -> SubchannelAssignment:
        b_p = tuple(int(b) for b in b_p)
        return cls(s=s, b_p=b_p, b_n=tuple(i for i in range(1, s + 1) if i not in b_p))


@dataclass(frozen=True)
class DiversityReport:
    delta_max: int
    order: int
    group_deltas: tuple[int | None, int | None, int | None]


def delta_for_pair(dist2, tol: float = ZERO_TOL) -> int:
    """1-based index of the first entry of ``dist2`` above ``tol``."""
    d = np.asarray(dist2, dtype=float)
    nz = np.flatnonzero(d > tol)
    if nz.size == 0:
        raise ValueError("all distances are zero: the pair is not distinct")
    return int(nz[0]) + 1


def delta_max(a: SubchannelAssignment) -> int:
    """Worst-case delta of a partially precoded assignment, ``max(b_p(1), b_n(S-R))``.

    Assumes the precoder block gives every precoded difference a nonzero
    first coordinate; a full assignment then has delta 1.
    """
    if not a.b_n:
        return 1
    if not a.b_p:
        return a.b_n[-1]
    return max(a.b_p[0], a.b_n[-1])


def diversity_order(m: int, n: int, delta: int) -> int:
    if not 1 <= delta <= min(m, n):
        raise ValueError(f"delta={delta} outside 1..{min(m, n)}")
    return (m - delta + 1) * (n - delta + 1)


def _group_deltas(a: SubchannelAssignment) -> tuple[int | None, int | None, int | None]:
    # Group 1: plain symbols differ only; group 2: precoded differ only;
    # group 3: both differ, where the precoded part pins delta <= b_p(1).
    d1 = a.b_n[-1] if a.b_n else None
    d2 = a.b_p[0] if a.b_p else None
    d3 = min(d1, d2) if d1 is not None and d2 is not None else None
    return d1, d2, d3


def diversity_report(a: SubchannelAssignment, m: int, n: int) -> DiversityReport:
    dmax = delta_max(a)
    return DiversityReport(delta_max=dmax, order=diversity_order(m, n, dmax), group_deltas=_group_deltas(a))


def table_one(m: int = 4, n: int = 4, s: int = 4) -> list[tuple]:
    """Rows ``(r, b_p, b_n, b_p(1), b_n(S-R), delta_max, order)`` for 2 <= r < s."""
    rows = []
    for r in range(2, s):
        for b_p in combinations(range(1, s + 1), r):
            a = SubchannelAssignment.from_precoded(b_p, s)
            dm = delta_max(a)
            rows.append((r, a.b_p, a.b_n, a.b_p[0], a.b_n[-1], dm, diversity_order(m, n, dm)))
    return rows


TABLE_ONE_HEADER = ("R", "b_p", "b_n", "b_p(1)", "b_n(S-R)", "delta_max", "O_div")


def _fmt_idx(b) -> str:
    return "[" + " ".join(str(i) for i in b) + "]"


def render_table_one(rows) -> str:
    cells = [TABLE_ONE_HEADER] + [
        (str(r), _fmt_idx(bp), _fmt_idx(bn), str(p1), str(n1), str(dm), str(o))
        for r, bp, bn, p1, n1, dm, o in rows
    ]
    widths = [max(len(row[i]) for row in cells) for i in range(len(TABLE_ONE_HEADER))]
    lines = ["  ".join(c.rjust(w) for c, w in zip(row, widths)) for row in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def table_one_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TABLE_ONE_HEADER)
    for r, bp, bn, p1, n1, dm, o in rows:
        w.writerow([r, _fmt_idx(bp), _fmt_idx(bn), p1, n1, dm, o])
    return buf.getvalue()


def _first_nonzero(weights: np.ndarray, tol: float) -> np.ndarray:
    """Per-column 1-based index of the first row above ``tol``."""
    nz = weights > tol
    if not nz.any(axis=0).all():
        raise ValueError("a difference vector maps to all-zero distances")
    return nz.argmax(axis=0) + 1


def group_deltas_oracle(
    a: SubchannelAssignment, theta_tilde: np.ndarray, c: Constellation, tol: float = ZERO_TOL
) -> tuple[int | None, int | None, int | None]:
    """Brute-force maximum delta within each pair group.

    Every nonzero difference vector is split into its precoded part
    (symbols ``1..R``) and plain part (symbols ``R+1..S``). The precoded
    distances ``|theta_tilde d_p|^2`` are placed on subchannels ``b_p`` and
    the plain distances ``|d_n|^2`` on ``b_n``; delta is the first nonzero
    subchannel. Groups: 1 = only plain part differs, 2 = only precoded part
    differs, 3 = both differ. ``None`` marks an empty group.
    """
    r = a.r
    tt = np.atleast_2d(np.asarray(theta_tilde, dtype=complex))
    if tt.shape != (r, r):
        raise ValueError("theta_tilde does not match the assignment")
    diffs = difference_vectors(c, a.s, reduced=True)
    dp, dn = diffs[:r], diffs[r:]
    weights = np.zeros(diffs.shape)
    if r:
        weights[[b - 1 for b in a.b_p]] = np.abs(tt @ dp) ** 2
    if a.s - r:
        weights[[b - 1 for b in a.b_n]] = np.abs(dn) ** 2
    deltas = _first_nonzero(weights, tol)
    p_diff = (np.abs(dp) > tol).any(axis=0) if r else np.zeros(diffs.shape[1], bool)
    n_diff = (np.abs(dn) > tol).any(axis=0) if a.s - r else np.zeros(diffs.shape[1], bool)
    groups = (~p_diff & n_diff, p_diff & ~n_diff, p_diff & n_diff)
    return tuple(int(deltas[g].max()) if g.any() else None for g in groups)


def delta_max_oracle(
    a: SubchannelAssignment, theta_tilde: np.ndarray, c: Constellation, tol: float = ZERO_TOL
) -> int:
    return max(d for d in group_deltas_oracle(a, theta_tilde, c, tol) if d is not None)


def pep_bound_psb(dmin2: float, n: int, snr: float, m_rx: int) -> float:
    """``0.5 * (dmin2 * snr / (4 n)) ** (-m_rx * n)``."""
    if dmin2 <= 0:
        raise ValueError("dmin2 must be positive for a full-diversity bound")
    if snr <= 0:
        raise ValueError("snr must be positive")
    return 0.5 * (dmin2 * snr / (4 * n)) ** (-(m_rx * n))


def worst_case_delta(theta: np.ndarray, c: Constellation, tol: float = ZERO_TOL) -> int:
    """Maximum over all nonzero differences ``d`` of the first nonzero index of ``|theta d|^2``."""
    theta = np.atleast_2d(np.asarray(theta, dtype=complex))
    diffs = difference_vectors(c, theta.shape[1])
    return int(_first_nonzero(np.abs(theta @ diffs) ** 2, tol).max())


def pep_exponent_fpmb(theta: Precoder | np.ndarray, c: Constellation, m: int, n: int) -> int:
    """Predicted high-SNR BER slope of a (possibly partial) precoded system."""
    mat = theta.theta if isinstance(theta, Precoder) else theta
    return diversity_order(m, n, worst_case_delta(mat, c))
