import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from beamsim.constellation import qam
from beamsim.precoder import (
    GivensParams,
    InfeasibleDesignError,
    build_partial,
    default_p_candidates,
    design_phi1,
    design_phi2,
    design_phi3,
    difference_vectors,
    givens_unitary,
    identity_precoder,
    ifft_matrix,
    load_precoder,
    min_coordinate_distance,
    optimize_rotation_angle,
    precoder_from_dict,
    precoder_to_dict,
    rotation_vector,
    save_precoder,
)

QPSK = qam(2)


def pair_differences(c, s):
    """All x - x_hat over distinct symbol-vector pairs (oracle, no deduplication)."""
    vecs = np.array(list(itertools.product(c.points, repeat=s))).T
    d = vecs[:, :, None] - vecs[:, None, :]
    d = d.reshape(s, -1)
    return d[:, np.any(np.abs(d) > 1e-12, axis=0)]


def unitarity_error(a):
    return np.max(np.abs(a.conj().T @ a - np.eye(a.shape[0])))


@pytest.fixture(scope="module")
def phi1_2():
    return design_phi1(2, QPSK)


# -- difference vectors ----------------------------------------------------------


def test_difference_vector_counts():
    assert difference_vectors(QPSK, 2, reduced=False).shape == (2, 80)
    assert difference_vectors(QPSK, 2).shape == (2, 20)


def test_reduced_set_covers_all_pairs_up_to_rotation():
    red = difference_vectors(QPSK, 2)
    full = {tuple(np.round(v, 9)) for v in pair_differences(QPSK, 2).T}
    orbit = {tuple(np.round(u * v, 9)) for v in red.T for u in (1, 1j, -1, -1j)}
    assert orbit == full


# -- rotation vector -------------------------------------------------------------


def test_rotation_vector_examples():
    assert_allclose(rotation_vector(0.0, 4), np.ones(4))
    phi = 0.37
    assert_allclose(rotation_vector(phi, 3), np.exp(1j * phi * np.array([0, 1, 2])))
    assert_allclose(rotation_vector(phi, 5), np.exp(1j * phi * np.array([0, 1, 2, 4, 8])))
    assert_allclose(rotation_vector(phi, 1), [1.0])


def _rotation_oracle(r, c, grid):
    diffs = pair_differences(c, r)
    exps = np.array([0] + [2**k for k in range(r - 1)])
    best = 0.0
    phis = (math.pi / 2) * np.arange(1, grid + 1) / grid
    for chunk in np.array_split(phis, 50):
        th = np.exp(1j * chunk[:, None] * exps[None, :])
        best = max(best, float((np.abs(th @ diffs) ** 2).min(axis=1).max()) / r)
    return best


def test_psb_min_distance_matches_reported_value():
    _, d = optimize_rotation_angle(2, QPSK)
    assert d == pytest.approx(0.27, abs=0.02)


def test_rotation_angle_against_fine_grid_oracle():
    phi, d = optimize_rotation_angle(2, QPSK, grid=10_000)
    assert abs(d - _rotation_oracle(2, QPSK, 100_000)) <= 1e-4
    th = rotation_vector(phi, 2)
    assert float((np.abs(th @ pair_differences(QPSK, 2)) ** 2).min()) / 2 == pytest.approx(d, abs=1e-12)


@pytest.mark.parametrize("m", [2, 4])
def test_single_stream_rotation_is_plain_constellation(m):
    c = qam(m)
    _, d = optimize_rotation_angle(1, c)
    assert d == pytest.approx(c.min_distance2, abs=1e-12)


def test_rotation_infeasible_size():
    with pytest.raises(ValueError):
        optimize_rotation_angle(3, qam(6))


# -- Givens / IFFT -----------------------------------------------------------------


def test_givens_identity_and_real_rotation():
    assert_allclose(givens_unitary(GivensParams(3, ((0, 0),) * 3)), np.eye(3), atol=1e-15)
    g = givens_unitary(GivensParams(2, ((math.pi / 4, 0.0),)))
    h = math.sqrt(2) / 2
    assert_allclose(g, [[h, h], [-h, h]], atol=1e-15)


def test_givens_entry_placement():
    psi, rho = 0.3, -0.7
    g = givens_unitary(GivensParams(2, ((psi, rho),)))
    assert_allclose(g, [[math.cos(psi), np.exp(-1j * rho) * math.sin(psi)],
                        [-np.exp(1j * rho) * math.sin(psi), math.cos(psi)]])


def test_givens_rejects_bad_ranges():
    with pytest.raises(ValueError):
        GivensParams(2, ((0.0, 2.0),))
    with pytest.raises(ValueError):
        GivensParams(3, ((0.0, 0.0),))


angles = st.tuples(st.floats(-math.pi, math.pi), st.floats(-math.pi / 2, math.pi / 2))


@settings(max_examples=50, deadline=None)
@given(a=st.lists(angles, min_size=6, max_size=6), b=st.lists(angles, min_size=6, max_size=6))
def test_givens_unitary_and_closed_under_product(a, b):
    ga = givens_unitary(GivensParams(4, tuple(a)))
    gb = givens_unitary(GivensParams(4, tuple(b)))
    assert unitarity_error(ga) <= 1e-10
    assert unitarity_error(ga @ gb) <= 1e-9


def test_ifft_matrix():
    assert_allclose(ifft_matrix(2), np.array([[1, 1], [1, -1]]) / math.sqrt(2), atol=1e-15)
    assert unitarity_error(ifft_matrix(4)) <= 1e-12
    for s in range(1, 9):
        col = ifft_matrix(s)[:, 0]
        assert_allclose(col, np.full(s, col[0]))


# -- designers -------------------------------------------------------------------


def _power_ok(theta, c):
    s = theta.shape[0]
    x = np.array(list(itertools.product(c.points, repeat=s))).T
    return np.mean(np.sum(np.abs(theta @ x) ** 2, axis=0)) == pytest.approx(np.mean(np.sum(np.abs(x) ** 2, axis=0)), abs=1e-10)


def _certificate(theta, c):
    return float((np.abs(theta[0] @ pair_differences(c, theta.shape[0])) ** 2).min())


def test_phi1_single_stream():
    p = design_phi1(1, QPSK)
    assert_allclose(p.theta, [[1.0]])
    assert p.objective == pytest.approx(QPSK.min_distance2)


def test_phi1_beats_identity(phi1_2):
    diffs = pair_differences(QPSK, 2)
    assert min_coordinate_distance(np.eye(2), diffs) == 0.0
    assert phi1_2.objective > 0
    assert min_coordinate_distance(phi1_2.theta, diffs) == pytest.approx(phi1_2.objective, rel=1e-9)


def test_phi1_search_stability():
    vals = [design_phi1(2, QPSK, seed=k).objective for k in range(10)]
    best = max(vals)
    assert all(abs(v - best) <= 0.05 * best for v in vals)


def test_phi1_objective_invariant_to_diagonal_phases(phi1_2):
    diffs = difference_vectors(QPSK, 2)
    d = np.diag(np.exp(1j * np.array([0.4, -2.1])))
    assert min_coordinate_distance(d @ phi1_2.theta, diffs) == pytest.approx(phi1_2.objective, rel=1e-12)


def test_phi2_structure():
    p = design_phi2(2, QPSK)
    assert_allclose(np.abs(p.theta[0]), [1 / math.sqrt(2)] * 2)
    assert unitarity_error(p.theta) <= 1e-10
    _, d = optimize_rotation_angle(2, QPSK)
    first = float((np.abs(p.theta[0] @ pair_differences(QPSK, 2)) ** 2).min())
    assert abs(first - d * 2 / 2) <= 1e-9


def test_phi3_single_stream():
    assert_allclose(design_phi3(1, QPSK, [7]).theta, [[1.0]])


def test_phi3_picks_best_candidate():
    cands = [4, 8, 16, 32]
    p = design_phi3(2, QPSK, cands)
    assert unitarity_error(p.theta) <= 1e-10 and p.objective > 0
    diffs = pair_differences(QPSK, 2)
    scores = []
    for P in cands:
        th = ifft_matrix(2).T @ np.diag(np.exp(2j * np.pi / P) ** np.arange(2))
        scores.append(float(np.prod(np.abs(th @ diffs) ** 2, axis=0).min() ** 0.5))
    assert p.objective == pytest.approx(max(scores), rel=1e-9)


def test_phi3_all_zero_candidates_infeasible():
    # P = 2S makes two rows of the LCP matrix coincide up to sign
    with pytest.raises(InfeasibleDesignError):
        design_phi3(2, QPSK, [4])


def test_default_p_candidates():
    assert default_p_candidates(3) == [6, 12, 11, 13, 23, 25]


@pytest.mark.parametrize("design", [
    lambda s: design_phi1(s, QPSK, starts=16),
    lambda s: design_phi2(s, QPSK),
    lambda s: design_phi3(s, QPSK),
])
@pytest.mark.parametrize("s", [2, 3])
def test_designer_invariants(design, s):
    p = design(s)
    assert unitarity_error(p.theta) <= 1e-10
    assert _power_ok(p.theta, QPSK)
    assert _certificate(p.theta, QPSK) > 0


def test_designer_size_guard():
    with pytest.raises(ValueError):
        design_phi1(3, qam(6))
    with pytest.raises(ValueError):
        design_phi3(5, qam(4))


# -- partial assembly -------------------------------------------------------------


def test_build_partial_identity():
    p = build_partial(np.eye(2), [1, 2], 2)
    assert_allclose(p.theta, np.eye(2))
    assert p.b_n == ()


def test_build_partial_row_placement():
    tt = ifft_matrix(2)
    p = build_partial(tt, [1, 3], 4)
    assert p.b_n == (2, 4)
    assert_allclose(p.theta[1], [0, 0, 1, 0])
    assert_allclose(p.theta[3], [0, 0, 0, 1])
    assert_allclose(p.theta[[0, 2]][:, :2], tt)


def test_build_partial_unitary_iff_block_unitary():
    rng = np.random.default_rng(3)
    for _ in range(20):
        a = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
        q, _ = np.linalg.qr(a)
        assert unitarity_error(build_partial(q, [2, 4], 4).theta) <= 1e-10
        assert unitarity_error(build_partial(a, [2, 4], 4).theta) > 1e-3


@pytest.mark.parametrize("b_p", [[1, 1], [0, 2], [3, 5], [2, 1]])
def test_build_partial_bad_indices(b_p):
    with pytest.raises(ValueError):
        build_partial(np.eye(2), b_p, 4)


def test_json_round_trip(tmp_path, phi1_2):
    part = build_partial(phi1_2.theta, [1, 4], 4)
    for p in (phi1_2, part, identity_precoder(3)):
        path = tmp_path / "p.json"
        save_precoder(p, path)
        q = load_precoder(path)
        assert (q.s, q.r, q.b_p, q.b_n) == (p.s, p.r, p.b_p, p.b_n)
        assert_allclose(q.theta, p.theta, rtol=1e-12, atol=1e-15)
        assert_allclose(q.theta_tilde, p.theta_tilde, rtol=1e-12, atol=1e-15)


def test_json_missing_field(phi1_2):
    d = precoder_to_dict(phi1_2)
    del d["theta"]
    with pytest.raises(ValueError, match="theta"):
        precoder_from_dict(d)
