import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays
import scipy.linalg

from stabman.errors import DegenerateIntersectionError, DomainError, MatrixExpOverflowError
from stabman.spectral import (
    K_of,
    Kp_of,
    analyze_matrix,
    canonical_basis,
    exp_growth_coefficient,
    matrix_exponential,
    principal_angle,
    split_components,
)


def angle_oracle(F, G):
    # independent route: cosine of the smallest angle is the top singular
    # value of Q_F^T Q_G, with orthonormal bases from numpy's QR
    QF, _ = np.linalg.qr(F)
    QG, _ = np.linalg.qr(G)
    s = np.linalg.svd(QF.T @ QG, compute_uv=False)
    return math.acos(min(1.0, s.max()))


def test_saddle_constants():
    sa = analyze_matrix(np.diag([-1.0, 1.0]))
    assert sa.r == 2
    assert sa.family_angle == pytest.approx(math.pi / 2)
    assert sa.c_A == pytest.approx(math.sqrt(2), rel=1e-15)
    assert sa.K_A == pytest.approx(math.sqrt(2), rel=1e-15)
    assert sa.Kp_A == pytest.approx(4 * math.sqrt(2), rel=1e-15)
    assert (sa.M_A, sa.m_A) == (1.0, -1.0)


def test_single_eigenspace_has_unit_constant():
    sa = analyze_matrix(np.array([[2.0, 1.0], [0.0, 2.0]]))
    assert sa.r == 1 and sa.multiplicities == (2,)
    assert sa.c_A == 1.0
    assert sa.K_A == pytest.approx(max(1.0, np.linalg.norm([[2, 1], [0, 2]], 2)))


def test_sixty_degree_angle_gives_c_equal_two():
    F = np.array([[1.0], [0.0]])
    G = np.array([[0.5], [math.sqrt(3) / 2]])
    ang, c = principal_angle(F, G)
    assert ang == pytest.approx(math.pi / 3, rel=1e-12)
    assert c == pytest.approx(2.0, rel=1e-12)


def test_angle_floor_raises():
    F = np.array([[1.0], [0.0]])
    with pytest.raises(DegenerateIntersectionError):
        principal_angle(F, F)


def test_conjugate_pair_shares_a_subspace():
    A = np.array([[0.0, -2.0, 0.0], [2.0, 0.0, 0.0], [0.0, 0.0, -1.0]])
    sa = analyze_matrix(A)
    assert sorted(sa.multiplicities) == [1, 2]
    for B in sa.gen_eigenspaces:
        assert np.allclose(B.T @ B, np.eye(B.shape[1]), atol=1e-12)


def test_projectors_reassemble_identity():
    rng = np.random.default_rng(3)
    A = rng.standard_normal((5, 5))
    sa = analyze_matrix(A)
    P = sum(sa.projector(i) for i in range(sa.r))
    assert np.allclose(P, np.eye(5), atol=1e-10)
    for i, B in enumerate(sa.gen_eigenspaces):
        # invariance
        X = A @ B
        assert np.linalg.norm(X - B @ (B.T @ X)) < 1e-9


def test_exp_growth_coefficient_example():
    sa = analyze_matrix(np.diag([-1.0, -2.0]))
    assert exp_growth_coefficient(sa, 0.0) == pytest.approx(4 * math.sqrt(2), rel=1e-14)
    with pytest.raises(DomainError):
        exp_growth_coefficient(sa, -1.0)


def test_matrix_exponential_overflow():
    with pytest.raises(MatrixExpOverflowError):
        matrix_exponential(np.diag([1.0, 2.0]), 1e4)
    assert np.allclose(matrix_exponential(np.diag([1.0, -1.0]), 0.0), np.eye(2))


def test_K_and_Kp_helpers():
    A = np.diag([-1.0, 1.0])
    assert K_of(A) == pytest.approx(math.sqrt(2))
    assert Kp_of(A) == pytest.approx(4 * math.sqrt(2))


def test_canonical_basis_depends_only_on_the_span():
    V = np.array([[1.0, 1.0], [1.0, -1.0], [0.0, 0.0]])
    B1 = canonical_basis(V)
    B2 = canonical_basis(V[:, ::-1] * 3.0)
    assert np.allclose(B1, B2, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 8), st.integers(1, 7), st.integers(0, 2**31 - 1))
def test_principal_angle_matches_oracle(n, p, seed):
    p = min(p, n - 1)
    rng = np.random.default_rng(seed)
    F = rng.standard_normal((n, p))
    G = rng.standard_normal((n, n - p))
    ang, c = principal_angle(F, G)
    assert ang == pytest.approx(angle_oracle(F, G), abs=1e-9)
    assert c == pytest.approx(1.0 / math.sin(ang / 2.0), rel=1e-12)
    assert 1.0 <= c


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (4, 4), elements=st.floats(-3, 3)))
def test_components_sum_to_vector(A):
    sa = analyze_matrix(A)
    x = np.arange(1.0, 5.0)
    parts = sa.components(x)
    assert np.allclose(sum(parts), x, atol=1e-7 * max(1.0, np.abs(x).max()) * sa.c_A ** 2)
    assert sa.c_A >= 1.0 and sa.K_A >= sa.c_A and sa.Kp_A >= sa.K_A


def test_split_components_two_spaces():
    F = np.array([[1.0], [0.0]])
    G = np.array([[1.0], [1.0]])
    xF, xG = split_components([F, G], np.array([3.0, 2.0]))
    assert np.allclose(xF, [1.0, 0.0]) and np.allclose(xG, [2.0, 2.0])


@pytest.mark.parametrize("seed", range(5))
def test_exp_bound_random(seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((3, 3))
    sa = analyze_matrix(A)
    alpha = sa.M_A + 0.3
    B = exp_growth_coefficient(sa, alpha)
    for s in np.linspace(0, 30, 31):
        assert np.linalg.norm(scipy.linalg.expm(s * A), 2) <= B * math.exp(alpha * s) * (1 + 1e-9)
