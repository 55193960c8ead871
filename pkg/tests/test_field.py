import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stabman.errors import DomainError, HypothesisViolationError
from stabman.field import (
    ball_points,
    build_family,
    eval_derivative,
    multilinear_norm,
    polynomial_family,
    polynomial_from_terms,
    sampled_norms,
    translated_family,
)

from conftest import Y_AXIS, cubic_field, foliation_Y, parametric_field, quadratic_field, term


def test_quadratic_values_and_jets():
    f = quadratic_field()
    x = np.array([0.3, -0.2])
    np.testing.assert_allclose(f(x), [-0.3, -0.2 + 0.09])
    np.testing.assert_allclose(f.A, np.diag([-1.0, 1.0]))
    J = f.jacobian(x)
    np.testing.assert_allclose(J, [[-1.0, 0.0], [0.6, 1.0]])
    H = f.tensor(x, None, 2)
    assert H.shape == (2, 2, 2)
    assert H[1, 0, 0] == 2.0 and np.count_nonzero(H) == 1
    assert np.all(f.tensor(x, None, 3) == 0)


def test_parametric_mixed_derivative():
    f = parametric_field()
    e_z, e_mu = np.array([1.0, 0, 0]), np.array([0, 0, 1.0])
    d = eval_derivative(f, (np.array([0.1, 0.0]), np.array([0.2])), 2, [e_z, e_mu])
    np.testing.assert_allclose(d, [0.0, 1.0])


def test_family_rejects_nonzero_origin():
    with pytest.raises(HypothesisViolationError):
        polynomial_family(1, 0, [term(0, (0,), 1.0)])


def test_wrong_mu_shape():
    with pytest.raises(DomainError):
        parametric_field()(np.zeros(2))


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=3, max_size=3),
       st.lists(st.floats(-1, 1), min_size=3, max_size=3))
def test_jacobian_matches_finite_differences(w, d):
    f = cubic_field()
    w, d = np.array(w[:2]), np.array(d[:2])
    h = 1e-6
    fd = (f(w + h * d) - f(w - h * d)) / (2 * h)
    np.testing.assert_allclose(f.jacobian(w) @ d, fd, atol=1e-7)
    fd2 = (f.jacobian(w + h * d) - f.jacobian(w - h * d)) / (2 * h)
    np.testing.assert_allclose(f.tensor(w, None, 2) @ d, fd2, atol=1e-6)


def test_translated_family_vanishes_on_G():
    X = translated_family(foliation_Y(), Y_AXIS, [0.0, 0.3])
    mus = np.linspace(-0.5, 0.5, 11)[:, None]
    np.testing.assert_allclose(X(np.zeros((11, 2)), mus), 0.0, atol=1e-15)
    np.testing.assert_allclose(X.A, [[-1.0, 0.0], [0.0, 0.0]])


def test_translated_family_requires_zero_set():
    Y = polynomial_from_terms([term(0, (1, 0), -1), term(1, (0, 1), 1)], 2, 2)
    with pytest.raises(HypothesisViolationError):
        translated_family(Y, Y_AXIS)


def test_build_family_from_config():
    spec = {"kind": "polynomial", "n": 2, "s": 0,
            "terms": [term(0, (1, 0), -1), term(1, (0, 1), 1), term(1, (2, 0), 1)]}
    f = build_family(spec)
    np.testing.assert_allclose(f([0.5, 0.0]), quadratic_field()([0.5, 0.0]))
    with pytest.raises(DomainError):
        build_family({"kind": "spline", "n": 1})


def test_multilinear_norm_exact_cases():
    rng = np.random.default_rng(0)
    # symmetric bilinear map v -> (v1^2 + v2^2) has norm 1
    T = np.zeros((1, 1, 2, 2))
    T[0, 0] = np.eye(2)
    assert multilinear_norm(T, 2, rng)[0] == pytest.approx(1.0, rel=1e-12)
    # a matrix: spectral norm
    M = rng.standard_normal((3, 2, 4))
    np.testing.assert_allclose(multilinear_norm(M, 1, rng), np.linalg.norm(M, 2, axis=(1, 2)))


def test_ball_points_are_nested_and_inside():
    P = ball_points(3, 0.5, 64, seed=1)
    assert P.shape == (128, 3)
    assert np.all(np.linalg.norm(P, axis=1) <= 0.5 + 1e-14)
    np.testing.assert_allclose(np.linalg.norm(P[64:], axis=1), 0.5)
    np.testing.assert_array_equal(ball_points(3, 0.5, 64, seed=1), P)


def test_sampled_norms_quadratic():
    t = sampled_norms(quadratic_field(), 0.5, k_max=3, budget=256)
    # ||dX - A|| = 2|z| <= 1 on the ball; the sampled sup approaches it from below
    assert 1.0 - 1e-4 <= t.M1_loc <= 1.0 + 1e-14
    assert t.Mk_raw[2] == pytest.approx(2.0, rel=1e-12)
    assert t.Mk_raw[3] == 0.0
    assert t.M2_hat == 2.0 and t.is_lower_bound


def test_sampled_norms_linear_is_zero():
    lin = polynomial_family(2, 0, [term(0, (1, 0), -1), term(1, (0, 1), 1)])
    t = sampled_norms(lin, 1.0, budget=32)
    assert t.M1_loc == 0.0 and t.Mk_loc[2] == 0.0 and t.M2_hat == 1.0


def test_sampled_norms_monotone_in_radius():
    f = cubic_field()
    a = sampled_norms(f, 0.1, k_max=3, budget=128)
    b = sampled_norms(f, 0.4, k_max=3, budget=128)
    assert a.M1_loc <= b.M1_loc and a.Mk_loc[2] <= b.Mk_loc[2]
