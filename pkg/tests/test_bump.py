import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st

from stabman.bump import chi, derivative_sup, plateau_jet, truncate_family
from stabman.errors import DomainError

from conftest import cubic_field, quadratic_field


def _sympy_chi_derivs(k_max):
    u = sp.symbols("u")
    h = lambda t: sp.exp(-1 / t)  # noqa: E731
    c = h(2 - u) / (h(2 - u) + h(u - 1))
    out = [c]
    for _ in range(k_max):
        out.append(sp.diff(out[-1], u))
    return [sp.lambdify(u, e, "mpmath") for e in out]


def test_plateau_shape():
    u = np.array([0.0, 0.5, 1.0, 1.5, 2.0, 3.0])
    np.testing.assert_allclose(chi(u), [1, 1, 1, 0.5, 0, 0], atol=1e-15)
    assert plateau_jet(1.3, 2).shape == (3,)
    assert plateau_jet(np.zeros((2, 3)), 1).shape == (2, 2, 3)


def test_derivatives_against_symbolic_oracle():
    fs = _sympy_chi_derivs(4)
    pts = np.linspace(1.02, 1.98, 25)
    jet = plateau_jet(pts, 4)
    for k in range(5):
        ref = np.array([float(fs[k](float(p))) for p in pts])
        np.testing.assert_allclose(jet[k], ref, rtol=1e-9, atol=1e-11)


def test_derivative_sup_frozen_values():
    # values reproduced by a symbolic oracle (sympy, dense mpmath grid)
    assert derivative_sup(0) == 1.0
    assert derivative_sup(1) == pytest.approx(2.0, abs=1e-9)
    assert derivative_sup(2) == pytest.approx(9.84, abs=5e-3)
    assert derivative_sup(3) == pytest.approx(110.57, abs=5e-2)


def test_derivative_sup_symbolic_oracle():
    fs = _sympy_chi_derivs(2)
    grid = np.linspace(1.0005, 1.9995, 2000)
    ref = max(abs(float(fs[2](float(t)))) for t in grid)
    assert derivative_sup(2) >= ref * (1 - 1e-9)
    assert derivative_sup(2) <= ref * (1 + 1e-3)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.0, 3.0))
def test_chi_bounds_and_symmetry(u):
    c = float(chi(u))
    assert 0.0 <= c <= 1.0
    # chi(3 - u) = 1 - chi(u) on [1, 2]
    if 1.0 <= u <= 2.0:
        assert float(chi(3.0 - u)) == pytest.approx(1.0 - c, abs=1e-14)


def test_truncated_field_equals_base_inside_and_linear_outside():
    f = quadratic_field()
    T = truncate_family(f, 0.1, r=1.0)
    x_in = np.array([0.05, 0.05])
    np.testing.assert_allclose(T(x_in), f(x_in), atol=1e-16)
    x_out = np.array([0.2, 0.1])
    np.testing.assert_allclose(T(x_out), f.A @ x_out, atol=1e-16)
    assert T.support_radius == pytest.approx(0.1 * math.sqrt(2))


def test_truncation_range_checked():
    with pytest.raises(DomainError):
        truncate_family(quadratic_field(), 0.9, r=1.0)
    with pytest.raises(DomainError):
        truncate_family(quadratic_field(), 0.0, r=1.0)


@settings(max_examples=25, deadline=None)
@given(st.floats(-0.15, 0.15), st.floats(-0.15, 0.15), st.floats(-1, 1), st.floats(-1, 1))
def test_truncated_jets_match_finite_differences(a, b, d1, d2):
    T = truncate_family(cubic_field(), 0.1, r=1.0)
    w, d = np.array([a, b]), np.array([d1, d2])
    h = 1e-6
    np.testing.assert_allclose(T.jacobian(w) @ d, (T(w + h * d) - T(w - h * d)) / (2 * h),
                               atol=2e-6)
    H = T.tensor(w, None, 2) @ d
    np.testing.assert_allclose(H, (T.jacobian(w + h * d) - T.jacobian(w - h * d)) / (2 * h),
                               atol=5e-4)
