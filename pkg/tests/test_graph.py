import numpy as np
import pytest

from stabman.errors import DomainError
from stabman.graph import (
    check_phi_bounds,
    graph_point,
    jacobian_batch,
    make_graph_context,
    phi,
    phi_batch,
    phi_jet,
    sum_norm_bilinear,
)

from conftest import linear_field, parametric_field, quadratic_field

ZS = np.linspace(-0.05, 0.05, 11)[:, None]


def test_linear_field_has_flat_graph():
    g = make_graph_context(linear_field(), h=0.02)
    assert g.truncation == "none"
    np.testing.assert_array_equal(phi_batch(g, ZS), 0.0)


def test_quadratic_oracle(quad_gctx_rich):
    vals = phi_batch(quad_gctx_rich, ZS)[:, 0]
    np.testing.assert_allclose(vals, -ZS[:, 0] ** 2 / 3, atol=1e-6)


def test_quadratic_richardson_ratio(quad_gctx):
    coarse = make_graph_context(quadratic_field(), h=0.02)
    z = np.array([[0.05]])
    e1 = abs(phi_batch(coarse, z)[0, 0] + 0.05 ** 2 / 3)
    e2 = abs(phi_batch(quad_gctx, z)[0, 0] + 0.05 ** 2 / 3)
    assert 3.5 <= e1 / e2 <= 4.5


def test_phi_info_flags(quad_gctx):
    info = phi_batch(quad_gctx, ZS, return_info=True)
    assert np.all(info.inside_plateau)
    assert info.xi[5] == 0.0 and np.all(info.xi[ZS[:, 0] != 0] > 0)
    assert np.all(info.residual <= quad_gctx.picard_tol)


def test_parametric_oracle():
    g = make_graph_context(parametric_field(), h=0.01, extrapolate=True)
    Z = np.repeat(ZS, 3, axis=0)
    MU = np.tile(np.array([[-0.05], [0.02], [0.05]]), (len(ZS), 1))
    vals, J = jacobian_batch(g, Z, MU)
    np.testing.assert_allclose(vals[:, 0], -MU[:, 0] * Z[:, 0] / 2, atol=1e-6)
    np.testing.assert_allclose(J[:, 0, 0], -MU[:, 0] / 2, atol=1e-5)
    np.testing.assert_allclose(J[:, 0, 1], -Z[:, 0] / 2, atol=1e-5)


def test_graph_point_and_single_calls(quad_gctx_rich):
    x = graph_point(quad_gctx_rich, [0.03])
    np.testing.assert_allclose(x, [0.03, -0.0003], atol=1e-7)
    assert phi(quad_gctx_rich, [0.03]).shape == (1,)
    with pytest.raises(DomainError):
        phi(quad_gctx_rich, [0.03, 0.0])


def test_jet_of_quadratic(quad_gctx_rich):
    jet = phi_jet(quad_gctx_rich, [0.02], k_max=3)
    assert jet[1][0, 0] == pytest.approx(-2 * 0.02 / 3, abs=1e-6)
    assert jet[2][0, 0, 0] == pytest.approx(-2 / 3, abs=1e-3)
    assert abs(jet[3][0, 0, 0, 0]) < 5e-2


def test_gamma_independence():
    f = quadratic_field()
    kw = dict(grid_n=3000, T=30.0, picard_tol=1e-13)
    a = make_graph_context(f, gamma=-0.3, **kw)
    b = make_graph_context(f, gamma=-0.7, **kw)
    np.testing.assert_allclose(phi_batch(a, ZS), phi_batch(b, ZS), atol=1e-12)


def test_bound_ratios_below_one(quad_gctx):
    rep = check_phi_bounds(quad_gctx, n_per_axis=5)
    for key in ("k0", "k1z", "k2"):
        assert 0 < rep.max_ratio[key] < 1


def test_sum_norm_bilinear_blocks():
    H = np.zeros((1, 2, 2))
    H[0, 0, 0], H[0, 1, 1], H[0, 0, 1] = 3.0, 1.0, 0.5
    assert sum_norm_bilinear(H, 1) == pytest.approx(3.0)
