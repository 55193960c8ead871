import math

import numpy as np
import pytest

from stabman.errors import DomainError, GateViolationError
from stabman.gammaspace import (
    DiscretePath,
    apply_T,
    auto_horizon,
    estimate_contraction,
    gamma_norm,
    make_context,
    ode_residual,
    solve_fixed_point,
    solve_variational,
    zero_path,
)
from stabman.graph import make_graph_context
from stabman.hypotheses import build_splitting
from stabman.spectral import analyze_matrix

from conftest import linear_field, quadratic_field


@pytest.fixture(scope="module")
def saddle_split():
    return build_splitting(analyze_matrix(np.diag([-1.0, 1.0])))


@pytest.fixture(scope="module")
def lin_ctx(saddle_split):
    return make_context(linear_field(), saddle_split, -0.5, h=0.01)


@pytest.fixture(scope="module")
def canon_ctx():
    # the canonical policy halves the truncation size until the gate passes
    return make_graph_context(quadratic_field(), h=0.01, truncation="canonical").op


def test_auto_horizon_and_grid(lin_ctx):
    # alpha = -3/4, beta = 1/4; min(|gamma|, beta - gamma) = 1/2
    assert lin_ctx.alpha == -0.75 and lin_ctx.beta == 0.25
    assert auto_horizon(-0.5, 0.25, 1e-12) == pytest.approx(2 * math.log(1e12))
    assert lin_ctx.T >= auto_horizon(-0.5, 0.25, 1e-12)
    assert lin_ctx.h == pytest.approx(0.01)
    assert lin_ctx.gate.passed and lin_ctx.gate.M1 == 0.0


def test_context_argument_errors(saddle_split):
    f = linear_field()
    with pytest.raises(DomainError):
        make_context(f, saddle_split, 0.2, h=0.01)
    with pytest.raises(DomainError):
        make_context(f, saddle_split, -0.5, grid_n=8)
    with pytest.raises(DomainError):
        make_context(f, saddle_split, -0.5, grid_n=100, h=0.01)
    with pytest.raises(DomainError):
        make_context(f, saddle_split, -0.5, h=0.01, gate="lenient")


def test_untruncated_nonlinear_field_fails_the_gate(saddle_split):
    with pytest.raises(GateViolationError):
        make_context(quadratic_field(), saddle_split, -0.5, h=0.01)
    ctx = make_context(quadratic_field(), saddle_split, -0.5, h=0.01, gate="report")
    assert not ctx.gate.passed and ctx.gate.mode == "report"


def test_gamma_norm_weights():
    t = np.linspace(0, 2, 5)
    z = np.exp(-0.5 * t)[:, None]
    path = DiscretePath(t, z, np.zeros((5, 1)), -0.5)
    assert gamma_norm(path) == pytest.approx(1.0)
    path2 = DiscretePath(t, 2 * np.exp(-t)[:, None], np.zeros((5, 1)), -0.5)
    assert gamma_norm(path2) == pytest.approx(2.0)


def test_linear_fixed_point_is_exact(lin_ctx):
    fp = solve_fixed_point(lin_ctx, [0.3])
    np.testing.assert_allclose(fp.path.z[:, 0], 0.3 * np.exp(-lin_ctx.t), atol=1e-6)
    assert np.max(np.abs(fp.path.v)) == 0.0
    assert fp.growth_ratio <= fp.growth_bound
    T0 = apply_T(lin_ctx, zero_path(lin_ctx), [0.3])
    np.testing.assert_allclose(T0.z, fp.path.z, atol=1e-15)


def test_contraction_on_admissible_contexts(lin_ctx, canon_ctx):
    assert canon_ctx.gate.passed
    assert estimate_contraction(lin_ctx, trials=100) <= 0.5 + 1e-6
    assert estimate_contraction(canon_ctx, trials=100) <= 0.5 + 1e-6


def test_truncated_fixed_point_solves_the_ode(canon_ctx):
    xi = canon_ctx.field.xi
    fp = solve_fixed_point(canon_ctx, [0.5 * xi])
    assert fp.residual <= 1e-12
    assert ode_residual(canon_ctx, fp.path) < 1e-6
    # inside the plateau the graph is v = -z^2 / 3
    z0 = 0.5 * xi
    assert fp.v0[0] == pytest.approx(-z0 ** 2 / 3, rel=1e-3)


def test_variational_matches_finite_differences(canon_ctx):
    xi = canon_ctx.field.xi
    w = 0.4 * xi
    fp = solve_fixed_point(canon_ctx, [w])
    d = solve_variational(canon_ctx, fp, None, ([1.0], None))
    h = 1e-4 * xi
    vp = solve_fixed_point(canon_ctx, [w + h]).v0
    vm = solve_fixed_point(canon_ctx, [w - h]).v0
    assert d.v[0, 0] == pytest.approx((vp - vm)[0] / (2 * h), rel=1e-5)
