import numpy as np
import pytest

from stabman.errors import DegenerateWindowError, DomainError, IntegrationError
from stabman.field import polynomial_family
from stabman.flowverify import decay_exponent, graph_invariance_residual, integrate

from conftest import linear_field, term


def test_linear_flow_is_exact():
    tr = integrate(linear_field(), [0.3, 0.2], t_end=5.0, tol=1e-12)
    t = np.linspace(0, 5, 21)
    exact = np.column_stack([0.3 * np.exp(-t), 0.2 * np.exp(t)])
    np.testing.assert_allclose(tr(t), exact, rtol=1e-9)
    assert tr.t_end == 5.0


def test_blowup_is_reported():
    f = polynomial_family(1, 0, [term(0, (2,), 1.0)])  # x' = x^2 escapes at t = 1
    with pytest.raises(IntegrationError) as exc:
        integrate(f, [1.0], t_end=3.0)
    assert exc.value.details["escape_time"] <= 1.0


def test_t_end_must_be_positive():
    with pytest.raises(DomainError):
        integrate(linear_field(), [0.1, 0.0], t_end=0.0)


def test_decay_exponent():
    tr = integrate(linear_field(), [0.3, 0.0], t_end=10.0, tol=1e-12)
    assert decay_exponent(tr, (0.0, 8.0)) == pytest.approx(-1.0, abs=1e-6)
    with pytest.raises(DegenerateWindowError):
        decay_exponent(tr, (5.0, 20.0))
    eq = integrate(linear_field(), [0.0, 0.0], t_end=1.0)
    with pytest.raises(DegenerateWindowError):
        decay_exponent(eq)


def test_trajectory_csv(tmp_path):
    tr = integrate(linear_field(), [0.3, 0.2], t_end=1.0)
    tr.to_csv(tmp_path / "traj.csv")
    data = np.loadtxt(tmp_path / "traj.csv", delimiter=",", skiprows=1)
    assert data.shape[1] == 3
    assert (tmp_path / "traj.csv").read_text().startswith("t,x1,x2")


def test_graph_is_invariant(quad_gctx_rich):
    res = graph_invariance_residual(quad_gctx_rich, [0.05], horizon=10.0)
    assert res.residual <= 1e-7
    assert float(res) == res.residual


def test_off_graph_orbit_is_repelled(quad_gctx_rich):
    res = graph_invariance_residual(quad_gctx_rich, [0.05], horizon=5.0, offset=[1e-4])
    assert res.defects[-1] > 100 * res.defects[0]
