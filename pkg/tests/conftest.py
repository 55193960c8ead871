"""Shared fields and contexts for the test suite."""

import numpy as np
import pytest

from stabman.field import polynomial_family, polynomial_from_terms


def term(out, exps, coef):
    return {"out": out, "exps": list(exps), "coef": float(coef)}


def quadratic_field():
    """z' = -z, v' = v + z^2; stable manifold v = -z^2 / 3."""
    return polynomial_family(2, 0, [term(0, (1, 0), -1), term(1, (0, 1), 1), term(1, (2, 0), 1)])


def parametric_field():
    """z' = -z, v' = v + mu z; stable manifold v = -mu z / 2."""
    return polynomial_family(2, 1, [term(0, (1, 0, 0), -1), term(1, (0, 1, 0), 1),
                                    term(1, (1, 0, 1), 1)])


def linear_field():
    return polynomial_family(2, 0, [term(0, (1, 0), -1), term(1, (0, 1), 1)])


def cubic_field():
    """Quadratic nonlinearity with a small cubic part."""
    return polynomial_family(2, 0, [term(0, (1, 0), -1), term(1, (0, 1), 1), term(1, (2, 0), 1),
                                    term(0, (1, 1), 0.5), term(1, (3, 0), 0.1)])


def foliation_Y():
    """Y(x, y) = (-x, x^2); leaves y + x^2 / 2 = const."""
    return polynomial_from_terms([term(0, (1, 0), -1), term(1, (2, 0), 1)], 2, 2)


def sheared_Y():
    """Y(x, y) = (-x, -x y); leaves y exp(-x) = const, F_mu = span(1, mu)."""
    return polynomial_from_terms([term(0, (1, 0), -1), term(1, (1, 1), -1)], 2, 2)


def family_Y(a):
    """Y_a(x, y) = (-a x, x^2); chart (x, y + x^2 / (2a)), lambda = min(1, a)."""
    return polynomial_from_terms([term(0, (1, 0), -a), term(1, (2, 0), 1)], 2, 2)


Y_AXIS = np.array([[0.0], [1.0]])


@pytest.fixture(scope="session")
def quad_gctx():
    from stabman.graph import make_graph_context
    return make_graph_context(quadratic_field(), h=0.01)


@pytest.fixture(scope="session")
def quad_gctx_rich():
    from stabman.graph import make_graph_context
    return make_graph_context(quadratic_field(), h=0.01, extrapolate=True)


@pytest.fixture(scope="session")
def param_gctx():
    from stabman.graph import make_graph_context
    return make_graph_context(parametric_field(), h=0.01)


@pytest.fixture(scope="session")
def chart0():
    from stabman.foliation import build_chart
    return build_chart(foliation_Y(), Y_AXIS, [0.0, 0.0])


@pytest.fixture(scope="session")
def chart1():
    from stabman.foliation import build_chart
    return build_chart(foliation_Y(), Y_AXIS, [0.0, 0.1])


# one summary line per acceptance criterion, printed after the run
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
