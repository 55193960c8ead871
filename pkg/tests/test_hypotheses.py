import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from stabman.errors import DomainError, EmptySideError, NotPartiallyHyperbolicError
from stabman.hypotheses import (
    C_one,
    adapted_truncation_size,
    build_splitting,
    d_A_gamma,
    phi_bound_rhs,
    resolve_constants,
    smallness_thresholds,
    straightening_radius,
)
from stabman.spectral import analyze_matrix

SQ2 = math.sqrt(2.0)


@pytest.fixture
def saddle():
    sa = analyze_matrix(np.diag([-1.0, 1.0]))
    return sa, build_splitting(sa)


def test_saddle_splitting(saddle):
    sa, sp = saddle
    assert (sp.p, sp.q) == (1, 1)
    assert sp.M_AF == -1.0 and sp.m_AG == 1.0
    assert sp.g_A == 1.0
    assert sp.I_A == (-1.0, 0.0)
    assert sp.gamma_tilde == -0.5
    assert sp.c_FG == pytest.approx(SQ2)


def test_saddle_thresholds_hand_values(saddle):
    # n = 2, K = sqrt 2, g = 1, C1 = 16 sqrt 2, d(A, -1/2) = 1/2, M2 = 2, r = 1
    sa, sp = saddle
    thr = smallness_thresholds(sp, sa, -0.5, 2.0, 1.0)
    assert C_one(2) == pytest.approx(16 * SQ2, rel=1e-15)
    assert thr.d_Agamma == 0.5
    assert thr.hyp3_bound == pytest.approx(1 / 64, rel=1e-15)
    assert thr.prop_eps1_bound == pytest.approx(1 / 64, rel=1e-15)
    assert thr.xi_gamma == pytest.approx(1 / 128, rel=1e-14)
    assert thr.xi_tilde == pytest.approx(1 / 128, rel=1e-14)
    assert thr.eta_tilde == pytest.approx(1 / (2 * SQ2), rel=1e-14)
    assert thr.delta_tilde == pytest.approx(0.25, rel=1e-14)
    assert thr.R_mu0 == pytest.approx(0.125, rel=1e-14)
    assert thr.constants_used["delta_tilde"] == ("C2",)


def test_thresholds_scale_with_constants(saddle):
    sa, sp = saddle
    base = smallness_thresholds(sp, sa, -0.5, 2.0, 1.0)
    big = smallness_thresholds(sp, sa, -0.5, 2.0, 1.0, {"C2": 2.0, "c1": 4.0, "C3": 3.0})
    assert big.delta_tilde == pytest.approx(base.delta_tilde / 2)
    assert big.xi_tilde == pytest.approx(base.xi_tilde / 4)
    assert big.R_mu0 == pytest.approx(base.R_mu0 / 3)
    assert big.hyp3_bound == base.hyp3_bound


@pytest.mark.parametrize("kw", [{"gamma": 0.1}, {"gamma": -1.0}, {"M2_loc": 0.5}, {"r": 0.0}])
def test_threshold_domain_errors(saddle, kw):
    sa, sp = saddle
    args = {"gamma": -0.5, "M2_loc": 2.0, "r": 1.0}
    args.update(kw)
    with pytest.raises(DomainError):
        smallness_thresholds(sp, sa, **args)


def test_splitting_errors():
    with pytest.raises(EmptySideError):
        build_splitting(analyze_matrix(np.diag([-1.0, -2.0])), cut=0.0)
    with pytest.raises(DomainError):
        build_splitting(analyze_matrix(np.diag([-1.0, 1.0])), cut=1.0)
    with pytest.raises(NotPartiallyHyperbolicError):
        build_splitting(analyze_matrix(np.diag([1.0, 2.0])), cut=1.5)


def test_unknown_constant_is_rejected():
    with pytest.raises(DomainError):
        resolve_constants({"nope": 1.0})


def test_phi_bound_rhs_forms(saddle):
    sa, sp = saddle
    norms = {2: 2.0, 3: 1.0}
    assert phi_bound_rhs(sp, sa, norms, 0.1, 0.0, 0) == pytest.approx(2 * 2 * 0.01)
    assert phi_bound_rhs(sp, sa, norms, 0.1, 0.2, 1, "z") == pytest.approx(2 * 2 * 0.3)
    assert phi_bound_rhs(sp, sa, norms, 0.1, 0.2, 1, "mu") == pytest.approx(SQ2 * 2 * 0.1)
    # k = 2: (g^2 K^2 max(gK M2, 1/r) M3)^3 = (2 * 2 sqrt 2 * 1)^3
    assert phi_bound_rhs(sp, sa, norms, 0.1, 0.0, 2, r=1.0) == pytest.approx((4 * SQ2) ** 3)


def test_adapted_truncation_is_linear_in_the_norms(saddle):
    sa, sp = saddle
    a = adapted_truncation_size(sp, sa, 0.1, 0.0)
    b = adapted_truncation_size(sp, sa, 0.2, 0.0)
    c = adapted_truncation_size(sp, sa, 0.0, 0.1)
    assert b == pytest.approx(2 * a)
    assert c == pytest.approx(4 * SQ2 * 0.1)
    assert a > c


def test_straightening_radius_formula():
    assert straightening_radius(1.0, SQ2, SQ2, 2.0, 1.0) == pytest.approx(0.125)
    assert straightening_radius(1.0, SQ2, SQ2, 2.0, 0.1) == pytest.approx(0.1 / (2 * SQ2))


@settings(max_examples=80, deadline=None)
@given(st.lists(st.floats(-4, -0.05), min_size=1, max_size=3),
       st.lists(st.floats(-0.04, 4), min_size=1, max_size=3),
       st.floats(0.01, 0.99))
def test_d_A_gamma_properties(neg, pos, frac):
    vals = sorted(neg) + sorted(pos)
    assume(min(pos) - max(neg) > 1e-3)
    assume(len(set(np.round(vals, 6))) == len(vals))
    A = np.diag(vals)
    sa = analyze_matrix(A)
    cut = 0.5 * (max(neg) + min(pos))
    try:
        sp = build_splitting(sa, cut)
    except (NotPartiallyHyperbolicError, DomainError):
        return
    n = sa.n
    lo, hi = sp.I_A
    gt = sp.gamma_tilde
    # lower bound at the midpoint always holds
    assert d_A_gamma(sa, gt) >= 1.0 / (2 ** (n - 1) * sp.g_A) * (1 - 1e-12)
    # the midpoint maximizes d(A, .) over I_A when G carries no positive real part
    if sp.m_AG <= 0:
        g = lo + frac * (hi - lo)
        assert d_A_gamma(sa, g) <= d_A_gamma(sa, gt) * (1 + 1e-12)


@settings(max_examples=40, deadline=None)
@given(st.floats(1.0, 50.0), st.floats(1.0, 50.0), st.floats(0.05, 5.0))
def test_thresholds_decrease_with_M2(m_a, m_b, r):
    sa = analyze_matrix(np.diag([-1.0, 1.0]))
    sp = build_splitting(sa)
    lo, hi = sorted([m_a, m_b])
    t_lo = smallness_thresholds(sp, sa, -0.5, lo, r)
    t_hi = smallness_thresholds(sp, sa, -0.5, hi, r)
    for name in ("xi_gamma", "xi_tilde", "eta_tilde", "delta_tilde", "R_mu0"):
        assert getattr(t_hi, name) <= getattr(t_lo, name) * (1 + 1e-12)
    assert t_lo.xi_tilde <= r / math.sqrt(2) and t_lo.eta_tilde <= r
