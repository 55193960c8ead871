"""Weighted path space, the integral operator T and its Picard fixed point.

Paths (z, v): [0, T] -> R^p x R^q live on a uniform grid.  Integrals use the
composite trapezoid rule, evaluated through the one-step recurrences

    Z_{i+1} = E1 Z_i + h/2 (E1 f_i + f_{i+1}),        E1 = exp(h A1),
    J_i     = E2 J_{i+1} + h/2 (g_i + E2 g_{i+1}),    E2 = exp(-h A2),

with Z_0 = omega, J_N = 0 and v = -J, so every application of the operator
costs O(N).  The tail of the backward integral beyond T is dropped.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field, replace
import math
from typing import Sequence

import numpy as np
from scipy.signal import lfilter

from .errors import ConvergenceError, DomainError, GateViolationError
from .field import FieldFamily, ball_points
from .hypotheses import C_one, Splitting, d_A_gamma
from .spectral import SpectralAnalysis, _pow0, analyze_matrix, matrix_exponential


@dataclass(frozen=True, eq=False)
class DiscretePath:
    """A sampled path (z, v) on a uniform grid.

    Attributes
    ----------
    t : ndarray, shape (N + 1,)
    z : ndarray, shape (N + 1, p)
    v : ndarray, shape (N + 1, q)
    gamma : float
    """

    t: np.ndarray
    z: np.ndarray
    v: np.ndarray
    gamma: float

    @property
    def T(self) -> float:
        return float(self.t[-1])

    @property
    def N(self) -> int:
        return len(self.t) - 1

    @property
    def h(self) -> float:
        return float(self.t[1] - self.t[0])

    def values(self) -> np.ndarray:
        return np.concatenate([self.z, self.v], axis=-1)

    def to_csv(self, dest) -> None:
        """Write columns ``t, z1..zp, v1..vq``."""
        p, q = self.z.shape[-1], self.v.shape[-1]
        header = ",".join(["t"] + [f"z{i + 1}" for i in range(p)] + [f"v{i + 1}" for i in range(q)])
        data = np.column_stack([self.t, self.z, self.v])
        np.savetxt(dest, data, delimiter=",", header=header, comments="", fmt="%.17g")


@dataclass(frozen=True)
class GateReport:
    """Outcome of the smallness check on the first derivative."""

    M1: float
    bound: float
    margin: float
    passed: bool
    mode: str
    sampled: bool

    def as_dict(self) -> dict:
        return {"M1": self.M1, "bound": self.bound, "margin": self.margin,
                "passed": self.passed, "mode": self.mode, "sampled": self.sampled}


@dataclass(frozen=True, eq=False)
class OperatorContext:
    """Everything needed to apply the operator at a fixed decay rate.

    ``L`` maps R^n to F x G coordinates, ``L_inv = [B_F B_G]`` maps back.
    ``A1``, ``A2`` are the diagonal blocks of ``L A L_inv``.
    """

    field: FieldFamily
    split: Splitting
    sa: SpectralAnalysis
    gamma: float
    alpha: float
    beta: float
    L: np.ndarray
    L_inv: np.ndarray
    A1: np.ndarray
    A2: np.ndarray
    t: np.ndarray
    h: float
    T: float
    tail_tol: float
    E1: np.ndarray
    E2: np.ndarray
    gate: GateReport
    horizon_rule: str = "auto"

    @property
    def p(self) -> int:
        return self.A1.shape[0]

    @property
    def q(self) -> int:
        return self.A2.shape[0]

    @property
    def s(self) -> int:
        return self.field.s

    @property
    def N(self) -> int:
        return len(self.t) - 1

    @property
    def weight(self) -> np.ndarray:
        return np.exp(-self.gamma * self.t)

    def with_field(self, f: FieldFamily) -> "OperatorContext":
        return replace(self, field=f)

    def refined(self, factor: int = 2) -> "OperatorContext":
        """Same context on a grid with ``factor`` times more intervals."""
        N = self.N * int(factor)
        t = np.linspace(0.0, self.T, N + 1)
        h = self.T / N
        return replace(self, t=t, h=h, E1=matrix_exponential(self.A1, h),
                       E2=matrix_exponential(self.A2, -h))

    def describe(self) -> dict:
        return {
            "gamma": self.gamma, "alpha": self.alpha, "beta": self.beta, "T": self.T,
            "N": self.N, "h": self.h, "tail_tol": self.tail_tol, "horizon_rule": self.horizon_rule,
            "gate": self.gate.as_dict(),
        }


def auto_horizon(gamma: float, beta: float, tail_tol: float) -> float:
    """T = ln(1 / tail_tol) / min(|gamma|, beta - gamma)."""
    return math.log(1.0 / tail_tol) / min(abs(gamma), beta - gamma)


def global_M1(f: FieldFamily, budget: int = 4096, seed: int = 0) -> tuple[float, bool]:
    """Sup over all (x, mu) of ``||d_x X - A||``.

    Exact (0 or inf) for polynomial and translated families; sampled over the
    support ball for truncated ones.  Returns ``(value, sampled)``.
    """
    if f.is_linear():
        return 0.0, False
    if f.kind != "truncated":
        return math.inf, False
    R = f.support_radius
    W = ball_points(f.N, R, budget, seed)
    vals = 0.0
    for a in range(0, len(W), 4096):
        Wc = W[a:a + 4096]
        J = f.tensor(Wc[:, :f.n], Wc[:, f.n:] if f.s else None, 1)[:, :, :f.n] - f.A
        vals = max(vals, float(np.linalg.norm(J, ord=2, axis=(1, 2)).max()))
    return vals, True


def gate_bound(sa: SpectralAnalysis, gamma: float) -> float:
    """Admissibility bound d(A, gamma) / (C1 K_A) on the first derivative."""
    return d_A_gamma(sa, gamma) / (C_one(sa.n) * sa.K_A)


def make_context(f: FieldFamily, split: Splitting, gamma: float, grid_n: int | None = None,
                 T="auto", *, h: float | None = None, tail_tol: float = 1e-12,
                 gate: str = "strict", sa: SpectralAnalysis | None = None,
                 gate_budget: int = 4096, seed: int = 0) -> OperatorContext:
    """Build the operator context at decay rate ``gamma``.

    Parameters
    ----------
    f : FieldFamily
        Field whose linear part at the origin is ``split.A``.
    split : Splitting
    gamma : float
        Decay rate in I_A.
    grid_n : int, optional
        Number of grid intervals (>= 16).  Exactly one of ``grid_n`` and ``h``
        must be given; with ``h`` the horizon is rounded up to a multiple of h.
    T : float or 'auto'
        Horizon; 'auto' uses ``ln(1/tail_tol) / min(|gamma|, beta - gamma)``.
    gate : {'strict', 'report'}
        With 'strict' a violated smallness condition raises
        :class:`GateViolationError`; with 'report' it is only recorded.

    Returns
    -------
    OperatorContext
    """
    gamma = float(gamma)
    if not split.contains(gamma):
        raise DomainError("gamma is outside I_A", gamma=gamma, I_A=list(split.I_A))
    if not np.allclose(f.A, split.A, rtol=1e-12, atol=1e-12):
        raise DomainError("field linear part does not match the splitting matrix")
    if gate not in ("strict", "report"):
        raise DomainError("gate must be 'strict' or 'report'", gate=gate)
    if sa is None:
        sa = analyze_matrix(split.A)
    alpha = 0.5 * (gamma + split.M_AF)
    beta = 0.5 * (gamma + split.m_AG)

    rule = "auto" if (isinstance(T, str) and T == "auto") else "fixed"
    Tval = auto_horizon(gamma, beta, tail_tol) if rule == "auto" else float(T)
    if not Tval > 0:
        raise DomainError("horizon must be positive", T=Tval)
    if (grid_n is None) == (h is None):
        raise DomainError("give exactly one of grid_n and h")
    if h is not None:
        grid_n = int(math.ceil(Tval / float(h) - 1e-9))
        Tval = grid_n * float(h)
    grid_n = int(grid_n)
    if grid_n < 16:
        raise DomainError("grid_n must be >= 16", grid_n=grid_n)
    t = np.linspace(0.0, Tval, grid_n + 1)
    hh = Tval / grid_n

    L, L_inv = split.conjugation()
    nL = float(np.linalg.norm(L, 2))
    nLi = float(np.linalg.norm(L_inv, 2))
    if nL > split.c_FG * (1 + 1e-10) or nLi > math.sqrt(2.0) * (1 + 1e-10):
        raise DomainError("conjugation norms exceed their bounds", norm_L=nL, norm_L_inv=nLi)

    M1, sampled = global_M1(f, budget=gate_budget, seed=seed)
    bound = gate_bound(sa, gamma)
    passed = M1 <= bound
    report = GateReport(M1=M1, bound=bound, margin=bound - M1, passed=bool(passed), mode=gate,
                        sampled=sampled)
    if gate == "strict" and not passed:
        raise GateViolationError(
            "first-derivative smallness condition violated",
            margin=bound - M1 if math.isfinite(M1) else -math.inf, M1=M1, bound=bound, gamma=gamma,
        )
    return OperatorContext(
        field=f, split=split, sa=sa, gamma=gamma, alpha=alpha, beta=beta, L=L, L_inv=L_inv,
        A1=split.A1, A2=split.A2, t=t, h=hh, T=Tval, tail_tol=float(tail_tol),
        E1=matrix_exponential(split.A1, hh), E2=matrix_exponential(split.A2, -hh),
        gate=report, horizon_rule=rule,
    )


# --------------------------------------------------------------------------
# operator pieces (batched over leading axis)


def _forward(E: np.ndarray, C: np.ndarray, y0: np.ndarray) -> np.ndarray:
    # y_{i+1} = E y_i + C_i; C (B, M-1, p), y0 (B, p) -> (B, M, p)
    B, M1, p = C.shape
    if p == 1:
        x = np.concatenate([y0[:, None, :], C], axis=1)
        return lfilter([1.0], [1.0, -E[0, 0]], x, axis=1)
    Y = np.empty((B, M1 + 1, p))
    Y[:, 0] = y0
    Et = E.T
    for i in range(M1):
        Y[:, i + 1] = Y[:, i] @ Et + C[:, i]
    return Y


def _backward(E: np.ndarray, C: np.ndarray) -> np.ndarray:
    # J_N = 0, J_i = E J_{i+1} + C_i; C (B, M-1, q) -> (B, M, q)
    B, M1, q = C.shape
    if q == 1:
        x = np.concatenate([np.zeros((B, 1, 1)), C[:, ::-1]], axis=1)
        return lfilter([1.0], [1.0, -E[0, 0]], x, axis=1)[:, ::-1]
    J = np.empty((B, M1 + 1, q))
    J[:, -1] = 0.0
    Et = E.T
    for i in range(M1 - 1, -1, -1):
        J[:, i] = J[:, i + 1] @ Et + C[:, i]
    return J


def _convolve(ctx: OperatorContext, omega: np.ndarray, F: np.ndarray, G: np.ndarray):
    # affine part plus trapezoid integrals, all batched
    hh = 0.5 * ctx.h
    Cz = hh * (F[:, :-1] @ ctx.E1.T + F[:, 1:])
    Z = _forward(ctx.E1, Cz, omega)
    Cv = hh * (G[:, :-1] + G[:, 1:] @ ctx.E2.T)
    V = -_backward(ctx.E2, Cv)
    return Z, V


def _to_x(ctx: OperatorContext, Z: np.ndarray, V: np.ndarray) -> np.ndarray:
    return Z @ ctx.split.F_basis.T + V @ ctx.split.G_basis.T


def _nonlinearity(ctx: OperatorContext, f: FieldFamily, Z, V, MU):
    # (f, g) = L X(L^-1 (z, v), mu) - (A1 z, A2 v)
    x = _to_x(ctx, Z, V)
    mu = None
    if f.s:
        mu = np.broadcast_to(MU[:, None, :], x.shape[:-1] + (f.s,))
    Xt = f.evaluate(x, mu) @ ctx.L.T
    p = ctx.p
    return Xt[..., :p] - Z @ ctx.A1.T, Xt[..., p:] - V @ ctx.A2.T


def _apply(ctx, f, Z, V, omega, MU):
    F, G = _nonlinearity(ctx, f, Z, V, MU)
    return _convolve(ctx, omega, F, G)


def _gnorm(ctx: OperatorContext, Z: np.ndarray, V: np.ndarray) -> np.ndarray:
    # gamma-norm over the last-but-one (time) axis
    nz = np.linalg.norm(Z, axis=-1) if Z.shape[-1] else np.zeros(Z.shape[:-1])
    nv = np.linalg.norm(V, axis=-1) if V.shape[-1] else np.zeros(V.shape[:-1])
    return np.max(np.maximum(nz, nv) * ctx.weight, axis=-1)


def _check_vec(v, dim: int, name: str) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.ndim == 0:
        v = v.reshape(1)
    if v.shape[-1:] != (dim,) and not (dim == 0 and v.size == 0):
        raise DomainError(f"{name} has the wrong dimension", expected=dim, shape=list(v.shape))
    return v.reshape(v.shape[:-1] + (dim,))


def _batch_args(ctx, omega, mu):
    om = _check_vec(omega, ctx.p, "omega")
    if om.ndim == 1:
        om = om[None]
    s = ctx.s
    if s == 0:
        MU = np.zeros((om.shape[0], 0))
    else:
        if mu is None:
            raise DomainError("mu is required for this field")
        MU = _check_vec(mu, s, "mu")
        if MU.ndim == 1:
            MU = np.broadcast_to(MU, (om.shape[0], s))
    return om, np.ascontiguousarray(MU)


# --------------------------------------------------------------------------
# public operations


def gamma_norm(path: DiscretePath) -> float:
    """max over nodes of max(||z(t)||, ||v(t)||) exp(-gamma t)."""
    if len(path.t) == 0:
        raise DomainError("empty path")
    nz = np.linalg.norm(path.z, axis=-1) if path.z.shape[-1] else np.zeros(len(path.t))
    nv = np.linalg.norm(path.v, axis=-1) if path.v.shape[-1] else np.zeros(len(path.t))
    return float(np.max(np.maximum(nz, nv) * np.exp(-path.gamma * path.t)))


def zero_path(ctx: OperatorContext) -> DiscretePath:
    M = len(ctx.t)
    return DiscretePath(ctx.t, np.zeros((M, ctx.p)), np.zeros((M, ctx.q)), ctx.gamma)


def apply_T(ctx: OperatorContext, path: DiscretePath, omega, mu=None) -> DiscretePath:
    """One application of the operator to a path on the context grid."""
    if path.z.shape[0] != len(ctx.t):
        raise DomainError("path is not on the context grid")
    om, MU = _batch_args(ctx, omega, mu)
    Z, V = _apply(ctx, ctx.field, path.z[None], path.v[None], om, MU)
    return DiscretePath(ctx.t, Z[0], V[0], ctx.gamma)


@dataclass(frozen=True, eq=False)
class FixedPoint:
    """Converged fixed point of the operator.

    Attributes
    ----------
    path : DiscretePath
    iterations : int
    residual : float
        gamma-norm of the last Picard increment.
    history : tuple of float
        gamma-norms of all increments.
    growth_ratio : float
        ``sup_t ||path(t)|| / ||path(0)||``.
    growth_bound : float
        ``2 sqrt(2) K'(A1) / d(A, gamma)^((p-1)/(n-1))``.
    """

    path: DiscretePath
    iterations: int
    residual: float
    history: tuple
    growth_ratio: float
    growth_bound: float

    @property
    def v0(self) -> np.ndarray:
        return self.path.v[0]


@dataclass(frozen=True, eq=False)
class BatchFixedPoint:
    Z: np.ndarray
    V: np.ndarray
    MU: np.ndarray
    iterations: np.ndarray
    residual: np.ndarray


def growth_bound(ctx: OperatorContext) -> float:
    sa1 = analyze_matrix(ctx.A1)
    n, p = ctx.sa.n, ctx.p
    d = d_A_gamma(ctx.sa, ctx.gamma)
    return 2.0 * math.sqrt(2.0) * sa1.Kp_A / d ** ((p - 1) / (n - 1))


def solve_fixed_point_batch(ctx: OperatorContext, omega, mu=None, tol: float = 1e-12,
                            max_iter: int = 200, field: FieldFamily | None = None,
                            seed_paths: tuple | None = None) -> BatchFixedPoint:
    """Picard iteration for a batch of (omega, mu).

    A truncated ``field`` may carry one truncation size per batch member, as
    an array of shape (B, 1).  Each batch member stops as soon as its own increment is <= ``tol``, so
    results do not depend on the batch composition.  ``seed_paths`` (Z, V)
    replaces the affine seed (warm start).
    """
    f = ctx.field if field is None else field
    om, MU = _batch_args(ctx, omega, mu)
    B, M = om.shape[0], len(ctx.t)
    if seed_paths is None:
        Z, V = _convolve(ctx, om, np.zeros((B, M, ctx.p)), np.zeros((B, M, ctx.q)))
    else:
        Z, V = (np.array(a, dtype=float) for a in seed_paths)
    iters = np.zeros(B, dtype=int)
    res = np.full(B, np.inf)
    active = np.arange(B)
    fB = f
    xi_full = getattr(f, "xi", None)
    per_point = xi_full is not None and np.ndim(xi_full) > 0
    for it in range(1, max_iter + 1):
        if per_point:
            fB = replace_xi(f, np.asarray(xi_full)[active])
        Zn, Vn = _apply(ctx, fB, Z[active], V[active], om[active], MU[active])
        diff = _gnorm(ctx, Zn - Z[active], Vn - V[active])
        Z[active], V[active] = Zn, Vn
        iters[active] = it
        res[active] = diff
        if not np.all(np.isfinite(diff)):
            raise ConvergenceError("Picard iteration diverged", iteration=it)
        active = active[diff > tol]
        if active.size == 0:
            return BatchFixedPoint(Z, V, MU, iters, res)
    raise ConvergenceError(
        "Picard iteration did not converge", max_iter=max_iter, tol=tol,
        worst_residual=float(res.max()), unconverged=int(active.size),
    )


def replace_xi(f, xi):
    """Copy of a truncated family with a different truncation size."""
    from .bump import TruncatedFamily

    return TruncatedFamily(f.base, xi, f.r)


def solve_fixed_point(ctx: OperatorContext, omega, mu=None, tol: float = 1e-12,
                      max_iter: int = 200, field: FieldFamily | None = None) -> FixedPoint:
    """Fixed point (z*, v*) of the operator for one (omega, mu).

    Starts from the affine path and iterates until the gamma-norm increment
    is <= ``tol``.

    Raises
    ------
    ConvergenceError
        If ``max_iter`` iterations do not suffice.
    """
    f = ctx.field if field is None else field
    om, MU = _batch_args(ctx, omega, mu)
    if om.shape[0] != 1:
        raise DomainError("solve_fixed_point takes a single omega; use solve_fixed_point_batch")
    B, M = 1, len(ctx.t)
    Z, V = _convolve(ctx, om, np.zeros((B, M, ctx.p)), np.zeros((B, M, ctx.q)))
    hist = []
    for it in range(1, max_iter + 1):
        Zn, Vn = _apply(ctx, f, Z, V, om, MU)
        diff = float(_gnorm(ctx, Zn - Z, Vn - V)[0])
        hist.append(diff)
        Z, V = Zn, Vn
        if not math.isfinite(diff):
            raise ConvergenceError("Picard iteration diverged", iteration=it)
        if diff <= tol:
            break
    else:
        raise ConvergenceError("Picard iteration did not converge", max_iter=max_iter, tol=tol,
                               residual=hist[-1])
    path = DiscretePath(ctx.t, Z[0], V[0], ctx.gamma)
    norms = np.linalg.norm(path.values(), axis=-1)
    ratio = float(norms.max() / norms[0]) if norms[0] > 0 else 1.0
    return FixedPoint(path=path, iterations=len(hist), residual=hist[-1], history=tuple(hist),
                      growth_ratio=ratio, growth_bound=growth_bound(ctx))


def _linearization(ctx: OperatorContext, f: FieldFamily, Z, V, MU):
    # D_(z,v)(f,g) (B, M, n, n) and D_mu(f,g) (B, M, n, s) along base paths
    x = _to_x(ctx, Z, V)
    mu = None
    if f.s:
        mu = np.broadcast_to(MU[:, None, :], x.shape[:-1] + (f.s,))
    J = f.tensor(x, mu, 1)
    n = ctx.p + ctx.q
    Atil = np.zeros((n, n))
    Atil[:ctx.p, :ctx.p] = ctx.A1
    Atil[ctx.p:, ctx.p:] = ctx.A2
    Dzv = ctx.L @ J[..., :n] @ ctx.L_inv - Atil
    Dmu = ctx.L @ J[..., n:]
    return Dzv, Dmu


def solve_variational_batch(ctx: OperatorContext, Z, V, MU, d_omega, d_mu, tol: float = 1e-12,
                            max_iter: int = 200, field: FieldFamily | None = None):
    """Directional derivatives of the fixed point for a batch of bases.

    ``Z, V`` have shape (B, M, .), ``d_omega`` (B, D, p) and ``d_mu`` (B, D, s).
    Returns ``(Z1, V1)`` of shape (B, D, M, .).
    """
    f = ctx.field if field is None else field
    Dzv, Dmu = _linearization(ctx, f, Z, V, MU)
    B, D = d_omega.shape[:2]
    M, p, q = len(ctx.t), ctx.p, ctx.q
    src_mu = np.einsum("bmij,bdj->bdmi", Dmu, d_mu) if ctx.s else np.zeros((B, D, M, p + q))
    om = d_omega.reshape(B * D, p)
    Y = np.zeros((B, D, M, p + q))
    Z1, V1 = _convolve(ctx, om, np.zeros((B * D, M, p)), np.zeros((B * D, M, q)))
    Y = np.concatenate([Z1, V1], axis=-1).reshape(B, D, M, p + q)
    for it in range(1, max_iter + 1):
        S = np.einsum("bmij,bdmj->bdmi", Dzv, Y) + src_mu
        S = S.reshape(B * D, M, p + q)
        Zn, Vn = _convolve(ctx, om, S[..., :p], S[..., p:])
        Yn = np.concatenate([Zn, Vn], axis=-1).reshape(B, D, M, p + q)
        diff = float(np.max(_gnorm(ctx, Yn[..., :p] - Y[..., :p], Yn[..., p:] - Y[..., p:])))
        Y = Yn
        if not math.isfinite(diff):
            raise ConvergenceError("variational iteration diverged", iteration=it)
        if diff <= tol:
            return Y[..., :p], Y[..., p:]
    raise ConvergenceError("variational iteration did not converge", max_iter=max_iter, tol=tol,
                           residual=diff)


def solve_variational(ctx: OperatorContext, base, mu, direction, tol: float = 1e-12,
                      max_iter: int = 200, field: FieldFamily | None = None) -> DiscretePath:
    """Derivative of the fixed point along ``direction = (d_omega, d_mu)``.

    Parameters
    ----------
    base : FixedPoint or DiscretePath
        Converged fixed point at (omega, mu).
    mu : array_like or None
    direction : tuple
        ``(d_omega, d_mu)``; ``d_mu`` may be None when s = 0.
    """
    path = base.path if isinstance(base, FixedPoint) else base
    d_om, d_mu = direction
    d_om = _check_vec(d_om, ctx.p, "d_omega").reshape(1, 1, ctx.p)
    if ctx.s:
        d_mu = _check_vec(np.zeros(ctx.s) if d_mu is None else d_mu, ctx.s, "d_mu").reshape(1, 1, ctx.s)
        MU = _check_vec(mu, ctx.s, "mu").reshape(1, ctx.s)
    else:
        d_mu = np.zeros((1, 1, 0))
        MU = np.zeros((1, 0))
    Z1, V1 = solve_variational_batch(ctx, path.z[None], path.v[None], MU, d_om, d_mu, tol,
                                     max_iter, field)
    return DiscretePath(ctx.t, Z1[0, 0], V1[0, 0], ctx.gamma)


@dataclass(frozen=True)
class ContractionEstimate:
    max_ratio: float
    ratios: np.ndarray
    trials: int

    def __float__(self) -> float:
        return self.max_ratio


def estimate_contraction_details(ctx: OperatorContext, trials: int = 200, seed: int = 0,
                                 mu_radius: float | None = None,
                                 field: FieldFamily | None = None) -> ContractionEstimate:
    """Empirical Lipschitz ratios of the operator on random path pairs.

    Paths are ``exp(gamma t) w(t)`` with nodal values ``w`` drawn in a ball
    of radius ``a`` (so their gamma-norm is at most ``a <= 1``); the
    amplitude ``a`` is log-uniform on [1e-4, 1] so that small paths probe the
    nonlinear core of truncated fields.  Half of the pairs are independent,
    half are small perturbations of one another.
    """
    f = ctx.field if field is None else field
    rng = np.random.default_rng(seed)
    B, M, p, q, s = int(trials), len(ctx.t), ctx.p, ctx.q, ctx.s
    n = p + q
    amp = 10.0 ** rng.uniform(-4.0, 0.0, size=B)

    def rand_paths():
        W = rng.standard_normal((B, M, n))
        W /= np.maximum(np.linalg.norm(W, axis=-1, keepdims=True), 1e-300)
        W *= rng.uniform(0.0, 1.0, size=(B, M, 1)) ** (1.0 / n)
        return W * (amp[:, None, None] * np.exp(ctx.gamma * ctx.t)[None, :, None])

    U1 = rand_paths()
    U2 = rand_paths()
    local = np.arange(B) % 2 == 1
    U2[local] = U1[local] + 1e-3 * (U2[local] - U1[local])
    # keep both within the unit gamma-ball after splitting z and v
    for U in (U1, U2):
        g = _gnorm(ctx, U[..., :p], U[..., p:])
        U /= np.maximum(g, 1.0)[:, None, None]
    om = rng.standard_normal((B, p)) * amp[:, None]
    if s:
        rad = amp if mu_radius is None else np.full(B, float(mu_radius))
        MU = rng.standard_normal((B, s))
        MU *= (rad / np.maximum(np.linalg.norm(MU, axis=1), 1e-300))[:, None]
        MU *= rng.uniform(0, 1, size=(B, 1))
    else:
        MU = np.zeros((B, 0))
    Z1, V1 = _apply(ctx, f, U1[..., :p], U1[..., p:], om, MU)
    Z2, V2 = _apply(ctx, f, U2[..., :p], U2[..., p:], om, MU)
    num = _gnorm(ctx, Z1 - Z2, V1 - V2)
    den = _gnorm(ctx, U1[..., :p] - U2[..., :p], U1[..., p:] - U2[..., p:])
    ratios = np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)
    return ContractionEstimate(float(ratios.max(initial=0.0)), ratios, B)


def estimate_contraction(ctx: OperatorContext, trials: int = 200, seed: int = 0,
                         mu_radius: float | None = None, field: FieldFamily | None = None) -> float:
    """Max over random pairs of ``||T u1 - T u2||_gamma / ||u1 - u2||_gamma``."""
    return estimate_contraction_details(ctx, trials, seed, mu_radius, field).max_ratio


def ode_residual(ctx: OperatorContext, path: DiscretePath, mu=None) -> float:
    """Max node residual of the ODE along a path, by central differences."""
    _, MU = _batch_args(ctx, np.zeros(ctx.p), mu)
    F, G = _nonlinearity(ctx, ctx.field, path.z[None], path.v[None], MU)
    rhs_z = path.z @ ctx.A1.T + F[0]
    rhs_v = path.v @ ctx.A2.T + G[0]
    dz = (path.z[2:] - path.z[:-2]) / (2 * ctx.h)
    dv = (path.v[2:] - path.v[:-2]) / (2 * ctx.h)
    return float(max(np.abs(dz - rhs_z[1:-1]).max(), np.abs(dv - rhs_v[1:-1]).max()))
