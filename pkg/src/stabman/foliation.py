"""Charts straightening the stable foliation of a field vanishing on a subspace.

Let Y vanish on a linear subspace G and let mu0 be a point of G where
A = DY(mu0) splits as F + G with the F-block contracting.  The translated
family X(x, mu) = Y(mu0 + mu + x) has the origin as a partially hyperbolic
singularity for every mu in G, so its local stable manifold over F is a
graph v = phi(z, mu).  The map

    psi(z, mu) = (z, mu + phi(z, mu))

sends the affine slice mu + F onto the stable leaf of mu0 + mu.  The chart
``xi`` is the inverse of ``mu0 + L psi L^-1`` with L(z, mu) = z + mu; it is
evaluated by Newton iteration on the G-component.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
import math
from typing import Callable, Mapping

import numpy as np

from .errors import (
    ConvergenceError,
    DegenerateWindowError,
    DomainError,
    EmptySideError,
    NotContractingError,
    SpectralError,
)
from .field import (
    FieldFamily,
    NormTable,
    Polynomial,
    PolynomialFamily,
    TranslatedFamily,
    sampled_norms,
    translated_family,
)
from .flowverify import decay_exponent, integrate
from .graph import GraphContext, jacobian_batch, make_graph_context, phi_batch
from .hypotheses import resolve_constants, splitting_from_bases, straightening_radius
from .spectral import SpectralAnalysis, analyze_matrix, canonical_basis

DEFAULT_CHART_CONFIG = {
    "h": 0.02,
    "tail_tol": 1e-12,
    "picard_tol": 1e-13,
    "truncation": "adapted",
    "extrapolate": True,
    "norm_budget": 1024,
    "seed": 0,
    "cluster_tol": 1e-6,
    "newton_tol": 1e-12,
    "newton_max_iter": 50,
    "constants": None,
}


def _poly_of(Y) -> Polynomial:
    if isinstance(Y, Polynomial):
        return Y
    if isinstance(Y, PolynomialFamily):
        if Y.s:
            raise DomainError("Y must not carry parameters")
        return Y.poly
    if isinstance(Y, TranslatedFamily):
        return Y.Y
    raise DomainError("Y must be a polynomial field on R^n")


@dataclass(frozen=True, eq=False)
class Chart:
    """Straightening chart around a point ``mu0`` of the zero set G.

    Attributes
    ----------
    Y : Polynomial
        The field on R^n.
    mu0 : ndarray, shape (n,)
    F_basis, G_basis : ndarray
        Orthonormal bases of F_{mu0} (the contracting invariant subspace of
        DY(mu0)) and of G.
    M_F : float
        Largest real part of the spectrum of DY(mu0) on F_{mu0}.
    gamma : float
        ``-|M_F| / 2``.
    lam : float
        ``min(1, |M_F|)^(n-1)``.
    R : float
        Radius of the ball around ``mu0`` where both the chart and its
        inverse are defined.
    graph : GraphContext
        Graph solver for X(x, mu) = Y(mu0 + B_G mu + x), run with radius r / 2.
    norms_Y : NormTable
        Sampled derivative norms of Y on the r-ball around ``mu0``.
    """

    Y: Polynomial
    mu0: np.ndarray
    r: float
    F_basis: np.ndarray
    G_basis: np.ndarray
    M_F: float
    gamma: float
    lam: float
    R: float
    c_FG: float
    K_A: float
    C3: float
    graph: GraphContext
    norms_Y: NormTable
    sa: SpectralAnalysis
    newton_tol: float = 1e-12
    newton_max_iter: int = 50
    config: dict = dc_field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.mu0.shape[0]

    @property
    def p(self) -> int:
        return self.F_basis.shape[1]

    @property
    def q(self) -> int:
        return self.G_basis.shape[1]

    @property
    def L(self) -> np.ndarray:
        """Canonical identification (z, mu) -> B_F z + B_G mu, as a matrix."""
        return np.hstack([self.F_basis, self.G_basis])

    @property
    def L_inv(self) -> np.ndarray:
        return np.linalg.inv(self.L)

    def coords(self, X) -> tuple[np.ndarray, np.ndarray]:
        """(F, G)-coordinates of ``X - mu0`` for a batch of points."""
        W = (np.asarray(X, dtype=float).reshape(-1, self.n) - self.mu0) @ self.L_inv.T
        return W[:, :self.p], W[:, self.p:]

    def point(self, Z, M) -> np.ndarray:
        return self.mu0 + np.asarray(Z) @ self.F_basis.T + np.asarray(M) @ self.G_basis.T

    def psi(self, Z, M) -> tuple[np.ndarray, np.ndarray]:
        """psi(z, mu) = (z, mu + phi(z, mu)) in coordinates."""
        Z = np.asarray(Z, dtype=float).reshape(-1, self.p)
        M = np.asarray(M, dtype=float).reshape(-1, self.q)
        return Z, M + phi_batch(self.graph, Z, M)

    def describe(self) -> dict:
        return {
            "mu0": self.mu0.tolist(), "r": self.r, "F_basis": self.F_basis.tolist(),
            "G_basis": self.G_basis.tolist(), "M_F": self.M_F, "gamma": self.gamma,
            "lambda": self.lam, "R": self.R, "c_FG": self.c_FG, "K_A": self.K_A, "C3": self.C3,
            "M2_hat_Y": self.norms_Y.M2_hat, "graph": self.graph.describe(),
        }


def build_chart(Y, G, mu0=None, r: float = 1.0, config: Mapping | None = None) -> Chart:
    """Build the straightening chart of ``Y`` at ``mu0``.

    Parameters
    ----------
    Y : Polynomial or parameter-free PolynomialFamily
        Field on R^n vanishing on G.
    G : array_like, shape (n, q)
        Spanning set of the zero subspace.
    mu0 : array_like, shape (n,), optional
        Base point on G (default the origin).
    r : float
        Radius of the ball around ``mu0`` where Y is controlled.
    config : mapping, optional
        Overrides of :data:`DEFAULT_CHART_CONFIG`; ``constants`` may set C3.

    Raises
    ------
    HypothesisViolationError
        If Y does not vanish on G near ``mu0``.
    SpectralError
        If G is not the kernel part of DY(mu0) or is not invariant.
    NotContractingError
        If the complementary block is not contracting.
    """
    cfg = dict(DEFAULT_CHART_CONFIG)
    cfg.update(config or {})
    poly = _poly_of(Y)
    n = poly.n_in
    r = float(r)
    if not r > 0:
        raise DomainError("r must be positive", r=r)
    G = np.asarray(G, dtype=float).reshape(n, -1)
    BG = canonical_basis(G)
    mu0 = np.zeros(n) if mu0 is None else np.asarray(mu0, dtype=float).reshape(n)
    off = mu0 - BG @ (BG.T @ mu0)
    if np.linalg.norm(off) > 1e-12 * max(1.0, np.linalg.norm(mu0)):
        raise DomainError("mu0 is not on G", distance=float(np.linalg.norm(off)))

    X = translated_family(poly, BG, mu0, check_radius=r)
    A = X.A
    sa = analyze_matrix(A, cluster_tol=float(cfg["cluster_tol"]))
    tol = sa.cluster_tol * max(1.0, sa.op_norm)
    zero = [i for i in range(sa.r) if np.all(np.abs(sa.cluster_values(i)) <= tol)]
    rest = [i for i in range(sa.r) if i not in zero]
    q = BG.shape[1]
    zdim = sum(sa.gen_eigenspaces[i].shape[1] for i in zero)
    if not rest:
        raise EmptySideError("DY(mu0) has no eigenvalue off zero", mu0=mu0.tolist())
    if zdim != q:
        raise SpectralError("G is not the generalized kernel of DY(mu0)",
                            kernel_dim=zdim, dim_G=q, mu0=mu0.tolist())
    F = np.hstack([sa.gen_eigenspaces[i] for i in rest])
    M_F = max(float(np.max(sa.cluster_real_parts(i))) for i in rest)
    if not M_F < 0:
        raise NotContractingError("the complementary block is not contracting",
                                  M_F=M_F, mu0=mu0.tolist())
    split = splitting_from_bases(A, F, BG)
    gamma = -abs(M_F) / 2.0
    lam = min(1.0, abs(M_F)) ** (n - 1)

    cst = resolve_constants(cfg.get("constants"))
    Yfam = translated_family(poly, np.zeros((n, 0)), mu0, check_radius=r)
    norms_Y = sampled_norms(Yfam, r, k_max=3, budget=int(cfg["norm_budget"]), seed=int(cfg["seed"]))
    C3 = float(cst.get("C3", 1.0))
    R = straightening_radius(lam, split.c_FG, sa.K_A, norms_Y.M2_hat, r, C3)

    gctx = make_graph_context(
        X, split=split, gamma=gamma, r=r / 2.0, h=float(cfg["h"]), T=cfg.get("T", "auto"),
        truncation=cfg["truncation"], constants=cst, picard_tol=float(cfg["picard_tol"]),
        norm_budget=int(cfg["norm_budget"]), seed=int(cfg["seed"]),
        tail_tol=float(cfg["tail_tol"]), extrapolate=bool(cfg["extrapolate"]),
    )
    return Chart(
        Y=poly, mu0=mu0, r=r, F_basis=split.F_basis, G_basis=split.G_basis, M_F=M_F,
        gamma=gamma, lam=lam, R=R, c_FG=split.c_FG, K_A=sa.K_A, C3=C3, graph=gctx,
        norms_Y=norms_Y, sa=sa, newton_tol=float(cfg["newton_tol"]),
        newton_max_iter=int(cfg["newton_max_iter"]), config=cfg,
    )


def _newton_mu(chart: Chart, Z, B):
    # solve m + phi(z, m) = b for m, all points at once; the Jacobian comes
    # from the unextrapolated grid and is refreshed only when progress stalls
    from dataclasses import replace

    coarse = replace(chart.graph, extrapolate=False)
    M = B.copy()
    active = np.arange(B.shape[0])
    last = np.full(B.shape[0], np.inf)
    q, p = chart.q, chart.p
    Jm = None
    for it in range(chart.newton_max_iter + 1):
        res = M[active] + phi_batch(chart.graph, Z[active], M[active]) - B[active]
        rn = np.linalg.norm(res, axis=1)
        stalled = rn > 0.5 * last[active]
        last[active] = rn
        done = rn <= chart.newton_tol
        if np.all(done):
            return M, last, it
        if it == chart.newton_max_iter:
            break
        if Jm is None or np.any(stalled & ~done):
            _, J = jacobian_batch(coarse, Z[active], M[active])
            Jm = np.eye(q) + J[:, :, p:]
        step = np.linalg.solve(Jm, res[..., None])[..., 0]
        keep = ~done
        M[active[keep]] -= step[keep]
        active = active[keep]
        Jm = Jm[keep]
    raise ConvergenceError("Newton inversion of psi did not converge",
                           last_residual=float(np.max(last[np.isfinite(last)], initial=0.0)),
                           iterations=chart.newton_max_iter)


def eval_chart(chart: Chart, points, direction: str = "forward", check: bool = True) -> np.ndarray:
    """Evaluate the chart or its inverse on points of R^n.

    ``inverse`` is ``mu0 + L psi L^-1 (x - mu0)``; ``forward`` solves
    ``psi(w) = L^-1 (x - mu0)`` by Newton iteration on the G-component,
    seeded at ``L^-1 (x - mu0)``.

    Parameters
    ----------
    points : array_like, shape (n,) or (B, n)
    direction : {'forward', 'inverse'}
    check : bool
        Reject points outside the closed R-ball around ``mu0``.

    Raises
    ------
    DomainError
        Point outside the chart ball.
    ConvergenceError
        Newton failed; ``details['last_residual']`` holds the residual.
    """
    P = np.asarray(points, dtype=float)
    single = P.ndim == 1
    P = P.reshape(-1, chart.n)
    if check:
        dist = np.linalg.norm(P - chart.mu0, axis=1)
        if np.any(dist > chart.R * (1 + 1e-9)):
            raise DomainError("point outside the chart ball", distance=float(dist.max()), R=chart.R)
    Z, Bc = chart.coords(P)
    if direction == "inverse":
        _, M = chart.psi(Z, Bc)
    elif direction == "forward":
        M, _, _ = _newton_mu(chart, Z, Bc)
    else:
        raise DomainError("direction must be 'forward' or 'inverse'", direction=direction)
    out = chart.point(Z, M)
    return out[0] if single else out


def chart_jacobian(chart: Chart, points, direction: str = "forward") -> np.ndarray:
    """Analytic Jacobian of the chart from the variational equation.

    In coordinates D psi = [[I, 0], [phi_z, I + phi_mu]] and the forward
    chart has the inverse matrix at the corresponding point.
    """
    P = np.asarray(points, dtype=float).reshape(-1, chart.n)
    Z, Bc = chart.coords(P)
    M = _newton_mu(chart, Z, Bc)[0] if direction == "forward" else Bc
    _, J = jacobian_batch(chart.graph, Z, M)
    p, q = chart.p, chart.q
    D = np.zeros((P.shape[0], p + q, p + q))
    D[:, :p, :p] = np.eye(p)
    D[:, p:, :p] = J[:, :, :p]
    D[:, p:, p:] = np.eye(q) + J[:, :, p:]
    if direction == "forward":
        D = np.linalg.inv(D)
    L = chart.L
    return L @ D @ chart.L_inv


def fd_jacobian(chart: Chart, points, direction: str = "forward", step: float | None = None) -> np.ndarray:
    """Central-difference Jacobian of the chart, shape (B, n, n)."""
    P = np.asarray(points, dtype=float).reshape(-1, chart.n)
    n = chart.n
    h = 1e-4 * chart.R if step is None else float(step)
    shifts = np.concatenate([np.eye(n) * h, -np.eye(n) * h])
    Q = (P[:, None, :] + shifts[None]).reshape(-1, n)
    V = eval_chart(chart, Q, direction, check=False).reshape(P.shape[0], 2 * n, n)
    return np.transpose((V[:, :n] - V[:, n:]) / (2 * h), (0, 2, 1))


def ball_sample(chart: Chart, radius: float, n_points: int, seed: int = 0) -> np.ndarray:
    """Deterministic points in the closed ball of the given radius around mu0."""
    rng = np.random.default_rng(seed)
    d = rng.standard_normal((n_points, chart.n))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    rad = radius * rng.uniform(0.0, 1.0, n_points) ** (1.0 / chart.n)
    return chart.mu0 + d * rad[:, None]


@dataclass(frozen=True)
class C1Deviation:
    """Sup over a ball of the C^0 and C^1 distances of the chart to the identity."""

    eps: float
    radius: float
    c0_forward: float
    c1_forward: float
    c0_inverse: float
    c1_inverse: float

    @property
    def deviation(self) -> float:
        return max(self.c0_forward, self.c1_forward, self.c0_inverse, self.c1_inverse)

    def as_dict(self) -> dict:
        return {"eps": self.eps, "radius": self.radius, "c0_forward": self.c0_forward,
                "c1_forward": self.c1_forward, "c0_inverse": self.c0_inverse,
                "c1_inverse": self.c1_inverse, "deviation": self.deviation}


def c1_deviation(chart: Chart, eps: float, n_points: int = 64, seed: int = 0) -> C1Deviation:
    """C^1 distance of the chart and its inverse to the identity on the eps R-ball.

    Jacobians are taken by central differences of the chart itself.
    """
    eps = float(eps)
    if not 0 < eps <= 1:
        raise DomainError("eps must lie in (0, 1]", eps=eps)
    rad = eps * chart.R
    P = np.vstack([chart.mu0, ball_sample(chart, rad, n_points - 1, seed)])
    out = {}
    for d in ("forward", "inverse"):
        V = eval_chart(chart, P, d)
        Jd = fd_jacobian(chart, P, d, step=1e-3 * rad)
        out["c0_" + d] = float(np.max(np.linalg.norm(V - P, axis=1)))
        out["c1_" + d] = float(np.max(np.linalg.norm(Jd - np.eye(chart.n), ord=2, axis=(1, 2))))
    return C1Deviation(eps=eps, radius=rad, **out)


def fit_C3(chart: Chart, eps_values=(0.5, 0.1, 0.02), n_points: int = 64, seed: int = 0) -> float:
    """Smallest C3 >= 1 for which the C^1-closeness holds on the given eps.

    With R proportional to 1 / C3, the chart is eps-close to the identity on
    the ball of radius eps R(C3) iff C3 >= C3_now * rho_eps, where rho_eps is
    the radius (relative to the current eps R) at which closeness first
    fails.  The ratio is found by bisection on the radius.
    """
    need = 1.0
    for eps in eps_values:
        def ok(scale):
            sub = _rescaled(chart, chart.R * scale)
            return c1_deviation(sub, eps, n_points, seed).deviation <= eps
        if ok(1.0):
            continue
        lo, hi = 0.0, 1.0
        for _ in range(30):
            mid = 0.5 * (lo + hi)
            lo, hi = (mid, hi) if ok(mid) else (lo, mid)
        need = max(need, 1.0 / max(lo, 1e-300))
    return float(chart.C3 * need)


def _rescaled(chart: Chart, R: float) -> Chart:
    from dataclasses import replace
    return replace(chart, R=float(R))


def with_C3(chart: Chart, C3: float) -> Chart:
    """Same chart with the radius recomputed for a different C3."""
    from dataclasses import replace
    C3 = float(C3)
    return replace(chart, C3=C3, R=chart.R * chart.C3 / C3)


@dataclass(frozen=True)
class StraighteningReport:
    """Flow check of the straightened slices.

    ``limit_residual`` is the max over slice points of ``||flow(t_end) - mu||``;
    ``decay_rate`` the largest fitted exponent, compared against ``gamma``.
    ``min_separation`` is the smallest distance between images of distinct
    slices.
    """

    limit_residual: float
    decay_rate: float
    gamma: float
    decay_ok: bool
    min_separation: float
    disjoint: bool
    t_end: float
    rows: list

    def as_dict(self) -> dict:
        return {"limit_residual": self.limit_residual, "decay_rate": self.decay_rate,
                "gamma": self.gamma, "decay_ok": self.decay_ok,
                "min_separation": self.min_separation, "disjoint": self.disjoint,
                "t_end": self.t_end}


def _slice_offsets(p: int, rho: float, n_slice: int) -> np.ndarray:
    if p == 1:
        return np.linspace(-rho, rho, n_slice)[:, None]
    g = np.linspace(-rho, rho, n_slice)
    pts = np.stack(np.meshgrid(*([g] * p), indexing="ij"), -1).reshape(-1, p)
    return pts[np.linalg.norm(pts, axis=1) <= rho]


def straightening_residual(chart: Chart, mu_samples, flow_oracle: Callable | None = None,
                           n_slice: int = 9, t_end: float = 25.0, tol: float = 1e-11,
                           decay_window=None, decay_slack: float = 0.05) -> StraighteningReport:
    """Check that the inverse chart sends slices mu + F_{mu0} onto stable leaves.

    Parameters
    ----------
    mu_samples : array_like, shape (m, q)
        G-coordinates relative to ``mu0`` (the slice through
        ``mu0 + B_G mu``).
    flow_oracle : callable, optional
        ``flow_oracle(x0, t_end) -> Trajectory``; defaults to
        :func:`~stabman.flowverify.integrate` on Y.
    n_slice : int
        Points per F-axis on each slice.
    """
    Yfam = translated_family(chart.Y, np.zeros((chart.n, 0)), np.zeros(chart.n), check_radius=0.0)
    if flow_oracle is None:
        def flow_oracle(x0, t):
            return integrate(Yfam, x0, None, t, tol)
    mus = np.asarray(mu_samples, dtype=float).reshape(-1, chart.q)
    window = (0.0, 0.5 * t_end) if decay_window is None else decay_window
    rows, images = [], []
    worst_lim, worst_rate = 0.0, -math.inf
    for m in mus:
        target = chart.mu0 + chart.G_basis @ m
        rho2 = chart.R ** 2 - float(np.sum((chart.G_basis @ m) ** 2))
        if rho2 <= 0:
            raise DomainError("mu sample outside the chart ball", mu=m.tolist(), R=chart.R)
        # slice points mu0 + B_G m + B_F c inside the R-ball
        rho = 0.95 * math.sqrt(rho2) / max(1.0, float(np.linalg.norm(chart.F_basis, 2)))
        C = _slice_offsets(chart.p, rho, n_slice)
        W = chart.point(C, np.repeat(m[None], len(C), axis=0))
        W = W[np.linalg.norm(W - chart.mu0, axis=1) <= chart.R]
        Yp = eval_chart(chart, W, "inverse")
        images.append(Yp)
        for w, y in zip(W, Yp):
            traj = flow_oracle(y, t_end)
            lim = float(np.linalg.norm(traj.states[-1] - target))
            try:
                rate = decay_exponent(traj, window, center=target)
            except DegenerateWindowError:
                rate = None
            worst_lim = max(worst_lim, lim)
            if rate is not None:
                worst_rate = max(worst_rate, rate)
            rows.append({"mu": m.tolist(), "w": w.tolist(), "start": y.tolist(),
                         "limit_residual": lim, "decay_rate": rate})
    sep = math.inf
    for i in range(len(images)):
        for j in range(i + 1, len(images)):
            if np.allclose(mus[i], mus[j]):
                continue
            d = np.linalg.norm(images[i][:, None, :] - images[j][None, :, :], axis=-1)
            sep = min(sep, float(d.min()))
    if not np.isfinite(worst_rate):
        worst_rate = -math.inf
    return StraighteningReport(
        limit_residual=worst_lim, decay_rate=float(worst_rate), gamma=chart.gamma,
        decay_ok=bool(worst_rate <= chart.gamma + decay_slack), min_separation=sep,
        disjoint=bool(sep > 0), t_end=float(t_end), rows=rows,
    )


def projection_along_G(chart: Chart, points) -> np.ndarray:
    """pi_{mu0}: linear projection along G onto F_{mu0}."""
    P = np.asarray(points, dtype=float).reshape(-1, chart.n)
    W = P @ chart.L_inv.T
    return W[:, :chart.p] @ chart.F_basis.T


def overlap_defect(chart0: Chart, chart1: Chart, points) -> np.ndarray:
    """``(xi_0 - xi_1)(x) - (pi_0 - pi_1)(x)`` at points in both chart balls.

    Returns
    -------
    ndarray, shape (n,) or (B, n)

    Raises
    ------
    DomainError
        If a point lies outside either ball.
    """
    P = np.asarray(points, dtype=float)
    single = P.ndim == 1
    P = P.reshape(-1, chart0.n)
    for c in (chart0, chart1):
        dist = np.linalg.norm(P - c.mu0, axis=1)
        if np.any(dist > c.R * (1 + 1e-9)):
            raise DomainError("point outside a chart ball", distance=float(dist.max()),
                              R=c.R, mu0=c.mu0.tolist())
    x0 = eval_chart(chart0, P, "forward")
    x1 = x0 if chart1 is chart0 else eval_chart(chart1, P, "forward")
    d = (x0 - x1) - (projection_along_G(chart0, P) - projection_along_G(chart1, P))
    return d[0] if single else d


def ck_norms(chart: Chart, n_points: int = 32, seed: int = 0, radius: float | None = None,
             step: float | None = None) -> dict:
    """Sampled C^2 norms of the chart and its inverse on the R-ball.

    The second derivative is the central difference of the analytic
    Jacobian; the norm is the largest Frobenius norm of the bilinear map
    over the sample.
    """
    rad = chart.R if radius is None else float(radius)
    P = np.vstack([chart.mu0, ball_sample(chart, 0.9 * rad, n_points - 1, seed)])
    h = 1e-3 * rad if step is None else float(step)
    n = chart.n
    out = {}
    for d in ("forward", "inverse"):
        shifts = np.concatenate([np.eye(n) * h, -np.eye(n) * h])
        Q = (P[:, None, :] + shifts[None]).reshape(-1, n)
        J = chart_jacobian(chart, Q, d).reshape(P.shape[0], 2, n, n, n)
        H = (J[:, 0] - J[:, 1]) / (2 * h)
        out["C2_" + d] = float(np.max(np.linalg.norm(H.reshape(P.shape[0], -1), axis=1)))
    return out


def growth_exponent(x, y) -> float:
    """Least-squares slope of log y against log x."""
    slope, _ = np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)
    return float(slope)
