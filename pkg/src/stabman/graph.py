"""The local stable-manifold graph map phi(z, mu) = v*(0) and its jets.

Three truncation policies are available:

``"adapted"`` (default)
    Each point (z, mu) is solved with the truncated family X^xi at the
    point-adapted size ``xi(z, mu) = 4 C K_A g_A ((1 + C0 / (2^(n-1) C1)) |z| + |mu|)``,
    capped at ``min(1, r / sqrt(2))``.  The result is accepted as the graph of
    the untruncated field when the computed orbit never leaves the ball where
    X^xi = X; this is reported per point.
``"canonical"``
    One global size ``min(xi_tilde, xi(gamma))``, halved until the sampled
    smallness condition holds.
float
    A user-chosen global size (smallness recorded, not enforced).

Linear fields are never truncated.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
import math
from typing import Mapping

import numpy as np

from .bump import TruncatedFamily, truncate_family
from .errors import DomainError, GateViolationError, StepUnderflowError
from .field import FieldFamily, NormTable, multilinear_norm, sampled_norms
from .gammaspace import (
    OperatorContext,
    make_context,
    solve_fixed_point_batch,
    solve_variational_batch,
)
from .hypotheses import (
    Splitting,
    Thresholds,
    adapted_truncation_size,
    build_splitting,
    phi_bound_rhs,
    resolve_constants,
    smallness_thresholds,
)
from .spectral import SpectralAnalysis, analyze_matrix

# batch members times grid nodes per solver call
_CHUNK_NODES = 400_000


@dataclass(frozen=True, eq=False)
class GraphContext:
    """Solver configuration for the graph map of one field.

    Attributes
    ----------
    field : FieldFamily
        The untruncated field.
    split, sa : Splitting, SpectralAnalysis
    op : OperatorContext
        Operator context (built on the truncated field for global policies).
    truncation : str
        'none', 'adapted', 'canonical' or 'fixed'.
    xi : float or None
        Global truncation size, when one is used.
    xi_cap : float
        Upper cap ``min(1, r / sqrt(2))`` of adapted sizes.
    thresholds : Thresholds
    norms : NormTable
    constants : dict
    halvings : int
        Number of halvings applied by the canonical policy.
    """

    field: FieldFamily
    split: Splitting
    sa: SpectralAnalysis
    op: OperatorContext
    truncation: str
    xi: float | None
    xi_cap: float
    r: float
    thresholds: Thresholds
    norms: NormTable
    constants: dict
    picard_tol: float = 1e-13
    max_iter: int = 500
    extrapolate: bool = False
    halvings: int = 0
    _cache: dict = dc_field(default_factory=dict, repr=False)

    @property
    def gamma(self) -> float:
        return self.op.gamma

    @property
    def p(self) -> int:
        return self.split.p

    @property
    def q(self) -> int:
        return self.split.q

    @property
    def s(self) -> int:
        return self.field.s

    def fine_op(self) -> OperatorContext:
        if "fine" not in self._cache:
            self._cache["fine"] = self.op.refined(2)
        return self._cache["fine"]

    def describe(self) -> dict:
        return {
            "truncation": self.truncation, "xi": self.xi, "xi_cap": self.xi_cap, "r": self.r,
            "halvings": self.halvings, "picard_tol": self.picard_tol,
            "extrapolate": self.extrapolate, "operator": self.op.describe(),
            "constants": dict(self.constants), "norms": self.norms.as_dict(),
            "thresholds": self.thresholds.as_dict(),
        }


def make_graph_context(f: FieldFamily, *, split: Splitting | None = None, cut: float = 0.0,
                       gamma: float | None = None, r: float = 1.0, h: float | None = 0.01,
                       grid_n: int | None = None, T="auto", truncation="adapted",
                       xi_cap: float | None = None, constants: Mapping | None = None,
                       picard_tol: float = 1e-13, max_iter: int = 500, norm_budget: int = 1024,
                       seed: int = 0, tail_tol: float = 1e-12, extrapolate: bool = False,
                       k_max: int = 3, sa: SpectralAnalysis | None = None) -> GraphContext:
    """Set up the graph solver for a field.

    Parameters
    ----------
    f : FieldFamily
    split : Splitting, optional
        Defaults to ``build_splitting(analyze_matrix(f.A), cut)``.
    gamma : float, optional
        Decay rate; defaults to the midpoint of I_A.
    r : float
        Radius of the ball on which the field is controlled.
    h, grid_n, T, tail_tol
        Grid specification passed to :func:`make_context` (``grid_n`` wins
        over ``h`` when both are given).
    truncation : {'adapted', 'canonical'} or float
    xi_cap : float, optional
        Extra cap on the global truncation size.
    constants : mapping, optional
        Implicit-constant overrides.
    extrapolate : bool
        Richardson-extrapolate phi from grids h and h/2.
    """
    if sa is None:
        sa = analyze_matrix(f.A)
    if split is None:
        split = build_splitting(sa, cut)
    if gamma is None:
        gamma = split.gamma_tilde
    gamma = float(gamma)
    r = float(r)
    cst = resolve_constants(constants)
    norms = sampled_norms(f, r, k_max=k_max, budget=norm_budget, seed=seed)
    thr = smallness_thresholds(split, sa, gamma, norms.M2_hat, r, cst)
    cap = min(1.0, r / math.sqrt(2.0))
    grid = {"grid_n": grid_n} if grid_n is not None else {"h": h}
    common = dict(T=T, tail_tol=tail_tol, sa=sa, seed=seed, **grid)
    halvings = 0
    if f.is_linear():
        mode, xi = "none", None
        op = make_context(f, split, gamma, gate="strict", **common)
    elif isinstance(truncation, str) and truncation == "adapted":
        mode, xi = "adapted", None
        op = make_context(f, split, gamma, gate="report", **common)
    elif isinstance(truncation, str) and truncation == "canonical":
        mode = "canonical"
        xi = min(thr.xi_tilde, thr.xi_gamma, cap)
        if xi_cap is not None:
            xi = min(xi, float(xi_cap))
        while True:
            try:
                op = make_context(truncate_family(f, xi, r), split, gamma, gate="strict", **common)
                break
            except GateViolationError:
                halvings += 1
                if halvings > 60:
                    raise
                xi *= 0.5
    else:
        mode, xi = "fixed", float(truncation)
        op = make_context(truncate_family(f, xi, r), split, gamma, gate="report", **common)
    return GraphContext(
        field=f, split=split, sa=sa, op=op, truncation=mode, xi=xi, xi_cap=cap, r=r,
        thresholds=thr, norms=norms, constants=cst, picard_tol=float(picard_tol),
        max_iter=int(max_iter), extrapolate=bool(extrapolate), halvings=halvings,
    )


@dataclass(frozen=True)
class PhiInfo:
    """Values of phi on a batch with per-point diagnostics."""

    values: np.ndarray
    xi: np.ndarray
    iterations: np.ndarray
    residual: np.ndarray
    max_orbit_norm: np.ndarray
    inside_plateau: np.ndarray


def _as_batch(gctx: GraphContext, Z, MU):
    p, s = gctx.p, gctx.s
    Z = np.asarray(Z, dtype=float)
    single = Z.ndim <= 1
    Z = Z.reshape(-1, p)
    if s:
        if MU is None:
            raise DomainError("mu is required for this field")
        MU = np.asarray(MU, dtype=float).reshape(-1, s)
        if MU.shape[0] == 1 and Z.shape[0] > 1:
            MU = np.repeat(MU, Z.shape[0], axis=0)
        if Z.shape[0] == 1 and MU.shape[0] > 1:
            Z = np.repeat(Z, MU.shape[0], axis=0)
        if MU.shape[0] != Z.shape[0]:
            raise DomainError("z and mu batches differ in length")
    else:
        MU = np.zeros((Z.shape[0], 0))
    return Z, MU, single


def _solve_field(gctx: GraphContext, Z, MU):
    # field, per-point xi for a batch
    B = Z.shape[0]
    if gctx.truncation == "adapted":
        xi = adapted_truncation_size(gctx.split, gctx.sa, np.linalg.norm(Z, axis=1),
                                     np.linalg.norm(MU, axis=1), gctx.constants)
        # the floor only matters at (0, 0), where every truncation is exact
        xi = np.clip(xi, 1e-9, gctx.xi_cap)
        return TruncatedFamily(gctx.field, xi[:, None], gctx.r), xi
    if gctx.truncation == "none":
        return gctx.op.field, np.full(B, np.inf)
    return gctx.op.field, np.full(B, gctx.xi)


def _solve_chunk(gctx: GraphContext, op: OperatorContext, Z, MU):
    f, xi = _solve_field(gctx, Z, MU)
    fp = solve_fixed_point_batch(op, Z, MU if gctx.s else None, tol=gctx.picard_tol,
                                 max_iter=gctx.max_iter, field=f)
    return fp, f, xi


def _orbit_norm(gctx: GraphContext, op: OperatorContext, fp) -> np.ndarray:
    x = fp.Z @ gctx.split.F_basis.T + fp.V @ gctx.split.G_basis.T
    w2 = np.sum(x * x, axis=-1) + np.sum(fp.MU * fp.MU, axis=-1)[:, None]
    return np.sqrt(w2.max(axis=1))


def phi_batch(gctx: GraphContext, Z, MU=None, return_info: bool = False):
    """phi on a batch of points.

    Parameters
    ----------
    Z : array_like, shape (B, p)
        F-coordinates (orthonormal basis ``split.F_basis``).
    MU : array_like, shape (B, s), optional

    Returns
    -------
    ndarray, shape (B, q)
        G-coordinates of phi, or a :class:`PhiInfo` when ``return_info``.
    """
    Z, MU, _ = _as_batch(gctx, Z, MU)
    B, q = Z.shape[0], gctx.q
    out = np.zeros((B, q))
    xi_all = np.full(B, np.nan)
    iters = np.zeros(B, dtype=int)
    res = np.zeros(B)
    orbit = np.zeros(B)
    nz = np.flatnonzero(np.linalg.norm(Z, axis=1) > 0)
    ops = [gctx.op, gctx.fine_op()] if gctx.extrapolate else [gctx.op]
    for op_i, op in enumerate(ops):
        step = max(1, _CHUNK_NODES // len(op.t))
        vals = np.zeros((B, q))
        for a in range(0, len(nz), step):
            idx = nz[a:a + step]
            fp, _, xi = _solve_chunk(gctx, op, Z[idx], MU[idx])
            vals[idx] = fp.V[:, 0, :]
            if op_i == 0:
                xi_all[idx] = xi
                iters[idx] = fp.iterations
                res[idx] = fp.residual
                orbit[idx] = _orbit_norm(gctx, op, fp)
        if op_i == 0:
            out = vals
        else:
            out = (4.0 * vals - out) / 3.0
    if not return_info:
        return out
    xi_all[np.linalg.norm(Z, axis=1) == 0] = 0.0
    inside = orbit <= np.where(np.isfinite(xi_all), xi_all, np.inf) * (1 + 1e-12)
    return PhiInfo(out, xi_all, iters, res, orbit, inside)


def phi(gctx: GraphContext, z, mu=None) -> np.ndarray:
    """phi(z, mu) in G-coordinates for a single point."""
    z = np.asarray(z, dtype=float)
    if z.size != gctx.p:
        raise DomainError("z has the wrong dimension", expected=gctx.p, shape=list(z.shape))
    return phi_batch(gctx, z.reshape(1, gctx.p),
                     None if mu is None else np.asarray(mu, dtype=float).reshape(1, -1))[0]


def graph_point(gctx: GraphContext, z, mu=None) -> np.ndarray:
    """The point ``B_F z + B_G phi(z, mu)`` of R^n."""
    v = phi(gctx, z, mu)
    return gctx.split.F_basis @ np.asarray(z, dtype=float).reshape(gctx.p) + gctx.split.G_basis @ v


def jacobian_batch(gctx: GraphContext, Z, MU=None) -> tuple[np.ndarray, np.ndarray]:
    """phi and its first derivative by the variational equation.

    Returns ``(values (B, q), J (B, q, p + s))``; columns of J are ordered
    (z, mu).
    """
    Z, MU, _ = _as_batch(gctx, Z, MU)
    B, p, q, s = Z.shape[0], gctx.p, gctx.q, gctx.s
    D = p + s
    vals = np.zeros((B, q))
    J = np.zeros((B, q, D))
    ops = [gctx.op, gctx.fine_op()] if gctx.extrapolate else [gctx.op]
    for op_i, op in enumerate(ops):
        step = max(1, _CHUNK_NODES // (len(op.t) * (D + 1)))
        v_op = np.zeros((B, q))
        J_op = np.zeros((B, q, D))
        for a in range(0, B, step):
            sl = slice(a, a + step)
            Zc, MUc = Z[sl], MU[sl]
            b = Zc.shape[0]
            fp, f, _ = _solve_chunk(gctx, op, Zc, MUc)
            d_om = np.zeros((b, D, p))
            d_mu = np.zeros((b, D, s))
            for j in range(p):
                d_om[:, j, j] = 1.0
            for j in range(s):
                d_mu[:, p + j, j] = 1.0
            _, V1 = solve_variational_batch(op, fp.Z, fp.V, fp.MU, d_om, d_mu,
                                            tol=gctx.picard_tol, max_iter=gctx.max_iter, field=f)
            v_op[sl] = fp.V[:, 0, :]
            J_op[sl] = np.transpose(V1[:, :, 0, :], (0, 2, 1))
        if op_i == 0:
            vals, J = v_op, J_op
        else:
            vals = (4.0 * v_op - vals) / 3.0
            J = (4.0 * J_op - J) / 3.0
    return vals, J


def phi_jet(gctx: GraphContext, z, mu=None, k_max: int = 1, fd_rel: float = 1e-3) -> dict:
    """Derivatives of phi at one point up to order ``k_max <= 3``.

    Order 1 comes from the variational equation; orders 2 and 3 from central
    differences of order-1 results with step ``fd_rel * (|z| + |mu| + 0.01)``
    (ten times larger for order 3).

    Returns
    -------
    dict
        ``{0: (q,), 1: (q, D), 2: (q, D, D), 3: (q, D, D, D)}`` with
        ``D = p + s`` and slots ordered (z, mu).
    """
    k_max = int(k_max)
    if not 0 <= k_max <= 3:
        raise DomainError("k_max must be in 0..3", k_max=k_max)
    Z, MU, _ = _as_batch(gctx, z, mu)
    w0 = np.concatenate([Z[0], MU[0]])
    p, s = gctx.p, gctx.s
    D = p + s
    if k_max == 0:
        return {0: phi_batch(gctx, Z, MU if s else None)[0]}
    scale = np.linalg.norm(Z[0]) + np.linalg.norm(MU[0]) + 0.01
    sig2 = fd_rel * scale
    sig3 = 10.0 * fd_rel * scale
    if k_max >= 2 and sig2 <= 1e-12:
        raise StepUnderflowError("finite-difference step underflow", step=sig2)
    pts = [w0]
    if k_max >= 2:
        for a in range(D):
            for sg in (1.0, -1.0):
                e = np.zeros(D)
                e[a] = sg * sig2
                pts.append(w0 + e)
    if k_max >= 3:
        for a in range(D):
            for b in range(D):
                for sa_ in (1.0, -1.0):
                    for sb_ in (1.0, -1.0):
                        e = np.zeros(D)
                        e[a] += sa_ * sig3
                        e[b] += sb_ * sig3
                        pts.append(w0 + e)
    P = np.array(pts)
    vals, J = jacobian_batch(gctx, P[:, :p], P[:, p:] if s else None)
    out = {0: vals[0], 1: J[0]}
    if k_max >= 2:
        H = np.zeros((gctx.q, D, D))
        for a in range(D):
            H[:, :, a] = (J[1 + 2 * a] - J[2 + 2 * a]) / (2 * sig2)
        out[2] = 0.5 * (H + np.transpose(H, (0, 2, 1)))
    if k_max >= 3:
        base = 1 + 2 * D
        T3 = np.zeros((gctx.q, D, D, D))
        k = base
        for a in range(D):
            for b in range(D):
                Jpp, Jpm, Jmp, Jmm = J[k], J[k + 1], J[k + 2], J[k + 3]
                k += 4
                # for a == b this is the plain second difference with step 2 sig3
                T3[:, :, a, b] = (Jpp - Jpm - Jmp + Jmm) / (4 * sig3 ** 2)
        # symmetrize over all slots
        perms = [(0, 1, 2, 3), (0, 1, 3, 2), (0, 2, 1, 3), (0, 2, 3, 1), (0, 3, 1, 2), (0, 3, 2, 1)]
        out[3] = sum(np.transpose(T3, pp) for pp in perms) / 6.0
    return out


def sum_norm_bilinear(H: np.ndarray, p: int, rng=None) -> float:
    """Norm of a bilinear map on F x R^s for the norm |z| + |mu|.

    The unit ball of that norm is the convex hull of the unit spheres of the
    two factors, so the norm is the largest Euclidean-subordinate norm of the
    four blocks.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    D = H.shape[-1]
    blocks = [slice(0, p), slice(p, D)]
    best = 0.0
    for b1 in blocks:
        for b2 in blocks:
            blk = H[:, b1, b2]
            if blk.size == 0:
                continue
            # pad to a square slot shape for the block ascent
            m = max(blk.shape[1], blk.shape[2])
            T = np.zeros((1, H.shape[0], m, m))
            T[0, :, :blk.shape[1], :blk.shape[2]] = blk
            best = max(best, float(multilinear_norm(T, 2, rng)[0]))
    return best


@dataclass(frozen=True)
class BoundReport:
    """Measured norms of phi's jets against the closed-form bounds.

    ``measured`` and ``rhs`` map a key ('k0', 'k1z', 'k1mu', 'k2') to arrays
    over the grid; ``ratio`` is measured / rhs (NaN where rhs = 0) and
    ``max_ratio`` its max per key.
    """

    points: np.ndarray
    measured: dict
    rhs: dict
    ratio: dict
    max_ratio: dict

    def as_dict(self) -> dict:
        return {"max_ratio": dict(self.max_ratio), "n_points": int(len(self.points))}


def delta_ball_grid(gctx: GraphContext, n_per_axis: int = 5, frac: float = 0.9) -> np.ndarray:
    """Cartesian grid of (z, mu) with |z|, |mu| <= frac * delta_tilde."""
    dlt = frac * gctx.thresholds.delta_tilde
    p, s = gctx.p, gctx.s
    axis = np.linspace(-dlt, dlt, int(n_per_axis))
    mesh = np.meshgrid(*([axis] * (p + s)), indexing="ij")
    P = np.stack([m.ravel() for m in mesh], axis=1)
    keep = (np.linalg.norm(P[:, :p], axis=1) <= dlt * (1 + 1e-12))
    if s:
        keep &= np.linalg.norm(P[:, p:], axis=1) <= dlt * (1 + 1e-12)
    return P[keep]


def check_phi_bounds(gctx: GraphContext, points=None, norms: NormTable | None = None,
                     n_per_axis: int = 5) -> BoundReport:
    """Ratios of measured jet norms of phi to the closed-form bounds (C'_k = 1).

    Parameters
    ----------
    points : array_like, shape (P, p + s), optional
        Grid of (z, mu); defaults to :func:`delta_ball_grid`.
    norms : NormTable, optional
        Defaults to the context's sampled norms (needs orders up to 3).
    """
    norms = gctx.norms if norms is None else norms
    P = delta_ball_grid(gctx, n_per_axis) if points is None else np.asarray(points, dtype=float)
    p, s = gctx.p, gctx.s
    keys = ("k0", "k1z", "k1mu", "k2")
    measured = {k: np.zeros(len(P)) for k in keys}
    rhs = {k: np.zeros(len(P)) for k in keys}
    cst = {k: v for k, v in gctx.constants.items()}
    for i, w in enumerate(P):
        jet = phi_jet(gctx, w[:p], w[p:] if s else None, k_max=2)
        zn, mn = float(np.linalg.norm(w[:p])), float(np.linalg.norm(w[p:]))
        measured["k0"][i] = np.linalg.norm(jet[0])
        measured["k1z"][i] = np.linalg.norm(jet[1][:, :p], 2)
        measured["k1mu"][i] = np.linalg.norm(jet[1][:, p:], 2) if s else 0.0
        measured["k2"][i] = sum_norm_bilinear(jet[2], p)
        args = (gctx.split, gctx.sa, norms, zn, mn)
        rhs["k0"][i] = phi_bound_rhs(*args, 0, constants=cst)
        rhs["k1z"][i] = phi_bound_rhs(*args, 1, "z", constants=cst)
        rhs["k1mu"][i] = phi_bound_rhs(*args, 1, "mu", constants=cst) if s else 0.0
        rhs["k2"][i] = phi_bound_rhs(*args, 2, r=gctx.r, constants=cst)
    ratio, max_ratio = {}, {}
    for k in keys:
        with np.errstate(divide="ignore", invalid="ignore"):
            rr = np.where(rhs[k] > 0, measured[k] / np.where(rhs[k] > 0, rhs[k], 1.0), np.nan)
        ratio[k] = rr
        max_ratio[k] = float(np.nanmax(rr)) if np.any(np.isfinite(rr)) else 0.0
    return BoundReport(points=P, measured=measured, rhs=rhs, ratio=ratio, max_ratio=max_ratio)


def phi_grid_csv(dest, gctx: GraphContext, points, values, ratios: dict | None = None) -> None:
    """Write a phi grid: z-, mu-coordinates, phi components, optional ratios."""
    P = np.asarray(points, dtype=float)
    V = np.asarray(values, dtype=float).reshape(len(P), -1)
    p, s = gctx.p, gctx.s
    cols = [f"z{i + 1}" for i in range(p)] + [f"mu{i + 1}" for i in range(s)]
    cols += [f"phi{i + 1}" for i in range(V.shape[1])]
    data = [P, V]
    for k in sorted(ratios or {}):
        cols.append(f"ratio_{k}")
        data.append(np.asarray(ratios[k]).reshape(-1, 1))
    np.savetxt(dest, np.hstack(data), delimiter=",", header=",".join(cols), comments="",
               fmt="%.17g")
