"""Eigenstructure, subspace angles and the matrix constants c_A, K_A, K'_A.

All functions here are pure.  Generalized eigenspaces are obtained from a
reordered real Schur form, so every basis is real and orthonormal; conjugate
eigenvalue pairs always share one subspace.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np
import scipy.linalg

from .errors import (
    DegenerateIntersectionError,
    DomainError,
    MatrixExpOverflowError,
    SpectralError,
)

# Largest exponent whose exp() is still a finite double, with a little slack.
_EXP_LIMIT = math.log(np.finfo(float).max) - 1.0


def _pow0(base: float, expo: float) -> float:
    # 0**0 is read as 1 so that the n = 1 formulas degenerate gracefully.
    if expo == 0:
        return 1.0
    return float(base) ** expo


def as_matrix(A, name: str = "A") -> np.ndarray:
    """Validate and copy a real square matrix."""
    M = np.array(A, dtype=float)
    if M.ndim == 0:
        M = M.reshape(1, 1)
    if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] < 1:
        raise DomainError(f"{name} must be a nonempty square matrix", shape=list(M.shape))
    if not np.all(np.isfinite(M)):
        raise DomainError(f"{name} has non-finite entries")
    return M


def op_norm(A) -> float:
    """Subordinate Euclidean norm (largest singular value)."""
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        return 0.0
    return float(np.linalg.norm(A, 2))


def orthonormal_basis(V) -> np.ndarray:
    """Orthonormal basis of the column span of a full-rank spanning set."""
    V = np.asarray(V, dtype=float)
    if V.ndim == 1:
        V = V[:, None]
    if V.shape[1] == 0:
        return V.copy()
    Q, R = np.linalg.qr(V)
    diag = np.abs(np.diag(R))
    if diag.min() <= 1e-12 * max(1.0, diag.max()):
        raise DomainError("spanning set is rank deficient", rank_gap=float(diag.min()))
    return Q


def canonical_basis(V) -> np.ndarray:
    """Deterministic orthonormal basis of span(V).

    Pivoted QR of the orthogonal projector, with column signs fixed so that the
    diagonal of R is positive.  Two spanning sets of one subspace therefore give
    the same basis up to rounding.
    """
    Q0 = orthonormal_basis(V)
    k = Q0.shape[1]
    if k == 0:
        return Q0
    P = Q0 @ Q0.T
    Q, R, _ = scipy.linalg.qr(P, pivoting=True)
    Q = Q[:, :k]
    signs = np.sign(np.diag(R)[:k])
    signs[signs == 0] = 1.0
    return Q * signs + 0.0


def principal_angle(F, G, angle_floor: float = 1e-10) -> tuple[float, float]:
    """Minimal angle between two subspaces and the constant c(F, G).

    Parameters
    ----------
    F, G : array_like
        Spanning sets (columns) of the two subspaces.
    angle_floor : float
        Angles below this are treated as a nontrivial intersection.

    Returns
    -------
    angle : float
        Smallest principal angle, in radians.
    c_FG : float
        ``(2 / (1 - cos angle)) ** 0.5``, evaluated as ``1 / sin(angle / 2)``.

    Raises
    ------
    DegenerateIntersectionError
        If the angle is below ``angle_floor``.
    """
    F = np.asarray(F, dtype=float)
    G = np.asarray(G, dtype=float)
    if F.ndim == 1:
        F = F[:, None]
    if G.ndim == 1:
        G = G[:, None]
    if F.shape[0] != G.shape[0]:
        raise DomainError("subspaces live in different ambient spaces")
    if F.shape[1] == 0 or G.shape[1] == 0:
        raise DomainError("principal angle needs two nonzero subspaces")
    # subspace_angles combines the cosine and sine formulas, so small angles
    # keep full relative accuracy.
    angle = float(np.min(scipy.linalg.subspace_angles(F, G)))
    if angle < angle_floor:
        raise DegenerateIntersectionError(
            "subspaces intersect numerically", angle=angle, angle_floor=angle_floor
        )
    return angle, 1.0 / math.sin(angle / 2.0)


def split_components(bases, x) -> list[np.ndarray]:
    """Components of ``x`` in a direct-sum decomposition.

    ``bases`` is a list of spanning sets whose columns together span R^n.
    Returns the list of component vectors (each in R^n).
    """
    mats = [np.asarray(B, dtype=float) for B in bases]
    M = np.hstack(mats)
    coeff = np.linalg.solve(M, np.asarray(x, dtype=float))
    out, j = [], 0
    for B in mats:
        k = B.shape[1]
        out.append(B @ coeff[j:j + k])
        j += k
    return out


@dataclass(frozen=True, eq=False)
class SpectralAnalysis:
    """Spectral data of a real square matrix.

    Attributes
    ----------
    matrix : ndarray
        Copy of the analysed matrix.
    n : int
    eigenvalues : ndarray of complex
        Eigenvalues, as computed by the real Schur form.
    clusters : tuple of ndarray
        Indices into ``eigenvalues``, one array per generalized eigenspace.
    multiplicities : tuple of int
        Dimension of each generalized eigenspace.
    gen_eigenspaces : tuple of ndarray
        Orthonormal real bases E_1..E_r.
    op_norm, family_angle, c_A, K_A, Kp_A, M_A, m_A : float
    """

    matrix: np.ndarray
    n: int
    eigenvalues: np.ndarray
    clusters: tuple
    multiplicities: tuple
    gen_eigenspaces: tuple
    op_norm: float
    family_angle: float
    c_A: float
    K_A: float
    Kp_A: float
    M_A: float
    m_A: float
    cluster_tol: float = 1e-6
    _proj: tuple = field(default=(), repr=False)

    @property
    def r(self) -> int:
        return len(self.gen_eigenspaces)

    def cluster_values(self, i: int) -> np.ndarray:
        return self.eigenvalues[self.clusters[i]]

    def cluster_real_parts(self, i: int) -> np.ndarray:
        return self.cluster_values(i).real

    def projector(self, i: int) -> np.ndarray:
        """Spectral projector onto E_i along the sum of the other spaces."""
        return self._proj[i]

    def components(self, x) -> list[np.ndarray]:
        """Decompose ``x`` along the generalized eigenspaces."""
        return [P @ np.asarray(x, dtype=float) for P in self._proj]


def _cluster_labels(vals: np.ndarray, tol_abs: float) -> np.ndarray:
    # single linkage, conjugates always merged
    k = len(vals)
    parent = list(range(k))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(k):
        for j in range(i + 1, k):
            if (abs(vals[i] - vals[j]) <= tol_abs
                    or abs(vals[i] - np.conj(vals[j])) <= tol_abs):
                ri, rj = find(i), find(j)
                if ri != rj:
                    parent[max(ri, rj)] = min(ri, rj)
    roots = [find(i) for i in range(k)]
    order = []
    for rt in roots:
        if rt not in order:
            order.append(rt)
    return np.array([order.index(rt) for rt in roots])


def _schur_eigenvalues(T: np.ndarray) -> np.ndarray:
    # eigenvalues read off the quasi-triangular real Schur factor
    n = T.shape[0]
    out = []
    i = 0
    while i < n:
        if i + 1 < n and T[i + 1, i] != 0.0:
            blk = T[i:i + 2, i:i + 2]
            out.extend(np.linalg.eigvals(blk))
            i += 2
        else:
            out.append(complex(T[i, i]))
            i += 1
    return np.array(out, dtype=complex)


def family_angle(bases) -> float:
    """Angle of a direct-sum family: min over j of angle(E_j, sum of the others)."""
    if len(bases) <= 1:
        return math.pi / 2.0
    best = math.pi / 2.0
    for j, Ej in enumerate(bases):
        rest = np.hstack([B for i, B in enumerate(bases) if i != j])
        ang, _ = principal_angle(Ej, rest, angle_floor=0.0)
        best = min(best, ang)
    return best


def c_family(angle: float, r: int) -> float:
    """c_A = (2 / (1 - cos angle)) ** ((r - 1) / 2)."""
    if r <= 1:
        return 1.0
    return (1.0 / math.sin(angle / 2.0)) ** (r - 1)


def analyze_matrix(A, cluster_tol: float = 1e-6) -> SpectralAnalysis:
    """Spectral analysis of a real square matrix.

    Parameters
    ----------
    A : array_like, shape (n, n)
    cluster_tol : float
        Eigenvalues closer than ``cluster_tol * max(1, ||A||)`` are merged into
        one generalized eigenspace.

    Returns
    -------
    SpectralAnalysis

    Raises
    ------
    SpectralError
        If the Schur decomposition or its reordering fails, or if the computed
        spaces do not form a direct sum.
    """
    A = as_matrix(A)
    n = A.shape[0]
    nrm = op_norm(A)
    tol_abs = cluster_tol * max(1.0, nrm)
    try:
        T0, _ = scipy.linalg.schur(A, output="real")
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SpectralError("real Schur decomposition failed", reason=str(exc)) from exc
    vals = _schur_eigenvalues(T0)
    labels = _cluster_labels(vals, tol_abs)
    n_clusters = int(labels.max()) + 1

    bases = []
    clusters = []
    for c in range(n_clusters):
        idx = np.flatnonzero(labels == c)
        clusters.append(idx)
        if n_clusters == 1:
            bases.append(np.eye(n))
            continue

        def select(x, y, _lab=c):
            z = complex(x, y)
            j = int(np.argmin(np.abs(vals - z)))
            return bool(labels[j] == _lab)

        try:
            _, Z, sdim = scipy.linalg.schur(A, output="real", sort=select)
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise SpectralError("Schur reordering failed", cluster=c, reason=str(exc)) from exc
        if sdim != len(idx):
            raise SpectralError(
                "Schur reordering selected the wrong number of eigenvalues",
                cluster=c, expected=int(len(idx)), got=int(sdim),
            )
        bases.append(canonical_basis(Z[:, :sdim]))

    V = np.hstack(bases)
    smin = np.linalg.svd(V, compute_uv=False).min()
    if smin < 1e-10:
        raise SpectralError("generalized eigenspaces fail the direct-sum check", sigma_min=float(smin))

    Vinv = np.linalg.inv(V)
    proj, j = [], 0
    for B in bases:
        k = B.shape[1]
        proj.append(B @ Vinv[j:j + k])
        j += k

    ang = family_angle(bases)
    r = len(bases)
    cA = c_family(ang, r)
    KA = _pow0(max(1.0, nrm), n - 1) * cA
    KpA = 2.0 ** (2 * n - 2) * _pow0(n - 1, n - 1) * KA
    return SpectralAnalysis(
        matrix=A,
        n=n,
        eigenvalues=vals,
        clusters=tuple(clusters),
        multiplicities=tuple(B.shape[1] for B in bases),
        gen_eigenspaces=tuple(bases),
        op_norm=nrm,
        family_angle=ang,
        c_A=cA,
        K_A=KA,
        Kp_A=KpA,
        M_A=float(vals.real.max()),
        m_A=float(vals.real.min()),
        cluster_tol=cluster_tol,
        _proj=tuple(proj),
    )


def matrix_exponential(A, s: float = 1.0) -> np.ndarray:
    """``exp(s A)`` by scaling and squaring with a Pade approximant.

    Raises
    ------
    MatrixExpOverflowError
        If ``s * M_A`` (or the result) exceeds the double range.
    """
    A = as_matrix(A)
    s = float(s)
    if not math.isfinite(s):
        raise DomainError("s must be finite")
    n = A.shape[0]
    if s == 0.0:
        return np.eye(n)
    top = float(np.max(np.linalg.eigvals(s * A).real))
    if top > _EXP_LIMIT:
        raise MatrixExpOverflowError("exp(s*A) overflows", s=s, growth_exponent=top)
    with np.errstate(over="ignore", invalid="ignore"):
        E = scipy.linalg.expm(s * A)
    if not np.all(np.isfinite(E)):
        raise MatrixExpOverflowError("exp(s*A) overflows", s=s, growth_exponent=top)
    return E


def exp_growth_coefficient(sa: SpectralAnalysis, alpha: float) -> float:
    """Coefficient B(A, alpha) with ``||exp(sA)|| <= B exp(alpha s)`` for s >= 0.

    ``B = 2^(n-1) (n-1)^(n-1) max(1, ||A||)^(n-1) c_A / min(1, alpha - M_A)^(n-1)``.
    """
    alpha = float(alpha)
    if not alpha > sa.M_A:
        raise DomainError("alpha must exceed M_A", alpha=alpha, M_A=sa.M_A)
    n = sa.n
    num = 2.0 ** (n - 1) * _pow0(n - 1, n - 1) * _pow0(max(1.0, sa.op_norm), n - 1) * sa.c_A
    return num / _pow0(min(1.0, alpha - sa.M_A), n - 1)


def K_of(A) -> float:
    """K(A) = max(1, ||A||)^(n-1) c_A for an arbitrary square matrix."""
    return analyze_matrix(A).K_A


def Kp_of(A) -> float:
    """K'(A) = 2^(2n-2) (n-1)^(n-1) K(A)."""
    return analyze_matrix(A).Kp_A
