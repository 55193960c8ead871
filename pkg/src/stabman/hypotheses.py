"""Partially hyperbolic splittings and closed-form smallness thresholds.

The existence constants that come without a closed form (C, C0, C2, C3, c1,
C'_k, ...) are named configuration values defaulting to 1.  Every threshold
records the names of the constants it was computed from.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math
from typing import Mapping

import numpy as np

from .errors import DomainError, EmptySideError, NotPartiallyHyperbolicError, SpectralError
from .spectral import SpectralAnalysis, _pow0, canonical_basis, principal_angle

DEFAULT_CONSTANTS = {
    "C": 1.0,     # truncation / validity radius constant
    "C0": 1.0,    # derivative bound of phi at the origin (adapted truncation size)
    "C2": 1.0,    # eta / delta radii
    "C2p": 1.0,   # kept for reports; the delta radius uses C2
    "C3": 1.0,    # chart radius
    "C3p": 1.0,   # chart C^k bounds
    "c1": 1.0,    # truncated first-derivative bound
    "K": 1.0,     # chart closeness
    "Kp": 1.0,    # chart inclusion
}


def resolve_constants(overrides: Mapping[str, float] | None = None) -> dict:
    """Merge user overrides into the default constant table.

    Names of the form ``Cp<k>`` (the constant of the order-k bound on phi) are
    accepted in addition to the fixed keys; all values must be positive.
    """
    out = dict(DEFAULT_CONSTANTS)
    for key, val in (overrides or {}).items():
        if key not in DEFAULT_CONSTANTS and not (key.startswith("Cp") and key[2:].isdigit()):
            raise DomainError(f"unknown constant {key!r}")
        val = float(val)
        if not val > 0:
            raise DomainError(f"constant {key} must be positive", value=val)
        out[key] = val
    return out


def constant(consts: Mapping[str, float], key: str) -> float:
    if key in consts:
        return float(consts[key])
    if key.startswith("Cp"):
        return 1.0
    raise KeyError(key)


def C_one(n: int) -> float:
    """C1 = 2^(2n) (n-1)^(n-1) sqrt(2)."""
    return 2.0 ** (2 * n) * _pow0(n - 1, n - 1) * math.sqrt(2.0)


@dataclass(frozen=True, eq=False)
class Splitting:
    """A partially hyperbolic decomposition R^n = F + G of a matrix.

    ``A1`` and ``A2`` are the restrictions of A to F and G in the orthonormal
    bases ``F_basis`` and ``G_basis``.
    """

    A: np.ndarray
    F_basis: np.ndarray
    G_basis: np.ndarray
    M_AF: float
    m_AG: float
    g_A: float
    angle: float
    c_FG: float
    A1: np.ndarray
    A2: np.ndarray
    cut: float = 0.0

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def p(self) -> int:
        return self.F_basis.shape[1]

    @property
    def q(self) -> int:
        return self.G_basis.shape[1]

    @property
    def I_A(self) -> tuple[float, float]:
        return (self.M_AF, min(0.0, self.m_AG))

    @property
    def gamma_tilde(self) -> float:
        return 0.5 * (self.M_AF + min(0.0, self.m_AG))

    def contains(self, gamma: float) -> bool:
        lo, hi = self.I_A
        return lo < gamma < hi

    def conjugation(self) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(L, L_inv)``: coordinates in F x G and back."""
        M = np.hstack([self.F_basis, self.G_basis])
        return np.linalg.inv(M), M


def _spectral_gap(M_AF: float, m_AG: float, n: int) -> float:
    return 1.0 / _pow0(min(1.0, min(0.0, m_AG) - M_AF), n - 1)


def splitting_from_bases(A, F, G, *, cut: float = 0.0, check_tol: float = 1e-8) -> Splitting:
    """Build a Splitting from explicit spanning sets of F and G.

    Raises
    ------
    EmptySideError, SpectralError, NotPartiallyHyperbolicError
    """
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    F = np.asarray(F, dtype=float).reshape(n, -1)
    G = np.asarray(G, dtype=float).reshape(n, -1)
    if F.shape[1] == 0 or G.shape[1] == 0:
        raise EmptySideError("splitting has a trivial side", p=int(F.shape[1]), q=int(G.shape[1]))
    if F.shape[1] + G.shape[1] != n:
        raise SpectralError("dim F + dim G != n", p=int(F.shape[1]), q=int(G.shape[1]), n=n)
    BF = canonical_basis(F)
    BG = canonical_basis(G)
    scale = max(float(np.linalg.norm(A, 2)), 1e-300)
    A1 = BF.T @ A @ BF
    A2 = BG.T @ A @ BG
    resF = float(np.linalg.norm(A @ BF - BF @ A1, 2))
    resG = float(np.linalg.norm(A @ BG - BG @ A2, 2))
    if max(resF, resG) > check_tol * scale and max(resF, resG) > 1e-14:
        raise SpectralError("F or G is not A-invariant", residual_F=resF, residual_G=resG)
    angle, cFG = principal_angle(BF, BG)
    M_AF = float(np.linalg.eigvals(A1).real.max())
    m_AG = float(np.linalg.eigvals(A2).real.min())
    if not M_AF < min(0.0, m_AG):
        raise NotPartiallyHyperbolicError(
            "M(A|F) >= min(0, m(A|G))", M_AF=M_AF, m_AG=m_AG
        )
    return Splitting(
        A=A.copy(), F_basis=BF, G_basis=BG, M_AF=M_AF, m_AG=m_AG,
        g_A=_spectral_gap(M_AF, m_AG, n), angle=angle, c_FG=cFG, A1=A1, A2=A2, cut=cut,
    )


def build_splitting(sa: SpectralAnalysis, cut: float = 0.0) -> Splitting:
    """Split R^n into the generalized eigenspaces below and above ``cut``.

    Parameters
    ----------
    sa : SpectralAnalysis
    cut : float
        Real parts below ``cut`` go to F, the rest to G.

    Raises
    ------
    DomainError
        If an eigenvalue has real part equal to ``cut`` or a cluster straddles it.
    EmptySideError
        If F or G is trivial.
    NotPartiallyHyperbolicError
        If M(A|F) >= min(0, m(A|G)).
    """
    cut = float(cut)
    tol = sa.cluster_tol * max(1.0, sa.op_norm)
    below, above = [], []
    for i, B in enumerate(sa.gen_eigenspaces):
        re = sa.cluster_real_parts(i)
        if np.any(np.abs(re - cut) <= tol):
            raise DomainError("an eigenvalue real part equals the cut", cut=cut, real_parts=re.tolist())
        if np.all(re < cut):
            below.append(B)
        elif np.all(re > cut):
            above.append(B)
        else:
            raise DomainError("an eigenvalue cluster straddles the cut", cut=cut, real_parts=re.tolist())
    if not below or not above:
        raise EmptySideError(
            "no eigenvalue below the cut" if not below else "no eigenvalue above the cut", cut=cut
        )
    return splitting_from_bases(sa.matrix, np.hstack(below), np.hstack(above), cut=cut)


def dist_to_spectrum(sa: SpectralAnalysis, gamma: float) -> float:
    """Distance from gamma to the set of real parts of the spectrum."""
    return float(np.min(np.abs(float(gamma) - sa.eigenvalues.real)))


def d_A_gamma(sa: SpectralAnalysis, gamma: float) -> float:
    """d(A, gamma) = min(1, dist(gamma, Re Sp A))^(n-1)."""
    return _pow0(min(1.0, dist_to_spectrum(sa, gamma)), sa.n - 1)


def straightening_radius(lam: float, c_FG: float, K_A: float, M2_max: float, r: float,
                         C3: float = 1.0) -> float:
    """Radius of the ball contained in both chart domains.

    ``R = lam / (C3 c_FG^2 K_A) * min(lam / (K_A M2), r)``.
    """
    return lam / (C3 * c_FG ** 2 * K_A) * min(lam / (K_A * M2_max), r)


@dataclass(frozen=True)
class Thresholds:
    """Closed-form smallness thresholds at a decay rate ``gamma``.

    ``constants_used`` maps each threshold name to the tuple of implicit
    constant names entering it; ``constants`` holds their values.
    """

    gamma: float
    r: float
    M2_loc: float
    d_Agamma: float
    hyp3_bound: float
    prop_eps1_bound: float
    xi_gamma: float
    gamma_tilde: float
    d_A_gamma_tilde: float
    xi_tilde: float
    eta_tilde: float
    delta_tilde: float
    R_mu0: float
    lam: float
    constants: dict = field(default_factory=dict)
    constants_used: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        out = {k: getattr(self, k) for k in (
            "gamma", "r", "M2_loc", "d_Agamma", "hyp3_bound", "prop_eps1_bound", "xi_gamma",
            "gamma_tilde", "d_A_gamma_tilde", "xi_tilde", "eta_tilde", "delta_tilde", "R_mu0",
            "lam")}
        out["constants"] = dict(self.constants)
        out["constants_used"] = {k: list(v) for k, v in self.constants_used.items()}
        return out


def smallness_thresholds(split: Splitting, sa: SpectralAnalysis, gamma: float, M2_loc: float,
                         r: float, constants: Mapping[str, float] | None = None) -> Thresholds:
    """Evaluate every closed-form threshold for a splitting.

    Parameters
    ----------
    split, sa : Splitting, SpectralAnalysis
        Must describe the same matrix.
    gamma : float
        Decay rate in the open interval I_A.
    M2_loc : float
        ``max(1, sup of the derivatives of order 2..k)`` on the r-ball; >= 1.
    r : float
        Radius of the ball on which the field is controlled.
    constants : mapping, optional
        Overrides for the implicit constants.

    Raises
    ------
    DomainError
        If gamma is outside I_A, ``M2_loc < 1`` or ``r <= 0``.
    """
    gamma, M2, r = float(gamma), float(M2_loc), float(r)
    if not split.contains(gamma):
        raise DomainError("gamma is outside I_A", gamma=gamma, I_A=list(split.I_A))
    if not M2 >= 1.0:
        raise DomainError("M2_loc must be >= 1", M2_loc=M2)
    if not r > 0:
        raise DomainError("r must be positive", r=r)
    cst = resolve_constants(constants)
    n, K, g = sa.n, sa.K_A, split.g_A
    C1 = C_one(n)
    d = d_A_gamma(sa, gamma)
    gt = split.gamma_tilde
    s2 = math.sqrt(2.0)

    hyp3 = 1.0 / (2.0 ** (3 * n - 1) * _pow0(n - 1, n - 1) * s2 * K * g)
    eps1 = d / (C1 * K)
    xi_g = min(d / (cst["c1"] * C1 * K * M2), r / s2)
    xi_t = min(1.0 / (cst["c1"] * C1 * 2.0 ** (n - 1) * g * K * M2), r / s2)
    inner = min(1.0 / (g * K * M2), r)
    eta = inner / cst["C2"]
    delta = inner / (cst["C2"] * g * K)
    lam = _pow0(min(1.0, abs(split.M_AF)), n - 1)
    R = straightening_radius(lam, split.c_FG, K, M2, r, cst["C3"])
    used = {
        "hyp3_bound": (),
        "prop_eps1_bound": (),
        "xi_gamma": ("c1",),
        "xi_tilde": ("c1",),
        "eta_tilde": ("C2",),
        "delta_tilde": ("C2",),
        "R_mu0": ("C3",),
    }
    return Thresholds(
        gamma=gamma, r=r, M2_loc=M2, d_Agamma=d, hyp3_bound=hyp3, prop_eps1_bound=eps1,
        xi_gamma=xi_g, gamma_tilde=gt, d_A_gamma_tilde=d_A_gamma(sa, gt), xi_tilde=xi_t,
        eta_tilde=eta, delta_tilde=delta, R_mu0=R, lam=lam,
        constants={k: cst[k] for k in ("c1", "C2", "C3")}, constants_used=used,
    )


def adapted_truncation_size(split: Splitting, sa: SpectralAnalysis, z_norm, mu_norm,
                            constants: Mapping[str, float] | None = None):
    """Point-adapted truncation size xi(z, mu).

    ``4 C K_A g_A ((1 + C0 / (2^(n-1) C1)) ||z|| + ||mu||)``; vectorized.
    """
    cst = resolve_constants(constants)
    n = sa.n
    a = 1.0 + cst["C0"] / (2.0 ** (n - 1) * C_one(n))
    return 4.0 * cst["C"] * sa.K_A * split.g_A * (a * np.asarray(z_norm) + np.asarray(mu_norm))


def _norm_lookup(norms, k: int) -> float:
    # accepts a NormTable or a plain mapping order -> M_k
    if hasattr(norms, "Mk_loc_max"):
        table = norms.Mk_loc_max
    else:
        table = {int(key): max(1.0, float(v)) for key, v in dict(norms).items()}
    if k not in table:
        raise DomainError(f"norm table lacks order {k}", available=sorted(table))
    return float(table[k])


def phi_bound_rhs(split: Splitting, sa: SpectralAnalysis, norms, z_norm: float, mu_norm: float,
                  k: int, direction: str = "z", r: float | None = None,
                  constants: Mapping[str, float] | None = None) -> float:
    """Right-hand side of the order-k bound on the local graph map.

    Parameters
    ----------
    norms : NormTable or mapping
        Supplies ``M^_{k+1}`` (and ``M^_2``).
    z_norm, mu_norm : float
    k : int
        Derivative order, >= 0.
    direction : {'z', 'mu'}
        Only used for k = 1.
    r : float, optional
        Ball radius; taken from ``norms.ball_radius`` when omitted.

    Returns
    -------
    float
        The bound with ``C'_k`` (override ``Cp<k>``, default 1).
    """
    k = int(k)
    if k < 0:
        raise DomainError("order must be >= 0", k=k)
    if z_norm < 0 or mu_norm < 0:
        raise DomainError("norms must be nonnegative")
    cst = resolve_constants(constants)
    Ck = constant(cst, f"Cp{k}")
    g, K = split.g_A, sa.K_A
    M2 = _norm_lookup(norms, 2)
    if k == 0:
        return Ck * g ** 2 * K ** 2 * M2 * (z_norm + mu_norm) * z_norm
    if k == 1:
        if direction == "z":
            return Ck * g ** 2 * K ** 2 * M2 * (z_norm + mu_norm)
        if direction == "mu":
            return Ck * g * K * M2 * z_norm
        raise DomainError("direction must be 'z' or 'mu'", direction=direction)
    if r is None:
        r = getattr(norms, "ball_radius", None)
        if r is None:
            raise DomainError("ball radius r is required for k >= 2")
    Mk1 = _norm_lookup(norms, k + 1)
    base = g ** 2 * K ** 2 * max(g * K * M2, 1.0 / float(r)) ** (k - 1) * Mk1
    return Ck * base ** (2 * k - 1)
