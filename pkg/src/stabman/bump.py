"""Plateau function chi and truncated families.

chi(u) = h(2 - u) / (h(2 - u) + h(u - 1)) with h(t) = exp(-1/t) for t > 0 and
h(t) = 0 otherwise, so chi = 1 on [0, 1], chi = 0 on [2, inf) and chi is
smooth.  Its derivatives are computed from Taylor series: h^(j)(t) =
P_j(1/t) exp(-1/t) with P_0 = 1 and P_{j+1}(s) = s^2 (P_j(s) - P_j'(s)).
"""

from __future__ import annotations

from functools import lru_cache
import itertools
import math

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy.optimize import minimize_scalar

from .errors import DomainError
from .field import FieldFamily, _split_args


@lru_cache(maxsize=None)
def _hpoly(j: int) -> np.ndarray:
    # coefficients (increasing powers of s) of P_j
    if j == 0:
        return np.array([1.0])
    P = _hpoly(j - 1)
    diff = npoly.polysub(P, npoly.polyder(P)) if len(P) > 1 else P
    return npoly.polymulx(npoly.polymulx(diff))


def plateau_jet(u, k_max: int = 0) -> np.ndarray:
    """Values of chi, chi', ..., chi^(k_max) at ``u``.

    Parameters
    ----------
    u : array_like
        Points, u >= 0 (negative values are treated like u <= 1).
    k_max : int

    Returns
    -------
    ndarray, shape ``(k_max + 1,) + shape(u)``
    """
    u0 = np.asarray(u, dtype=float)
    u = u0.reshape(-1)
    k_max = int(k_max)
    out = np.zeros((k_max + 1,) + u.shape)
    out[0] = np.where(u <= 1.0, 1.0, 0.0)
    mid = (u > 1.0) & (u < 2.0)
    if not np.any(mid):
        return out.reshape((k_max + 1,) + u0.shape)
    um = u[mid]
    sa = 1.0 / (2.0 - um)
    sb = 1.0 / (um - 1.0)
    m = np.minimum(sa, sb)
    ea = np.exp(-(sa - m))
    eb = np.exp(-(sb - m))
    fact = [math.factorial(j) for j in range(k_max + 1)]
    a = np.empty((k_max + 1, um.size))
    b = np.empty_like(a)
    with np.errstate(over="ignore", invalid="ignore"):
        for j in range(k_max + 1):
            P = _hpoly(j)
            # d^j/du^j h(2 - u) = (-1)^j h^(j)(2 - u)
            a[j] = (-1) ** j * npoly.polyval(sa, P) * ea / fact[j]
            b[j] = npoly.polyval(sb, P) * eb / fact[j]
    a = np.nan_to_num(a, nan=0.0, posinf=0.0, neginf=0.0)
    b = np.nan_to_num(b, nan=0.0, posinf=0.0, neginf=0.0)
    d = a + b
    c = np.empty_like(a)
    c[0] = a[0] / d[0]
    for j in range(1, k_max + 1):
        acc = a[j].copy()
        for i in range(1, j + 1):
            acc -= d[i] * c[j - i]
        c[j] = acc / d[0]
    for j in range(k_max + 1):
        out[j][mid] = c[j] * fact[j]
    return out.reshape((k_max + 1,) + u0.shape)


def chi(u) -> np.ndarray:
    """The plateau function itself."""
    return plateau_jet(u, 0)[0]


@lru_cache(maxsize=None)
def derivative_sup(k: int) -> float:
    """a_k = max(1, sup |chi^(k)|), by dense sampling plus local refinement."""
    k = int(k)
    if k == 0:
        return 1.0
    grid = np.arange(1.0, 2.0 + 5e-5, 1e-4)
    vals = np.abs(plateau_jet(grid, k)[k])
    best = float(vals.max())
    # refine around the largest few local maxima
    order = np.argsort(vals)[::-1][:8]
    for i in order:
        lo, hi = max(1.0, grid[i] - 1e-4), min(2.0, grid[i] + 1e-4)
        res = minimize_scalar(lambda t: -abs(plateau_jet(t, k)[k]), bounds=(lo, hi),
                              method="bounded", options={"xatol": 1e-12})
        best = max(best, float(-res.fun))
    return max(1.0, best)


class Plateau:
    """The fixed plateau function with cached derivative bounds a_k."""

    def __call__(self, u):
        return chi(u)

    def jet(self, u, k_max: int) -> np.ndarray:
        return plateau_jet(u, k_max)

    def derivative_sup(self, k: int) -> float:
        return derivative_sup(k)


@lru_cache(maxsize=None)
def _pair_partitions(j: int) -> tuple:
    """Set partitions of range(j) into blocks of size 1 or 2."""
    if j == 0:
        return ((),)
    out = []
    first = 0
    for rest in _pair_partitions(j - 1):
        shifted = tuple(tuple(i + 1 for i in blk) for blk in rest)
        out.append(((first,),) + shifted)
    for partner in range(1, j):
        others = [i for i in range(1, j) if i != partner]
        for rest in _pair_partitions(j - 2):
            mapped = tuple(tuple(others[i] for i in blk) for blk in rest)
            out.append(((first, partner),) + mapped)
    return tuple(out)


class TruncatedFamily(FieldFamily):
    """X^xi(x, mu) = A x + chi(||(x, mu)||^2 / xi^2) (X(x, mu) - A x).

    ``xi`` is a positive float, or an array broadcasting against the batch
    shape of the evaluation points (used for point-adapted truncation).
    """

    kind = "truncated"

    def __init__(self, base: FieldFamily, xi, r: float | None = None):
        self.base = base
        self.n, self.s = base.n, base.s
        self.A = base.A.copy()
        self.xi = np.asarray(xi, dtype=float) if np.ndim(xi) else float(xi)
        self.r = r
        self._Afull = np.hstack([self.A, np.zeros((self.n, self.s))])

    @property
    def support_radius(self) -> float:
        return float(np.max(self.xi)) * math.sqrt(2.0)

    def _xi(self, lead):
        xi = np.asarray(self.xi, dtype=float)
        return np.broadcast_to(xi, lead) if xi.ndim else xi

    def evaluate(self, x, mu=None) -> np.ndarray:
        x, mu = _split_args(x, mu, self.n, self.s)
        w2 = np.sum(x * x, axis=-1) + np.sum(mu * mu, axis=-1)
        xi = self._xi(w2.shape)
        c = chi(w2 / xi ** 2)
        lin = x @ self.A.T
        theta = self.base.evaluate(x, mu if self.s else None) - lin
        return lin + c[..., None] * theta

    def _chi_tensors(self, w, xi, k: int) -> list:
        # D^j of u -> chi(||w||^2 / xi^2) for j = 0..k, shape (..., N^j)
        u = np.sum(w * w, axis=-1) / xi ** 2
        jet = plateau_jet(u, k)
        xi2 = np.asarray(xi) ** 2
        grad = 2.0 * w / np.asarray(xi2)[..., None] if np.ndim(xi2) else 2.0 * w / xi2
        N = w.shape[-1]
        eye = np.eye(N)
        hess_scale = 2.0 / xi2
        out = [jet[0]]
        letters = "abcdefghijklmnop"
        for j in range(1, k + 1):
            T = np.zeros(w.shape[:-1] + (N,) * j)
            for part in _pair_partitions(j):
                ops, subs = [], []
                for blk in part:
                    if len(blk) == 1:
                        ops.append(grad)
                        subs.append("..." + letters[blk[0]])
                    else:
                        ops.append(eye)
                        subs.append(letters[blk[0]] + letters[blk[1]])
                term = np.einsum(",".join(subs) + "->..." + letters[:j], *ops)
                n_pairs = sum(1 for blk in part if len(blk) == 2)
                scale = jet[len(part)] * (np.asarray(hess_scale) ** n_pairs)
                T += np.asarray(scale)[(...,) + (None,) * j] * term
            out.append(T)
        return out

    def tensor(self, x, mu, k: int) -> np.ndarray:
        x, mu = _split_args(x, mu, self.n, self.s)
        if k == 0:
            return self.evaluate(x, mu if self.s else None)
        w = np.concatenate([x, mu], axis=-1)
        lead = w.shape[:-1]
        xi = self._xi(lead)
        ct = self._chi_tensors(w, xi, k)
        base_mu = mu if self.s else None
        th = []
        for j in range(k + 1):
            if j > self.base.max_degree():
                th.append(None)
                continue
            t = self.base.tensor(x, base_mu, j)
            if j == 0:
                t = t - x @ self.A.T
            elif j == 1:
                t = t - self._Afull
            th.append(t)
        N = self.N
        letters = "abcdefghijklmnop"
        res = np.zeros(lead + (self.n,) + (N,) * k)
        if k == 1:
            res += self._Afull
        for size in range(k + 1):
            t = th[k - size]
            if t is None:
                continue
            for S in itertools.combinations(range(k), size):
                Sc = [i for i in range(k) if i not in S]
                sub_c = "..." + "".join(letters[i] for i in S)
                sub_t = "...z" + "".join(letters[i] for i in Sc)
                res += np.einsum(f"{sub_c},{sub_t}->...z{letters[:k]}", ct[size], t)
        return res

    def is_linear(self) -> bool:
        return self.base.is_linear()

    def describe(self) -> dict:
        xi = self.xi if np.ndim(self.xi) == 0 else "per-point"
        return {"kind": self.kind, "n": self.n, "s": self.s, "xi": xi, "base": self.base.describe()}


def truncate_family(f: FieldFamily, xi, r: float, check: bool = True) -> TruncatedFamily:
    """Truncated family X^xi of ``f``.

    Parameters
    ----------
    f : FieldFamily
    xi : float or array
        Truncation size, in (0, min(1, r / sqrt(2))].
    r : float
        Radius of the ball on which ``f`` is controlled.

    Raises
    ------
    DomainError
        If ``xi`` is out of range.
    """
    r = float(r)
    if check:
        xi_arr = np.asarray(xi, dtype=float)
        cap = min(1.0, r / math.sqrt(2.0))
        if not (np.all(xi_arr > 0) and np.all(xi_arr <= cap * (1 + 1e-12))):
            raise DomainError("truncation size out of range", xi=float(np.max(xi_arr)), cap=cap)
    return TruncatedFamily(f, xi, r)
