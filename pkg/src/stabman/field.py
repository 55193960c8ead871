"""Smooth families X(x, mu) with exact jets, and sampled sup-norms over balls.

Three kinds of family share one interface (:class:`FieldFamily`):

* ``polynomial``: a polynomial in (x, mu);
* ``translated``: X(x, mu) = Y(mu0 + B_G mu + x) for a polynomial Y on R^n
  vanishing on the affine subspace mu0 + G, with mu in G-coordinates;
* ``truncated``: A x + chi(||(x, mu)||^2 / xi^2) (X - A x), see
  :mod:`stabman.bump`.

All evaluation methods accept arbitrary leading batch dimensions.
Derivative tensors are returned with shape ``(..., n, N, ..., N)`` where
``N = n + s`` and the k trailing axes are the differentiation slots, ordered
as (x, mu).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
import itertools
import math
from typing import Mapping, Sequence

import numpy as np
from scipy.special import ndtri
from scipy.stats import qmc

from .errors import DomainError, HypothesisViolationError

# --------------------------------------------------------------------------
# polynomials


class Polynomial:
    """Vector polynomial on R^n_in with values in R^n_out.

    Parameters
    ----------
    n_in, n_out : int
    out : sequence of int
        Output index of each term.
    exps : array_like, shape (T, n_in)
        Nonnegative integer exponents of each term.
    coef : sequence of float
    """

    def __init__(self, n_in: int, n_out: int, out=(), exps=(), coef=()):
        self.n_in = int(n_in)
        self.n_out = int(n_out)
        out = np.asarray(out, dtype=int).reshape(-1)
        exps = np.asarray(exps, dtype=int).reshape(-1, self.n_in)
        coef = np.asarray(coef, dtype=float).reshape(-1)
        if not (len(out) == len(exps) == len(coef)):
            raise DomainError("term arrays have inconsistent lengths")
        if np.any(exps < 0):
            raise DomainError("exponents must be nonnegative")
        if np.any((out < 0) | (out >= self.n_out)):
            raise DomainError("output index out of range")
        if not np.all(np.isfinite(coef)):
            raise DomainError("coefficients must be finite")
        # merge duplicate monomials, drop zeros
        merged: dict = {}
        for o, e, c in zip(out.tolist(), map(tuple, exps.tolist()), coef.tolist()):
            key = (o, e)
            merged[key] = merged.get(key, 0.0) + c
        keys = sorted(k for k, c in merged.items() if c != 0.0)
        self.out = np.array([k[0] for k in keys], dtype=int)
        self.exps = np.array([k[1] for k in keys], dtype=int).reshape(-1, self.n_in)
        self.coef = np.array([merged[k] for k in keys], dtype=float)
        self._partials: dict = {}

    @property
    def n_terms(self) -> int:
        return len(self.coef)

    @property
    def degree(self) -> int:
        return int(self.exps.sum(axis=1).max()) if self.n_terms else 0

    def is_zero(self) -> bool:
        return self.n_terms == 0

    def __call__(self, W) -> np.ndarray:
        W = np.asarray(W, dtype=float)
        lead = W.shape[:-1]
        if self.n_terms == 0:
            return np.zeros(lead + (self.n_out,))
        emax = int(self.exps.max())
        # powers[e][..., j] = W_j ** e
        powers = [np.ones(lead + (self.n_in,)), W]
        for e in range(2, emax + 1):
            powers.append(powers[-1] * W)
        res = np.zeros(lead + (self.n_out,))
        for o, e, c in zip(self.out, self.exps, self.coef):
            m = None
            for j in np.flatnonzero(e):
                f = powers[e[j]][..., j]
                m = f if m is None else m * f
            res[..., o] += c if m is None else c * m
        return res

    def partial(self, idx: Sequence[int]) -> "Polynomial":
        """Partial derivative along the (sorted) multi-index ``idx``."""
        key = tuple(sorted(int(i) for i in idx))
        if key in self._partials:
            return self._partials[key]
        if not key:
            return self
        head, last = key[:-1], key[-1]
        P = self.partial(head)
        e = P.exps[:, last]
        keep = e > 0
        new_exps = P.exps[keep].copy()
        new_exps[:, last] -= 1
        D = Polynomial(self.n_in, self.n_out, P.out[keep], new_exps, P.coef[keep] * e[keep])
        self._partials[key] = D
        return D

    def tensor(self, W, k: int) -> np.ndarray:
        """Symmetric k-th derivative tensor, shape ``(..., n_out, n_in, ..., n_in)``."""
        W = np.asarray(W, dtype=float)
        lead = W.shape[:-1]
        shape = lead + (self.n_out,) + (self.n_in,) * k
        if k == 0:
            return self(W)
        T = np.zeros(shape)
        if k > self.degree:
            return T
        for combo in itertools.combinations_with_replacement(range(self.n_in), k):
            D = self.partial(combo)
            if D.is_zero():
                continue
            val = D(W)
            for perm in set(itertools.permutations(combo)):
                T[(Ellipsis, slice(None)) + perm] = val
        return T

    def terms(self) -> list[dict]:
        return [
            {"out": int(o), "exps": [int(v) for v in e], "coef": float(c)}
            for o, e, c in zip(self.out, self.exps, self.coef)
        ]


def polynomial_from_terms(terms, n_in: int, n_out: int) -> Polynomial:
    """Build a Polynomial from config-style dicts ``{out, exps, coef}``."""
    out, exps, coef = [], [], []
    for t in terms:
        e = list(t["exps"])
        if len(e) != n_in:
            raise DomainError("term has wrong number of exponents", term=dict(t), expected=n_in)
        out.append(int(t["out"]))
        exps.append(e)
        coef.append(float(t["coef"]))
    return Polynomial(n_in, n_out, out, np.array(exps, dtype=int).reshape(-1, n_in), coef)


# --------------------------------------------------------------------------
# families


def _split_args(x, mu, n: int, s: int):
    x = np.asarray(x, dtype=float)
    if x.shape[-1:] != (n,):
        raise DomainError("x has the wrong trailing dimension", expected=n, shape=list(x.shape))
    if s == 0:
        mu = np.zeros(x.shape[:-1] + (0,))
    else:
        if mu is None:
            raise DomainError("this family needs a parameter mu")
        mu = np.asarray(mu, dtype=float)
        if mu.ndim == 0:
            mu = mu.reshape(1)
        if mu.shape[-1:] != (s,):
            raise DomainError("mu has the wrong trailing dimension", expected=s, shape=list(mu.shape))
    lead = np.broadcast_shapes(x.shape[:-1], mu.shape[:-1])
    x = np.broadcast_to(x, lead + (n,))
    mu = np.broadcast_to(mu, lead + (s,))
    return x, mu


def contract(T: np.ndarray, directions: Sequence) -> np.ndarray:
    """Apply a derivative tensor ``(..., m, N, ..., N)`` to direction vectors."""
    for d in reversed(list(directions)):
        T = T @ np.asarray(d, dtype=float)
    return T


class FieldFamily:
    """Smooth family X(x, mu) on R^n x R^s with exact jets.

    Subclasses implement :meth:`evaluate` and :meth:`tensor`.

    Attributes
    ----------
    n, s : int
        Phase-space and parameter dimensions.
    kind : str
    A : ndarray, shape (n, n)
        ``d_x X(0, 0)``.
    """

    kind = "abstract"
    n: int
    s: int

    @property
    def N(self) -> int:
        return self.n + self.s

    @property
    def origin_diff(self) -> np.ndarray:
        return self.A

    def evaluate(self, x, mu=None) -> np.ndarray:
        raise NotImplementedError

    def tensor(self, x, mu, k: int) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, x, mu=None) -> np.ndarray:
        return self.evaluate(x, mu)

    def jacobian(self, x, mu=None) -> np.ndarray:
        """Full first derivative in (x, mu), shape ``(..., n, n + s)``."""
        return self.tensor(x, mu, 1)

    def derivative(self, x, mu, directions: Sequence) -> np.ndarray:
        """k-linear derivative at (x, mu) applied to k directions in R^(n+s)."""
        k = len(directions)
        if k == 0:
            return self.evaluate(x, mu)
        return contract(self.tensor(x, mu, k), directions)

    def is_linear(self) -> bool:
        """True when X(x, mu) = A x identically."""
        return False

    def max_degree(self) -> float:
        """Degree bound; ``inf`` when derivatives of every order may be nonzero."""
        return math.inf

    def describe(self) -> dict:
        return {"kind": self.kind, "n": self.n, "s": self.s}


class PolynomialFamily(FieldFamily):
    """Polynomial family in the joint variable (x, mu)."""

    kind = "polynomial"

    def __init__(self, n: int, s: int, poly: Polynomial, check: bool = True):
        if poly.n_in != n + s or poly.n_out != n:
            raise DomainError("polynomial has the wrong shape for the family")
        self.n, self.s, self.poly = int(n), int(s), poly
        if check:
            self._check_origin()
        W0 = np.zeros(n + s)
        self.A = poly.tensor(W0, 1)[:, :n].copy()

    def _check_origin(self):
        n = self.n
        bad = [(o, c) for o, e, c in zip(self.poly.out, self.poly.exps, self.poly.coef)
               if not np.any(e[:n])]
        if bad:
            rng = np.random.default_rng(0)
            mus = rng.uniform(-1.0, 1.0, size=(64, self.s))
            vals = np.linalg.norm(self.evaluate(np.zeros((64, n)), mus), axis=-1)
            j = int(np.argmax(vals))
            raise HypothesisViolationError(
                "X(0, mu) does not vanish", mu=mus[j].tolist(), value=float(vals[j]),
            )

    def evaluate(self, x, mu=None) -> np.ndarray:
        x, mu = _split_args(x, mu, self.n, self.s)
        return self.poly(np.concatenate([x, mu], axis=-1))

    def tensor(self, x, mu, k: int) -> np.ndarray:
        x, mu = _split_args(x, mu, self.n, self.s)
        return self.poly.tensor(np.concatenate([x, mu], axis=-1), k)

    def is_linear(self) -> bool:
        # every term of degree one and in x only
        if self.poly.n_terms == 0:
            return True
        deg = self.poly.exps.sum(axis=1)
        return bool(np.all(deg == 1) and not np.any(self.poly.exps[:, self.n:]))

    def max_degree(self) -> float:
        return float(self.poly.degree)

    def describe(self) -> dict:
        return {"kind": self.kind, "n": self.n, "s": self.s, "terms": self.poly.terms()}


class TranslatedFamily(FieldFamily):
    """X(x, mu) = Y(mu0 + B_G mu + x), mu given in coordinates of G."""

    kind = "translated"

    def __init__(self, Y: Polynomial, G_basis, mu0, check: bool = True, check_radius: float = 1.0):
        n = Y.n_in
        if Y.n_out != n:
            raise DomainError("Y must map R^n to R^n")
        G = np.asarray(G_basis, dtype=float).reshape(n, -1)
        self.n, self.s = n, G.shape[1]
        self.Y, self.G_basis = Y, G
        self.mu0 = np.asarray(mu0, dtype=float).reshape(n)
        self._J = np.hstack([np.eye(n), G])
        if check:
            self._check_zero_set(check_radius)
        self.A = Y.tensor(self.mu0, 1).copy()

    def _check_zero_set(self, radius: float):
        rng = np.random.default_rng(0)
        m = rng.uniform(-1.0, 1.0, size=(256, self.s)) * radius
        pts = self.mu0 + m @ self.G_basis.T
        vals = np.linalg.norm(self.Y(pts), axis=-1)
        scale = max(1.0, float(np.max(np.abs(self.Y.coef), initial=0.0)))
        j = int(np.argmax(vals)) if len(vals) else 0
        if len(vals) and vals[j] > 1e-12 * scale:
            raise HypothesisViolationError(
                "Y does not vanish on the subspace G", mu=pts[j].tolist(), value=float(vals[j]),
            )

    def _point(self, x, mu):
        x, mu = _split_args(x, mu, self.n, self.s)
        return self.mu0 + mu @ self.G_basis.T + x

    def evaluate(self, x, mu=None) -> np.ndarray:
        return self.Y(self._point(x, mu))

    def tensor(self, x, mu, k: int) -> np.ndarray:
        y = self._point(x, mu)
        T = self.Y.tensor(y, k)
        lead = y.ndim - 1
        for _ in range(k):
            T = np.tensordot(T, self._J, axes=([lead + 1], [0]))
        return T

    def is_linear(self) -> bool:
        return self.Y.degree <= 1

    def max_degree(self) -> float:
        return float(self.Y.degree)

    def describe(self) -> dict:
        return {
            "kind": self.kind, "n": self.n, "s": self.s, "Y_terms": self.Y.terms(),
            "G": self.G_basis.tolist(), "mu0": self.mu0.tolist(),
        }


def polynomial_family(n: int, s: int, terms) -> PolynomialFamily:
    """Family from config-style term dicts over the joint variable (x, mu)."""
    return PolynomialFamily(n, s, polynomial_from_terms(terms, n + s, n))


def translated_family(Y, G, mu0=None, check_radius: float = 1.0) -> TranslatedFamily:
    """X(x, mu) = Y(mu0 + B_G mu + x) for a polynomial Y vanishing on mu0 + G.

    ``Y`` may be a :class:`Polynomial`, a ``PolynomialFamily`` with s = 0 or a
    ``TranslatedFamily`` with s = 0 (whose underlying shifted polynomial is
    used).  ``G`` is a spanning set (columns) and is orthonormalized.
    """
    from .spectral import canonical_basis

    if isinstance(Y, PolynomialFamily):
        Y = Y.poly
    if not isinstance(Y, Polynomial):
        raise DomainError("Y must be a polynomial")
    n = Y.n_in
    G = np.asarray(G, dtype=float).reshape(n, -1)
    B = canonical_basis(G) if G.shape[1] else G
    mu0 = np.zeros(n) if mu0 is None else np.asarray(mu0, dtype=float).reshape(n)
    return TranslatedFamily(Y, B, mu0, check_radius=check_radius)


def build_family(spec: Mapping) -> FieldFamily:
    """Build a family from a config mapping.

    Polynomial kind::

        {"kind": "polynomial", "n": 2, "s": 0,
         "terms": [{"out": 0, "exps": [1, 0], "coef": -1.0}, ...]}

    Translated kind (Y on R^n, G spanned by columns, optional mu0)::

        {"kind": "translated", "n": 2, "Y": [...terms over x...],
         "G": [[0.0], [1.0]], "mu0": [0.0, 0.0]}
    """
    kind = spec.get("kind", "polynomial")
    n = int(spec["n"])
    if kind == "polynomial":
        return polynomial_family(n, int(spec.get("s", 0)), spec.get("terms", []))
    if kind == "translated":
        Y = polynomial_from_terms(spec.get("Y", []), n, n)
        return translated_family(Y, np.asarray(spec["G"], dtype=float), spec.get("mu0"))
    raise DomainError(f"unknown field kind {kind!r}")


def eval_derivative(f: FieldFamily, point, k: int, directions: Sequence = ()) -> np.ndarray:
    """k-th derivative of ``f`` at ``point = (x, mu)`` applied to ``directions``.

    Parameters
    ----------
    f : FieldFamily
    point : tuple (x, mu)
        ``mu`` may be ``None`` when s = 0.
    k : int
    directions : sequence of k vectors in R^(n+s)
    """
    if len(directions) != k:
        raise DomainError("need exactly k directions", k=k, got=len(directions))
    x, mu = point
    if k == 0:
        return f.evaluate(x, mu)
    return f.derivative(x, mu, directions)


# --------------------------------------------------------------------------
# sampled norms


def multilinear_norm(T: np.ndarray, k: int, rng: np.random.Generator, starts: int = 3,
                     iters: int = 25) -> np.ndarray:
    """Subordinate norm of k-linear maps, estimated by block ascent.

    ``T`` has shape ``(P, m, N, ..., N)``.  Each block update replaces one
    direction by the top right singular vector of the matrix obtained by
    contracting all other slots, so the value never decreases.  Exact for
    k = 1.  Returns shape ``(P,)``.
    """
    P, m = T.shape[:2]
    N = T.shape[-1] if k else 1
    if k == 0:
        return np.linalg.norm(T, axis=1)
    if k == 1:
        return np.linalg.norm(T, ord=2, axis=(1, 2))
    letters = "bcdefghijklmnopqrstuvwxyz"[:k]
    src = "pa" + letters
    best = np.zeros(P)
    for st in range(starts + 1):
        if st == 0:
            # deterministic start from the largest fibre
            flat = np.abs(T).reshape(P, -1).argmax(axis=1)
            idx = np.unravel_index(flat, T.shape[1:])
            d = [np.eye(N)[idx[1 + j]] for j in range(k)]
        else:
            d = []
            for _ in range(k):
                v = rng.standard_normal((P, N))
                d.append(v / np.linalg.norm(v, axis=1, keepdims=True))
        val = np.zeros(P)
        for _ in range(iters):
            prev = val
            for i in range(k):
                ops = [T]
                subs = [src]
                for j in range(k):
                    if j != i:
                        ops.append(d[j])
                        subs.append("p" + letters[j])
                Mi = np.einsum(",".join(subs) + "->pa" + letters[i], *ops)
                _, sv, vt = np.linalg.svd(Mi)
                d[i] = vt[:, 0, :]
                val = sv[:, 0]
            if np.all(val - prev <= 1e-14 * np.maximum(val, 1e-300)):
                break
        best = np.maximum(best, val)
    return best


def ball_points(dim: int, r: float, budget: int, seed: int, center=None) -> np.ndarray:
    """Quasi-random points of the closed ball plus their projections on the sphere.

    Returns ``2 * budget`` points: ``budget`` scrambled-Sobol points mapped to
    the ball (Gaussian directions, radius ``r u^(1/dim)``), followed by the
    same directions at radius ``r``.  Prefixes are nested in ``budget``.
    """
    eng = qmc.Sobol(d=dim + 1, scramble=True, seed=seed)
    m = int(math.ceil(math.log2(max(budget, 1))))
    U = eng.random_base2(m)[:budget]
    eps = 1e-12
    G = ndtri(np.clip(U[:, :dim], eps, 1 - eps))
    nrm = np.linalg.norm(G, axis=1, keepdims=True)
    nrm[nrm == 0] = 1.0
    D = G / nrm
    rad = r * U[:, dim:] ** (1.0 / dim)
    pts = np.vstack([D * rad, D * r])
    if center is not None:
        pts = pts + np.asarray(center, dtype=float)
    return pts


@dataclass(frozen=True)
class NormTable:
    """Sampled sup-norms of derivatives over a closed ball.

    Attributes
    ----------
    ball_radius : float
    M1_loc : float
        Sup of ``||d_x X - A||``.
    Mk_raw : dict
        Sup of ``||D^k X||`` for each order k >= 2 separately.
    Mk_loc : dict
        Running sup over orders 2..k.
    Mk_loc_max : dict
        ``max(1, Mk_loc)``.
    sample_budget : int
    is_lower_bound : bool
        Always true: a sampled sup underestimates the true sup.
    seed : int
    """

    ball_radius: float
    M1_loc: float
    Mk_raw: dict
    Mk_loc: dict
    Mk_loc_max: dict
    sample_budget: int
    is_lower_bound: bool = True
    seed: int = 0

    @property
    def M2_hat(self) -> float:
        return self.Mk_loc_max.get(2, 1.0)

    def as_dict(self) -> dict:
        return {
            "ball_radius": self.ball_radius, "M1_loc": self.M1_loc,
            "Mk_raw": {str(k): v for k, v in self.Mk_raw.items()},
            "Mk_loc": {str(k): v for k, v in self.Mk_loc.items()},
            "Mk_loc_max": {str(k): v for k, v in self.Mk_loc_max.items()},
            "sample_budget": self.sample_budget, "is_lower_bound": self.is_lower_bound,
            "seed": self.seed,
        }


def sampled_norms(f: FieldFamily, r: float, k_max: int = 3, budget: int = 1024, seed: int = 0,
                  chunk: int = 2048) -> NormTable:
    """Sampled sup over the closed r-ball of ``||d_x X - A||`` and ``||D^k X||``.

    Parameters
    ----------
    f : FieldFamily
    r : float
        Ball radius in R^n x R^s (Euclidean norm on the joint variable).
    k_max : int
        Highest derivative order (>= 2).
    budget : int
        Number of quasi-random interior points (sphere copies are added).
    seed : int

    Returns
    -------
    NormTable
        Deterministic given ``seed``; flagged as a lower bound.
    """
    r = float(r)
    if not r > 0:
        raise DomainError("r must be positive", r=r)
    k_max = max(2, int(k_max))
    n, N = f.n, f.N
    W = ball_points(N, r, int(budget), int(seed))
    rng = np.random.default_rng(seed)
    deg = f.max_degree()
    m1 = 0.0
    raw = {k: 0.0 for k in range(2, k_max + 1)}
    for a in range(0, len(W), chunk):
        Wc = W[a:a + chunk]
        x, mu = Wc[:, :n], Wc[:, n:]
        J = f.tensor(x, mu if f.s else None, 1)[:, :, :n] - f.A
        m1 = max(m1, float(np.linalg.norm(J, ord=2, axis=(1, 2)).max(initial=0.0)))
        for k in range(2, k_max + 1):
            if k > deg:
                continue
            T = f.tensor(x, mu if f.s else None, k)
            raw[k] = max(raw[k], float(multilinear_norm(T, k, rng).max(initial=0.0)))
    if f.is_linear():
        m1 = 0.0
        raw = {k: 0.0 for k in raw}
    running, loc, locmax = 0.0, {}, {}
    for k in range(2, k_max + 1):
        running = max(running, raw[k])
        loc[k] = running
        locmax[k] = max(1.0, running)
    return NormTable(
        ball_radius=r, M1_loc=m1, Mk_raw=raw, Mk_loc=loc, Mk_loc_max=locmax,
        sample_budget=int(budget), is_lower_bound=True, seed=int(seed),
    )
