"""Independent ODE oracle: trajectories, decay rates, invariance residuals.

Integration uses an adaptive embedded Runge-Kutta pair of order 8 (DOP853)
with its order-7 continuous extension, a code path unrelated to the
trapezoid quadrature of the path-space solver.
"""

from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np
from scipy.integrate import solve_ivp

from .errors import DegenerateWindowError, DomainError, IntegrationError
from .field import FieldFamily
from .spectral import canonical_basis


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Solution of x' = X(x, mu) on [0, t_end].

    Attributes
    ----------
    times : ndarray, shape (K,)
        Accepted integrator steps.
    states : ndarray, shape (K, n)
    tol : float
    field_id : str
    mu : ndarray
    dense : callable
        The integrator's continuous extension, ``dense(t) -> (n,)`` or
        ``(n, len(t))``.
    """

    times: np.ndarray
    states: np.ndarray
    tol: float
    field_id: str
    mu: np.ndarray
    dense: object

    def __call__(self, t) -> np.ndarray:
        """States at times ``t``, shape ``(n,)`` or ``(len(t), n)``."""
        t = np.asarray(t, dtype=float)
        t = np.clip(t, self.times[0], self.times[-1])
        out = self.dense(t)
        return out.T if t.ndim else out

    @property
    def t_end(self) -> float:
        return float(self.times[-1])

    def to_csv(self, dest) -> None:
        n = self.states.shape[1]
        header = ",".join(["t"] + [f"x{i + 1}" for i in range(n)])
        np.savetxt(dest, np.column_stack([self.times, self.states]), delimiter=",",
                   header=header, comments="", fmt="%.17g")


def integrate(f: FieldFamily, x0, mu=None, t_end: float = 10.0, tol: float = 1e-10,
              blowup: float = 1e8, field_id: str = "") -> Trajectory:
    """Integrate the flow of ``X(., mu)`` from ``x0``.

    Parameters
    ----------
    f : FieldFamily
    x0 : array_like, shape (n,)
    mu : array_like, optional
    t_end : float
        > 0.
    tol : float
        Relative per-step tolerance (absolute tolerance ``tol * 1e-3``).
    blowup : float
        Norm at which the orbit is declared escaping.

    Raises
    ------
    IntegrationError
        On blow-up or step-size collapse; ``details['escape_time']`` is the
        last time reached.
    """
    t_end = float(t_end)
    if not t_end > 0:
        raise DomainError("t_end must be positive", t_end=t_end)
    x0 = np.asarray(x0, dtype=float).reshape(f.n)
    mu_arr = None if f.s == 0 else np.asarray(mu, dtype=float).reshape(f.s)

    def rhs(_t, x):
        return f.evaluate(x, mu_arr)

    def escape(_t, x):
        return blowup - np.linalg.norm(x)

    escape.terminal = True
    sol = solve_ivp(rhs, (0.0, t_end), x0, method="DOP853", rtol=tol, atol=tol * 1e-3,
                    events=escape, dense_output=True)
    if sol.status == 1 or (sol.t_events and len(sol.t_events[0])):
        raise IntegrationError("orbit escaped", escape_time=float(sol.t[-1]), blowup=blowup)
    if sol.status != 0:
        raise IntegrationError("integrator failed", escape_time=float(sol.t[-1]),
                               message=str(sol.message))
    return Trajectory(times=sol.t, states=sol.y.T, tol=float(tol), field_id=field_id,
                      mu=np.zeros(0) if mu_arr is None else mu_arr, dense=sol.sol)


def decay_exponent(traj: Trajectory, window=None, n_samples: int = 200, center=None) -> float:
    """Least-squares slope of ``ln ||state(t) - center||`` over a time window.

    Raises
    ------
    DegenerateWindowError
        If the window is empty or the states vanish (e.g. an equilibrium).
    """
    t1, t2 = (0.0, traj.t_end) if window is None else (float(window[0]), float(window[1]))
    if not (0.0 <= t1 < t2 <= traj.t_end * (1 + 1e-12)):
        raise DegenerateWindowError("window outside the trajectory", window=[t1, t2])
    t = np.linspace(t1, min(t2, traj.t_end), n_samples)
    X = traj(t)
    if center is not None:
        X = X - np.asarray(center, dtype=float)
    nrm = np.linalg.norm(X, axis=1)
    if np.any(nrm <= 0) or np.ptp(np.log(np.maximum(nrm, 1e-300))) == 0.0:
        raise DegenerateWindowError("states do not decay or vanish on the window")
    slope, _ = np.polyfit(t, np.log(nrm), 1)
    return float(slope)


@dataclass(frozen=True)
class InvarianceResult:
    """Flow-invariance defect of the computed graph."""

    residual: float
    times: np.ndarray
    defects: np.ndarray
    trajectory: Trajectory

    def __float__(self) -> float:
        return self.residual


def graph_invariance_residual(gctx, z, mu=None, horizon: float = 10.0, tol: float = 1e-12,
                              n_samples: int = 41, offset=None) -> InvarianceResult:
    """Max over sampled times of ``||v(t) - phi(z(t), mu)||`` along the true flow.

    Integration starts at ``B_F z + B_G (phi(z, mu) + offset)``; a nonzero
    ``offset`` seeds the orbit off the graph.
    """
    from .graph import phi, phi_batch

    split = gctx.split
    z = np.asarray(z, dtype=float).reshape(split.p)
    v0 = phi(gctx, z, mu)
    if offset is not None:
        v0 = v0 + np.asarray(offset, dtype=float).reshape(split.q)
    x0 = split.F_basis @ z + split.G_basis @ v0
    traj = integrate(gctx.field, x0, mu, horizon, tol)
    times = np.linspace(0.0, horizon, n_samples)
    X = traj(times)
    L, _ = split.conjugation()
    W = X @ L.T
    Zt, Vt = W[:, :split.p], W[:, split.p:]
    MU = None if gctx.s == 0 else np.broadcast_to(np.asarray(mu, dtype=float), (n_samples, gctx.s))
    Pt = phi_batch(gctx, Zt, MU)
    defects = np.linalg.norm(Vt - Pt, axis=1)
    return InvarianceResult(float(defects.max()), times, defects, traj)


@dataclass(frozen=True)
class OmegaLimit:
    """Brute-force leaf label: the limit point of an orbit on the zero set."""

    point: np.ndarray
    G_coords: np.ndarray
    converged: bool
    cauchy_gap: float
    trajectory: Trajectory | None


def omega_limit_on_G(Y: FieldFamily, G_basis, x0, t_end: float = 40.0, tol: float = 1e-12,
                     cauchy_factor: float = 10.0) -> OmegaLimit:
    """Limit of the orbit of ``x0`` under a field vanishing on G.

    Returns the state at ``t_end`` (its G-coordinates in the canonical
    orthonormal basis of G in ``G_coords``) together with a Cauchy check
    ``||x(t_end) - x(t_end / 2)|| <= cauchy_factor * tol``.  Blow-up is
    reported as ``converged = False``.
    """
    G = np.asarray(G_basis, dtype=float).reshape(Y.n, -1)
    try:
        traj = integrate(Y, x0, None, t_end, tol)
    except IntegrationError:
        nan = np.full(Y.n, np.nan)
        return OmegaLimit(nan, np.full(G.shape[1], np.nan), False, math.inf, None)
    end = traj.states[-1]
    mid = traj(0.5 * t_end)
    gap = float(np.linalg.norm(end - mid))
    scale = max(1.0, float(np.linalg.norm(end)))
    Q = canonical_basis(G)
    return OmegaLimit(end, Q.T @ end, gap <= cauchy_factor * tol * scale, gap, traj)
