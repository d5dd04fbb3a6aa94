"""
Riccati machinery and closed-form scalar references.

``solve_dare`` returns the unconstrained LQR value matrix P and gain K for the
stage cost x'Qx + 2x'Su + u'Ru, with the convention u = Kx. The scalar
oracles are the closed forms of the plant x+ = ax + u with cost x^2 + u^2 and
|u| <= u_bar; tests use them as ground truth for the set algorithms.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg, optimize

from . import conf
from .exceptions import DegenerateBeta, NotStabilizable, StructuralError

logger = logging.getLogger(__name__)

PSD_TOL = 1e-9


# =============================================================================
# STAGE COST
# =============================================================================

@dataclass(frozen=True, eq=False)
class StageCost:
    """l(x, u) = x'Qx + 2x'Su + u'Ru with [[Q, S], [S', R]] >= 0 and R > 0."""

    Q: np.ndarray
    R: np.ndarray
    S: np.ndarray = None

    def __post_init__(self):
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        R = np.atleast_2d(np.asarray(self.R, dtype=float))
        n_x, n_u = Q.shape[0], R.shape[0]
        S = np.zeros((n_x, n_u)) if self.S is None else np.asarray(self.S, dtype=float)
        S = S.reshape(n_x, n_u)
        if Q.shape != (n_x, n_x) or R.shape != (n_u, n_u):
            raise StructuralError(f"Q {Q.shape} and R {R.shape} must be square")
        block = np.block([[Q, S], [S.T, R]])
        if np.max(np.abs(block - block.T)) > 1e-10:
            raise StructuralError("stage cost weights are not symmetric")
        if np.linalg.eigvalsh(block)[0] < -PSD_TOL * max(1.0, np.max(np.abs(block))):
            raise StructuralError("[[Q, S], [S', R]] is not positive semidefinite")
        if np.linalg.eigvalsh(R)[0] <= 0.0:
            raise StructuralError("R must be positive definite")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "S", S)

    @property
    def n_x(self):
        return self.Q.shape[0]

    @property
    def n_u(self):
        return self.R.shape[0]

    def evaluate(self, x, u):
        x = np.asarray(x, dtype=float).reshape(-1)
        u = np.asarray(u, dtype=float).reshape(-1)
        return float(x @ self.Q @ x + 2.0 * x @ self.S @ u + u @ self.R @ u)

    def to_dict(self):
        return {"Q": self.Q.tolist(), "S": self.S.tolist(), "R": self.R.tolist()}


@dataclass(frozen=True, eq=False)
class RiccatiSolution:
    P: np.ndarray
    K: np.ndarray
    residual: float
    gain_residual: float = 0.0

    def closed_loop(self, A, B):
        return np.asarray(A, dtype=float) + np.asarray(B, dtype=float) @ self.K

    def to_dict(self):
        return {"P": self.P.tolist(), "K": self.K.tolist(),
                "residual": self.residual, "gain_residual": self.gain_residual}


def _system(A, B, cost):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    if A.shape != (cost.n_x, cost.n_x) or B.shape != (cost.n_x, cost.n_u):
        raise StructuralError(f"A {A.shape}, B {B.shape} do not match the stage cost")
    return A, B


def _gain(A, B, cost, P):
    cross = A.T @ P @ B + cost.S
    return -np.linalg.solve(cost.R + B.T @ P @ B, cross.T)


def dare_residual(A, B, cost, P):
    """Relative residual of P = A'PA + Q - (A'PB + S)(R + B'PB)^-1(A'PB + S)'."""
    cross = A.T @ P @ B + cost.S
    rhs = A.T @ P @ A + cost.Q - cross @ np.linalg.solve(cost.R + B.T @ P @ B, cross.T)
    return float(np.linalg.norm(P - rhs) / (1.0 + np.linalg.norm(P)))


def _fixed_point(A, B, cost, tol, max_iter, start=None):
    P = cost.Q.copy() if start is None else start.copy()
    for _ in range(max_iter):
        cross = A.T @ P @ B + cost.S
        following = A.T @ P @ A + cost.Q - cross @ np.linalg.solve(cost.R + B.T @ P @ B, cross.T)
        following = 0.5 * (following + following.T)
        if not np.all(np.isfinite(following)):
            raise NotStabilizable("Riccati iteration diverged")
        step = np.linalg.norm(following - P)
        P = following
        if step <= tol * (1.0 + np.linalg.norm(P)):
            return P
    raise NotStabilizable(f"Riccati iteration did not converge in {max_iter} iterations")


# =============================================================================
# DARE
# =============================================================================

def solve_dare(A, B, cost, tol=None, max_iter=None):
    """Stabilising solution of the discrete algebraic Riccati equation."""
    tol = conf.resolve(tol, "DARE_TOL")
    max_iter = conf.resolve(max_iter, "DARE_MAX_ITER")
    A, B = _system(A, B, cost)
    _warn_unobservable(A, cost.Q)

    try:
        P = linalg.solve_discrete_are(A, B, cost.Q, cost.R, s=cost.S)
    except (np.linalg.LinAlgError, ValueError) as exc:
        logger.warning("Schur solver failed (%s); falling back to fixed-point iteration", exc)
        P = _fixed_point(A, B, cost, tol, max_iter)
    P = 0.5 * (P + P.T)
    if dare_residual(A, B, cost, P) > tol:
        P = _fixed_point(A, B, cost, tol, max_iter, start=P)

    K = _gain(A, B, cost, P)
    residual = dare_residual(A, B, cost, P)
    gain_eq = (cost.R + B.T @ P @ B) @ K + (A.T @ P @ B + cost.S).T
    gain_residual = float(np.linalg.norm(gain_eq) / (1.0 + np.linalg.norm(P)))
    if np.linalg.eigvalsh(P)[0] <= 0.0:
        raise NotStabilizable("Riccati solution is not positive definite")
    radius = max(abs(np.linalg.eigvals(A + B @ K)))
    if radius >= 1.0:
        raise NotStabilizable(f"closed loop A + BK has spectral radius {radius:.6f}")
    logger.debug("DARE solved: residual %.2e, spectral radius %.4f", residual, radius)
    return RiccatiSolution(P, K, residual, gain_residual)


def _warn_unobservable(A, Q):
    n = A.shape[0]
    blocks = [Q]
    for _ in range(n - 1):
        blocks.append(blocks[-1] @ A)
    if np.linalg.matrix_rank(np.vstack(blocks)) < n:
        logger.warning("(A, Q) is not observable; P may be only semidefinite")


def policy_value(A, B, cost, K):
    """Value matrix of the fixed linear policy u = Kx (a discrete Lyapunov solve)."""
    A, B = _system(A, B, cost)
    K = np.asarray(K, dtype=float).reshape(cost.n_u, cost.n_x)
    A_cl = A + B @ K
    radius = max(abs(np.linalg.eigvals(A_cl)))
    if radius >= 1.0:
        raise NotStabilizable(f"gain does not stabilise: spectral radius {radius:.6f}")
    weight = cost.Q + cost.S @ K + K.T @ cost.S.T + K.T @ cost.R @ K
    P = linalg.solve_discrete_lyapunov(A_cl.T, weight)
    return 0.5 * (P + P.T)


def theta_min(P, R, B, beta):
    """Smallest admissible vertex-input weight (B'PB + R) / (1 - beta^2)."""
    if not 0.0 <= beta < 1.0:
        raise DegenerateBeta(f"beta must lie in [0, 1), got {beta}")
    P = np.atleast_2d(np.asarray(P, dtype=float))
    B = np.asarray(B, dtype=float).reshape(P.shape[0], -1)
    R = np.atleast_2d(np.asarray(R, dtype=float))
    return (B.T @ P @ B + R) / (1.0 - beta**2)


# =============================================================================
# SCALAR ORACLES
# =============================================================================

@dataclass(frozen=True)
class ScalarPlant:
    a: float
    u_bar: float

    def __post_init__(self):
        if self.a <= 0 or self.u_bar <= 0:
            raise StructuralError("scalar plant needs a > 0 and u_bar > 0")


@dataclass(frozen=True)
class ScalarOracles:
    plant: ScalarPlant
    beta: float
    K: float
    b: float
    m: float
    beta_threshold: float

    @property
    def whole_line(self):
        """The maximal beta-contractive set is the whole line."""
        return math.isinf(self.m)

    def c_N(self, N):
        """Admissible radius with the LQR invariant interval as terminal set."""
        return self._reach(self.b, N)

    def admissible_lower_bound(self, N):
        """Lower bound on the admissible radius with T(beta) as terminal set."""
        return self._reach(self.m, N)

    def _reach(self, radius, N):
        if N < 0:
            raise StructuralError("horizon must be non-negative")
        a, u_bar = self.plant.a, self.plant.u_bar
        return (radius + sum(a**i * u_bar for i in range(N))) / a**N


def _root(a):
    return math.sqrt(a**4 + 4.0)


def scalar_gain(a):
    s = _root(a)
    return -a * (a**2 + s) / (2.0 + a**2 + s)


def beta_threshold(a):
    return 2.0 * a / (2.0 + a**2 + _root(a))


def scalar_oracles(plant, beta):
    """Closed forms for x+ = ax + u, l = x^2 + u^2, |u| <= u_bar."""
    a, u_bar = plant.a, plant.u_bar
    s = _root(a)
    b = u_bar * (2.0 + a**2 + s) / (a * (a**2 + s))
    m = u_bar / (a - beta) if beta < min(a, 1.0) else math.inf
    return ScalarOracles(plant, beta, scalar_gain(a), b, m, beta_threshold(a))


def threshold_peak():
    """(a*, peak) maximising the beta threshold over a > 0."""
    result = optimize.minimize_scalar(lambda a: -beta_threshold(a), bounds=(1e-6, 10.0),
                                      method="bounded", options={"xatol": 1e-12})
    return float(result.x), float(-result.fun)
