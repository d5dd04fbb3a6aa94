"""
Terminal ingredients built on a configuration-constrained template.

The decision vector of every problem here is z = (y, ys, v_1, ..., v_v):

- y:  offset of the cc-polytope P(y) that covers x,
- ys: offset of an LQR-invariant cc-polytope P(ys) (ys in Y_LQR),
- v_i: input assigned to vertex V_i y.

``TerminalBlock`` stores the constraint rows as Ax x + Az z <= b so the same
rows serve the stand-alone terminal problems and the MPC terminal stage.
Rows, in order:

    Fx <= y
    F(A V_i y + B v_i) <= beta y + (1 - beta) ys      for every vertex i
    Ey <= 0
    F_X V_i y <= y_X,  F_U v_i <= y_U                   for every vertex i
    F(A + BK) V_i ys <= ys                              for every vertex i
    E ys <= 0
    F_X V_i ys <= y_X,  F_U K V_i ys <= y_U             for every vertex i
"""

import enum
import logging
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import conf
from .exceptions import (
    ConfigurationViolated,
    DegenerateBeta,
    Indeterminate,
    NotInPolytope,
    StructuralError,
)
from .polytope import HPolytope
from .qpcore import QpStatus, QuadraticProgram, solve_lp, solve_qp
from .regulator import policy_value, solve_dare, theta_min

logger = logging.getLogger(__name__)

PSD_TOL = 1e-9
CERTIFICATE_TOL = 1e-7


def _psd(M, name):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[0] != M.shape[1] or np.max(np.abs(M - M.T), initial=0.0) > 1e-10:
        raise StructuralError(f"{name} must be a symmetric square matrix")
    if M.size and np.linalg.eigvalsh(M)[0] < -PSD_TOL:
        raise StructuralError(f"{name} is not positive semidefinite")
    return M


@dataclass(frozen=True, eq=False)
class TerminalBlock:
    """Rows Ax x + Az z <= b and the quadratic weight H of z (1/2 z'Hz)."""

    Ax: np.ndarray
    Az: np.ndarray
    b: np.ndarray
    H: np.ndarray

    @property
    def rows(self):
        return self.Az.shape[0]

    @property
    def n_vars(self):
        return self.Az.shape[1]

    def violation(self, x, z):
        """Largest scaled row violation at (x, z)."""
        excess = self.Ax @ x + self.Az @ z - self.b
        return float(np.max(excess / (1.0 + np.abs(self.b)), initial=0.0))


# =============================================================================
# DESIGN
# =============================================================================

@dataclass(frozen=True, eq=False)
class TerminalDesign:
    template: object
    A: np.ndarray
    B: np.ndarray
    X: HPolytope
    U: HPolytope
    cost: object
    K: np.ndarray
    P: np.ndarray
    beta: float
    Gamma: np.ndarray
    Theta: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.asarray(self.B, dtype=float).reshape(A.shape[0], -1)
        n_x, n_u = B.shape
        if self.template.n != n_x or self.X.n != n_x or self.U.n != n_u:
            raise StructuralError("template, X, U and (A, B) dimensions disagree")
        if not 0.0 <= self.beta <= 1.0:
            raise DegenerateBeta(f"beta must lie in [0, 1], got {self.beta}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "K", np.asarray(self.K, dtype=float).reshape(n_u, n_x))
        object.__setattr__(self, "P", _psd(self.P, "P"))
        Gamma = _psd(self.Gamma, "Gamma")
        Theta = _psd(self.Theta, "Theta")
        if Gamma.shape != (self.template.f,) * 2 or Theta.shape != (n_u, n_u):
            raise StructuralError("Gamma must be f x f and Theta n_u x n_u")
        object.__setattr__(self, "Gamma", Gamma)
        object.__setattr__(self, "Theta", Theta)

    @property
    def n_x(self):
        return self.A.shape[0]

    @property
    def n_u(self):
        return self.B.shape[1]

    @property
    def n_vars(self):
        return 2 * self.template.f + self.template.v * self.n_u

    @property
    def claims_descent(self):
        """beta < 1 and Theta >= theta_min, the premise of the descent guarantee."""
        if self.beta >= 1.0:
            return False
        gap = self.Theta - theta_min(self.P, self.cost.R, self.B, self.beta)
        return bool(np.linalg.eigvalsh(gap)[0] >= -PSD_TOL * max(1.0, np.max(np.abs(self.Theta))))

    @cached_property
    def vertex_gains(self):
        """K V_i for every vertex, shape (v, n_u, f)."""
        return np.einsum("uk,ikf->iuf", self.K, self.template.V)

    def split(self, z):
        """(y, ys, v) from a decision vector; v has shape (v, n_u)."""
        f = self.template.f
        z = np.asarray(z, dtype=float)
        return z[:f], z[f:2 * f], z[2 * f:].reshape(self.template.v, self.n_u)

    def join(self, y, ys, v):
        return np.concatenate([np.asarray(y, dtype=float), np.asarray(ys, dtype=float),
                               np.asarray(v, dtype=float).reshape(-1)])

    def vertex_inputs(self, y):
        """(K V_1 y, ..., K V_v y)."""
        return self.vertex_gains @ np.asarray(y, dtype=float)

    @cached_property
    def block(self):
        return self._build_block(with_tube=True)

    @cached_property
    def lqr_block(self):
        return self._build_block(with_tube=False)

    def _build_block(self, with_tube):
        t = self.template
        f, nv, n_u, n_x = t.f, t.v, self.n_u, self.n_x
        n_z = self.n_vars if with_tube else f
        ys_cols = slice(f, 2 * f) if with_tube else slice(0, f)
        y_cols = slice(0, f)
        eye = np.eye(f)
        Ax, Az, b = [], [], []

        def add(ax, az, rhs):
            rows = az.shape[0]
            Ax.append(np.zeros((rows, n_x)) if ax is None else ax)
            Az.append(az)
            b.append(np.broadcast_to(rhs, (rows,)).astype(float))

        def cols(block, where):
            az = np.zeros((block.shape[0], n_z))
            az[:, where] = block
            return az

        if with_tube:
            add(t.F, cols(-eye, y_cols), 0.0)
            for i in range(nv):
                az = np.zeros((f, n_z))
                az[:, y_cols] = t.F @ self.A @ t.V[i] - self.beta * eye
                az[:, ys_cols] = -(1.0 - self.beta) * eye
                az[:, self._v_cols(i)] = t.F @ self.B
                add(None, az, 0.0)
            add(None, cols(t.E, y_cols), 0.0)
            for i in range(nv):
                add(None, cols(self.X.F @ t.V[i], y_cols), self.X.y)
            for i in range(nv):
                az = np.zeros((self.U.m, n_z))
                az[:, self._v_cols(i)] = self.U.F
                add(None, az, self.U.y)
        else:
            add(t.F, cols(-eye, ys_cols), 0.0)

        A_cl = self.A + self.B @ self.K
        for i in range(nv):
            add(None, cols(t.F @ A_cl @ t.V[i] - eye, ys_cols), 0.0)
        add(None, cols(t.E, ys_cols), 0.0)
        for i in range(nv):
            add(None, cols(self.X.F @ t.V[i], ys_cols), self.X.y)
        for i in range(nv):
            add(None, cols(self.U.F @ self.vertex_gains[i], ys_cols), self.U.y)

        H = np.zeros((n_z, n_z))
        if with_tube:
            G = np.zeros((f, n_z))
            G[:, y_cols] = eye
            G[:, ys_cols] = -eye
            D = np.zeros((nv * n_u, n_z))
            D[:, y_cols] = -self.vertex_gains.reshape(nv * n_u, f)
            D[:, 2 * f:] = np.eye(nv * n_u)
            H = 2.0 * (G.T @ self.Gamma @ G + D.T @ np.kron(np.eye(nv), self.Theta) @ D)
            H = 0.5 * (H + H.T)
        return TerminalBlock(np.vstack(Ax), np.vstack(Az), np.concatenate(b), H)

    def _v_cols(self, i):
        start = 2 * self.template.f + i * self.n_u
        return slice(start, start + self.n_u)


def design_terminal(template, A, B, X, U, cost, beta, Gamma=None, Theta=None, K=None, P=None):
    """
    Assemble a TerminalDesign with the usual defaults.

    K and P come from the DARE unless given; a given K without P takes the
    value matrix of that policy. Gamma defaults to the identity and Theta to
    theta_min(P, R, B, beta).
    """
    if K is None:
        riccati = solve_dare(A, B, cost)
        K, P = riccati.K, (riccati.P if P is None else P)
    elif P is None:
        P = policy_value(A, B, cost, K)
    if Gamma is None:
        Gamma = np.eye(template.f)
    if Theta is None or (isinstance(Theta, str) and Theta == "theta_min"):
        Theta = theta_min(P, cost.R, B, beta)
    return TerminalDesign(template, A, B, X, U, cost, K, P, beta, Gamma, Theta)


# =============================================================================
# MEMBERSHIP
# =============================================================================

class Verdict(enum.Enum):
    MEMBER = "member"
    OUTSIDE = "outside"
    INDETERMINATE = "indeterminate"


@dataclass(frozen=True, eq=False)
class Membership:
    verdict: Verdict
    y: np.ndarray = None
    v: np.ndarray = None
    ys: np.ndarray = None

    def __bool__(self):
        return self.verdict is Verdict.MEMBER


def _verdict(status):
    if status is QpStatus.OPTIMAL:
        return Verdict.MEMBER
    if status is QpStatus.INFEASIBLE:
        return Verdict.OUTSIDE
    return Verdict.INDETERMINATE


def ylqr_feasibility(design, ys, tol=None):
    """ys in Y_LQR: P(ys) is an invariant cc-polytope under u = Kx inside X, U."""
    tol = conf.resolve(tol, "FEASIBILITY_TOL")
    ys = np.asarray(ys, dtype=float).reshape(-1)
    if ys.shape[0] != design.template.f:
        raise StructuralError(f"ys must have length {design.template.f}")
    block = design.lqr_block
    skip = design.template.f  # the Fx <= ys rows do not belong to Y_LQR
    excess = block.Az[skip:] @ ys - block.b[skip:]
    return bool(np.all(excess <= tol * (1.0 + np.abs(block.b[skip:]))))


def largest_lqr_offset(design):
    """ys in Y_LQR maximising sum(ys)."""
    block = design.lqr_block
    skip = design.template.f
    result = solve_lp(-np.ones(skip), block.Az[skip:], block.b[skip:])
    if not result.optimal:
        raise Indeterminate(f"Y_LQR offset LP ended with status {result.status.value}")
    return result.point


def membership_T_beta(design, x):
    """LP feasibility of the T(beta) system at x, with (y, v, ys) as certificate."""
    x = np.asarray(x, dtype=float).reshape(-1)
    block = design.block
    result = solve_lp(np.zeros(block.n_vars), block.Az, block.b - block.Ax @ x)
    verdict = _verdict(result.status)
    if verdict is not Verdict.MEMBER:
        return Membership(verdict)
    y, ys, v = design.split(result.point)
    return Membership(verdict, y, v, ys)


def membership_hatTLQR(design, x):
    """Exists ys in Y_LQR with Fx <= ys."""
    x = np.asarray(x, dtype=float).reshape(-1)
    block = design.lqr_block
    result = solve_lp(np.zeros(block.n_vars), block.Az, block.b - block.Ax @ x)
    verdict = _verdict(result.status)
    if verdict is not Verdict.MEMBER:
        return Membership(verdict)
    return Membership(verdict, ys=result.point)


# =============================================================================
# TERMINAL COST
# =============================================================================

@dataclass(frozen=True, eq=False)
class TerminalEvaluation:
    x: np.ndarray
    value: float
    y_star: np.ndarray = None
    v_star: np.ndarray = None
    ys_star: np.ndarray = None

    @property
    def finite(self):
        return math.isfinite(self.value)


def eval_terminal_cost(design, x, tol=None):
    """m(x): the terminal cost QP; +inf outside T(beta)."""
    x = np.asarray(x, dtype=float).reshape(-1)
    block = design.block
    problem = QuadraticProgram(block.H, np.zeros(block.n_vars), block.Az, block.b - block.Ax @ x,
                               offset=float(x @ design.P @ x))
    result = solve_qp(problem, tol=tol)
    if result.status is QpStatus.INFEASIBLE:
        return TerminalEvaluation(x, math.inf)
    if not result.optimal:
        raise Indeterminate(f"terminal cost QP ended with status {result.status.value}")
    y, ys, v = design.split(result.point)
    return TerminalEvaluation(x, result.objective, y, v, ys)


def eval_lqr_opt_cost(design, x):
    """x'Px on hat T_LQR, +inf elsewhere."""
    x = np.asarray(x, dtype=float).reshape(-1)
    membership = membership_hatTLQR(design, x)
    if membership.verdict is Verdict.INDETERMINATE:
        raise Indeterminate("hat T_LQR membership LP was inconclusive")
    return float(x @ design.P @ x) if membership else math.inf


# =============================================================================
# DESCENT CERTIFICATE
# =============================================================================

@dataclass(frozen=True, eq=False)
class VertexWeighting:
    weights: np.ndarray
    u: np.ndarray


@dataclass(frozen=True, eq=False)
class DescentCertificate:
    y_plus: np.ndarray
    v_plus: np.ndarray
    ys: np.ndarray
    e: np.ndarray
    e_plus: np.ndarray
    w: np.ndarray
    weighting: VertexWeighting


@dataclass(frozen=True)
class CertificateReplay:
    feasible: bool
    violation: float
    value_bound: float


def extract_vertex_control(design, x, y, v):
    """Minimum-norm barycentric weights of x over the vertices V_i y, and u = sum w_i v_i."""
    t = design.template
    x = np.asarray(x, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    v = np.asarray(v, dtype=float).reshape(t.v, design.n_u)
    if t.configuration_residual(y) > CERTIFICATE_TOL:
        raise ConfigurationViolated("extract_vertex_control needs Ey <= 0")
    points = t.vertex_points(y)
    k = t.v
    problem = QuadraticProgram(
        2.0 * np.eye(k), np.zeros(k),
        A_in=-np.eye(k), b_in=np.zeros(k),
        A_eq=np.vstack([points.T, np.ones((1, k))]), b_eq=np.concatenate([x, [1.0]]),
    )
    result = solve_qp(problem, tol=1e-9)
    if result.status is QpStatus.INFEASIBLE:
        raise NotInPolytope(f"{x.tolist()} is not in P(y)")
    if not result.optimal:
        raise Indeterminate(f"vertex weighting QP ended with status {result.status.value}")
    weights = np.clip(result.point, 0.0, None)
    weights /= weights.sum()
    return VertexWeighting(weights, weights @ v)


def descent_step(design, x, evaluation):
    """
    One closed-loop step of the terminal controller with its certificate.

    u interpolates the optimal vertex inputs; the successor is covered by
    y+ = ys + beta(y - ys) with vertex inputs v+ = beta v + (1 - beta) vs,
    vs_i = K V_i ys, so that every deviation v_i - K V_i y shrinks by beta.
    """
    if not evaluation.finite:
        raise StructuralError("descent step needs a finite terminal evaluation")
    x = np.asarray(x, dtype=float).reshape(-1)
    beta = design.beta
    y, v, ys = evaluation.y_star, evaluation.v_star, evaluation.ys_star
    weighting = extract_vertex_control(design, x, y, v)
    x_plus = design.A @ x + design.B @ weighting.u

    y_plus = ys + beta * (y - ys)
    v_plus = beta * v + (1.0 - beta) * design.vertex_inputs(ys)
    e = v - design.vertex_inputs(y)
    e_plus = v_plus - design.vertex_inputs(y_plus)
    certificate = DescentCertificate(y_plus, v_plus, ys, e, e_plus,
                                     weighting.weights @ e, weighting)
    return weighting.u, x_plus, certificate


def replay_certificate(design, x_plus, certificate, tol=CERTIFICATE_TOL):
    """Check (y+, v+, ys) against the terminal rows at x+; bound m(x+) by its objective."""
    x_plus = np.asarray(x_plus, dtype=float).reshape(-1)
    z = design.join(certificate.y_plus, certificate.ys, certificate.v_plus)
    block = design.block
    violation = block.violation(x_plus, z)
    bound = float(x_plus @ design.P @ x_plus + 0.5 * z @ block.H @ z)
    return CertificateReplay(violation <= tol, violation, bound)


def tube_sequence(evaluation, beta, steps):
    """y_k = ys + beta^k (y - ys) for k = 0..steps, one row per k."""
    if not evaluation.finite:
        raise StructuralError("tube sequence needs a finite terminal evaluation")
    powers = beta ** np.arange(steps + 1)
    gap = evaluation.y_star - evaluation.ys_star
    return evaluation.ys_star[None, :] + powers[:, None] * gap[None, :]
