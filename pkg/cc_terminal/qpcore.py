"""
Standard-form convex QP/LP contract shared by every other module.

All optimisation problems in cc_terminal (support functions, membership
tests, the terminal cost, the MPC problem) are compiled to

    minimise    1/2 z'Hz + g'z + offset
    subject to  A_in z <= b_in,  A_eq z = b_eq

and handed to ``solve_qp`` / ``solve_lp``. QPs go to OSQP with solution
polishing, LPs to HiGHS through ``scipy.optimize.linprog``. The contract is
the KKT post-condition, checked on every answer before it is reported as
Optimal; anything the solver cannot certify comes back as MaxIterations.

Residuals in ``QpSolution`` are scaled: the primal residual by
``1 + |b|_inf``, the dual residual by the magnitude of the largest
stationarity term, as OSQP and HiGHS measure them.
"""

import enum
import logging
from dataclasses import dataclass, field

import numpy as np
import osqp
from scipy import optimize, sparse

from . import conf
from .exceptions import StructuralError

logger = logging.getLogger(__name__)

SYMMETRY_TOL = 1e-10
PSD_TOL = 1e-8


# =============================================================================
# TYPES
# =============================================================================

class QpStatus(enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    MAX_ITERATIONS = "MaxIterations"


def _matrix(value, cols, name):
    if value is None:
        return np.zeros((0, cols))
    mat = np.asarray(value, dtype=float)
    if mat.size == 0:
        return np.zeros((0, cols))
    if mat.ndim == 1:
        mat = mat.reshape(1, -1)
    if mat.ndim != 2 or mat.shape[1] != cols:
        raise StructuralError(f"{name} must have {cols} columns, got shape {mat.shape}")
    return mat


def _vector(value, rows, name):
    if value is None:
        value = np.zeros(rows)
    vec = np.asarray(value, dtype=float).reshape(-1)
    if vec.shape[0] != rows:
        raise StructuralError(f"{name} must have length {rows}, got {vec.shape[0]}")
    return vec


@dataclass(frozen=True, eq=False)
class QuadraticProgram:
    """minimise 1/2 z'Hz + g'z + offset s.t. A_in z <= b_in, A_eq z = b_eq."""

    H: np.ndarray
    g: np.ndarray
    A_in: np.ndarray = None
    b_in: np.ndarray = None
    A_eq: np.ndarray = None
    b_eq: np.ndarray = None
    offset: float = 0.0
    convexity_checked: bool = field(default=False, repr=False)

    def __post_init__(self):
        g = np.asarray(self.g, dtype=float).reshape(-1)
        n = g.shape[0]
        H = np.asarray(self.H, dtype=float)
        if H.size == 0 and n == 0:
            H = np.zeros((0, 0))
        if H.ndim == 0 and n == 1:
            H = H.reshape(1, 1)
        if H.shape != (n, n):
            raise StructuralError(f"H must be {n}x{n}, got shape {H.shape}")
        A_in = _matrix(self.A_in, n, "A_in")
        A_eq = _matrix(self.A_eq, n, "A_eq")
        b_in = _vector(self.b_in, A_in.shape[0], "b_in")
        b_eq = _vector(self.b_eq, A_eq.shape[0], "b_eq")
        if not np.all(np.isfinite(H)) or not np.all(np.isfinite(g)):
            raise StructuralError("cost data must be finite")
        if np.max(np.abs(H - H.T), initial=0.0) > SYMMETRY_TOL:
            raise StructuralError("H is not symmetric")
        if not self.convexity_checked and n:
            smallest = np.linalg.eigvalsh(0.5 * (H + H.T))[0]
            if smallest < -PSD_TOL:
                raise StructuralError(f"H has eigenvalue {smallest:.3e} < -{PSD_TOL}")
        for name, value in (("H", H), ("g", g), ("A_in", A_in), ("b_in", b_in),
                            ("A_eq", A_eq), ("b_eq", b_eq)):
            object.__setattr__(self, name, value)
        object.__setattr__(self, "offset", float(self.offset))
        object.__setattr__(self, "convexity_checked", True)

    @property
    def n(self):
        return self.g.shape[0]

    @property
    def m_in(self):
        return self.A_in.shape[0]

    @property
    def m_eq(self):
        return self.A_eq.shape[0]

    def objective(self, z):
        z = np.asarray(z, dtype=float)
        return float(0.5 * z @ self.H @ z + self.g @ z + self.offset)

    def primal_residual(self, z):
        """Largest constraint violation, scaled by 1 + |b|_inf."""
        z = np.asarray(z, dtype=float)
        worst = 0.0
        scale = 1.0
        if self.m_in:
            worst = max(worst, float(np.max(self.A_in @ z - self.b_in)))
            scale = max(scale, 1.0 + float(np.max(np.abs(self.b_in))))
        if self.m_eq:
            worst = max(worst, float(np.max(np.abs(self.A_eq @ z - self.b_eq))))
            scale = max(scale, 1.0 + float(np.max(np.abs(self.b_eq))))
        return max(worst, 0.0) / scale

    def dual_residual(self, z, dual_in, dual_eq):
        """Stationarity residual |Hz + g + A_in'l + A_eq'n|_inf, scaled."""
        terms = [self.H @ z, self.g]
        if self.m_in:
            terms.append(self.A_in.T @ dual_in)
        if self.m_eq:
            terms.append(self.A_eq.T @ dual_eq)
        total = np.sum(terms, axis=0)
        scale = 1.0 + max(float(np.max(np.abs(t), initial=0.0)) for t in terms)
        return float(np.max(np.abs(total), initial=0.0)) / scale


@dataclass(frozen=True, eq=False)
class QpSolution:
    status: QpStatus
    point: np.ndarray
    objective: float
    primal_residual: float
    dual_residual: float
    dual_in: np.ndarray = None
    dual_eq: np.ndarray = None

    @property
    def optimal(self):
        return self.status is QpStatus.OPTIMAL


@dataclass(frozen=True)
class KktReport:
    ok: bool
    stationarity: float
    feasibility: float
    complementarity: float
    multipliers_in: np.ndarray = None
    multipliers_eq: np.ndarray = None


def _failed(status, n, residual=np.inf):
    point = np.full(n, np.nan)
    return QpSolution(status, point, np.nan, residual, np.inf)


# =============================================================================
# LP (HiGHS)
# =============================================================================

def solve_lp(c, A_in=None, b_in=None, A_eq=None, b_eq=None, tol=None, offset=0.0):
    """Solve min c'z s.t. A_in z <= b_in, A_eq z = b_eq with free variables."""
    c = np.asarray(c, dtype=float).reshape(-1)
    problem = QuadraticProgram(np.zeros((c.shape[0], c.shape[0])), c, A_in, b_in,
                               A_eq, b_eq, offset=offset, convexity_checked=True)
    return _solve_linear(problem, tol)


def _solve_linear(problem, tol):
    feas_tol = conf.resolve(tol, "FEASIBILITY_TOL")
    opt_tol = conf.resolve(tol, "OPTIMALITY_TOL")
    n = problem.n
    if n == 0:
        # Nothing to optimise: only the constant rows remain to be checked.
        ok = (not problem.m_in or np.all(problem.b_in >= -feas_tol)) and \
             (not problem.m_eq or np.all(np.abs(problem.b_eq) <= feas_tol))
        status = QpStatus.OPTIMAL if ok else QpStatus.INFEASIBLE
        return QpSolution(status, np.zeros(0), problem.offset, 0.0, 0.0,
                          np.zeros(problem.m_in), np.zeros(problem.m_eq))

    result = optimize.linprog(
        problem.g,
        A_ub=problem.A_in if problem.m_in else None,
        b_ub=problem.b_in if problem.m_in else None,
        A_eq=problem.A_eq if problem.m_eq else None,
        b_eq=problem.b_eq if problem.m_eq else None,
        bounds=(None, None),
        method="highs",
        options={
            "primal_feasibility_tolerance": max(min(feas_tol, 1e-7), 1e-10),
            "dual_feasibility_tolerance": max(min(opt_tol, 1e-7), 1e-10),
        },
    )
    if result.status == 2:
        return _failed(QpStatus.INFEASIBLE, n)
    if result.status == 3:
        return _failed(QpStatus.UNBOUNDED, n)
    if result.status != 0:
        if result.status == 4 and problem.g.any():
            # HiGHS may only know "infeasible or unbounded"; settle it with a
            # pure feasibility solve.
            phase_one = solve_lp(np.zeros(n), problem.A_in, problem.b_in,
                                 problem.A_eq, problem.b_eq, tol)
            if phase_one.status is QpStatus.INFEASIBLE:
                return phase_one
            if phase_one.optimal:
                return _failed(QpStatus.UNBOUNDED, n)
        logger.warning("HiGHS stopped with status %s: %s", result.status, result.message)
        return _failed(QpStatus.MAX_ITERATIONS, n)

    z = np.asarray(result.x, dtype=float)
    dual_in = -np.asarray(result.ineqlin.marginals) if problem.m_in else np.zeros(0)
    dual_eq = -np.asarray(result.eqlin.marginals) if problem.m_eq else np.zeros(0)
    primal = problem.primal_residual(z)
    dual = problem.dual_residual(z, dual_in, dual_eq)
    status = QpStatus.OPTIMAL
    if primal > feas_tol or dual > opt_tol:
        logger.warning("LP answer failed certification (primal %.2e, dual %.2e)", primal, dual)
        status = QpStatus.MAX_ITERATIONS
    return QpSolution(status, z, problem.objective(z), primal, dual, dual_in, dual_eq)


# =============================================================================
# QP (OSQP)
# =============================================================================

def solve_qp(problem, tol=None, max_iter=None):
    """Solve a convex QP; Optimal answers satisfy the KKT conditions at ``tol``."""
    if not isinstance(problem, QuadraticProgram):
        raise StructuralError("solve_qp expects a QuadraticProgram")
    if tol is not None and tol <= 0:
        raise StructuralError("tol must be positive")
    if not problem.H.any():
        return _solve_linear(problem, tol)

    feas_tol = conf.resolve(tol, "FEASIBILITY_TOL")
    opt_tol = conf.resolve(tol, "OPTIMALITY_TOL")
    max_iter = conf.resolve(max_iter, "QP_MAX_ITER")
    n = problem.n

    if not problem.m_in and not problem.m_eq:
        return _solve_unconstrained(problem, opt_tol)

    A = np.vstack([problem.A_in, problem.A_eq])
    lower = np.concatenate([np.full(problem.m_in, -np.inf), problem.b_eq])
    upper = np.concatenate([problem.b_in, problem.b_eq])

    solver = osqp.OSQP()
    solver.setup(
        P=sparse.triu(sparse.csc_matrix(problem.H), format="csc"),
        q=problem.g,
        A=sparse.csc_matrix(A),
        l=lower,
        u=upper,
        verbose=False,
        eps_abs=0.1 * opt_tol,
        eps_rel=0.1 * opt_tol,
        eps_prim_inf=conf.setting("INFEASIBILITY_CERT_TOL"),
        eps_dual_inf=conf.setting("INFEASIBILITY_CERT_TOL"),
        max_iter=max_iter,
        polish=True,
        polish_refine_iter=10,
    )
    result = solver.solve()
    status = str(result.info.status).lower()

    if status.startswith("primal infeasible"):
        return _confirm_infeasible(problem, A, lower, upper, result.prim_inf_cert, tol)
    if status.startswith("dual infeasible"):
        return _failed(QpStatus.UNBOUNDED, n)
    if not status.startswith("solved"):
        logger.warning("OSQP stopped with status '%s'", result.info.status)
        return _failed(QpStatus.MAX_ITERATIONS, n)

    z = np.asarray(result.x, dtype=float)
    y = np.asarray(result.y, dtype=float)
    dual_in = np.maximum(y[:problem.m_in], 0.0)
    dual_eq = y[problem.m_in:]
    primal = problem.primal_residual(z)
    dual = problem.dual_residual(z, dual_in, dual_eq)
    verdict = QpStatus.OPTIMAL
    if primal > feas_tol or dual > opt_tol:
        logger.warning(
            "OSQP answer failed certification (status '%s', polish %s, primal %.2e, dual %.2e)",
            result.info.status, result.info.status_polish, primal, dual,
        )
        verdict = QpStatus.MAX_ITERATIONS
    return QpSolution(verdict, z, problem.objective(z), primal, dual, dual_in, dual_eq)


def _solve_unconstrained(problem, opt_tol):
    z, *_ = np.linalg.lstsq(problem.H, -problem.g, rcond=None)
    dual = problem.dual_residual(z, np.zeros(0), np.zeros(0))
    if dual > opt_tol:
        # g has a component outside range(H): the objective decreases without bound.
        return _failed(QpStatus.UNBOUNDED, problem.n)
    return QpSolution(QpStatus.OPTIMAL, z, problem.objective(z), 0.0, dual,
                      np.zeros(0), np.zeros(0))


def _confirm_infeasible(problem, A, lower, upper, certificate, tol):
    """Accept OSQP's infeasibility only with a certificate below the configured threshold."""
    cert_tol = conf.setting("INFEASIBILITY_CERT_TOL")
    if certificate is not None:
        delta = np.asarray(certificate, dtype=float)
        norm = np.max(np.abs(delta), initial=0.0)
        if norm > 0:
            delta = delta / norm
            stationarity = np.max(np.abs(A.T @ delta), initial=0.0)
            support = upper[delta > 0] @ delta[delta > 0] + lower[delta < 0] @ delta[delta < 0]
            if stationarity <= cert_tol and support < -cert_tol:
                return _failed(QpStatus.INFEASIBLE, problem.n)
    phase_one = solve_lp(np.zeros(problem.n), problem.A_in, problem.b_in,
                         problem.A_eq, problem.b_eq, tol)
    if phase_one.status is QpStatus.INFEASIBLE:
        return phase_one
    logger.warning("OSQP reported infeasibility without a usable certificate")
    return _failed(QpStatus.MAX_ITERATIONS, problem.n)


# =============================================================================
# KKT VERIFICATION
# =============================================================================

def check_kkt(problem, point, tol=None):
    """
    Verify a candidate point against the KKT conditions of ``problem``.

    Multipliers are fitted by bounded least squares on the active rows
    (inequality multipliers non-negative, equality multipliers free). All
    three residuals are scaled like ``QpSolution``'s.
    """
    tol = conf.resolve(tol, "OPTIMALITY_TOL")
    z = np.asarray(point, dtype=float).reshape(-1)
    if z.shape[0] != problem.n:
        raise StructuralError(f"point must have length {problem.n}")

    feasibility = problem.primal_residual(z)
    gradient = problem.H @ z + problem.g
    slack = problem.b_in - problem.A_in @ z
    active = np.flatnonzero(slack <= 10.0 * tol * (1.0 + np.abs(problem.b_in)))

    columns = [problem.A_in[active].T, problem.A_eq.T]
    M = np.hstack(columns) if active.size + problem.m_eq else np.zeros((problem.n, 0))
    mu = np.zeros(problem.m_in)
    nu = np.zeros(problem.m_eq)
    if M.shape[1]:
        lower = np.concatenate([np.zeros(active.size), np.full(problem.m_eq, -np.inf)])
        upper = np.full(M.shape[1], np.inf)
        fit = optimize.lsq_linear(M, -gradient, bounds=(lower, upper), method="bvls")
        mu[active] = fit.x[:active.size]
        nu = fit.x[active.size:]
        residual = gradient + M @ fit.x
    else:
        residual = gradient
    scale = 1.0 + max(float(np.max(np.abs(gradient), initial=0.0)),
                      float(np.max(np.abs(M @ np.concatenate([mu[active], nu])), initial=0.0))
                      if M.shape[1] else 0.0)
    stationarity = float(np.max(np.abs(residual), initial=0.0)) / scale
    complementarity = float(np.max(mu * np.maximum(slack, 0.0), initial=0.0)) / scale
    ok = stationarity <= tol and feasibility <= tol and complementarity <= tol
    return KktReport(ok, stationarity, feasibility, complementarity, mu, nu)
