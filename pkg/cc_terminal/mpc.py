"""
MPC problem assembly, closed-loop simulation and suboptimality.

Problems are assembled in sparse form with decision vector

    z = (u_0, x_1, u_1, x_2, ..., u_{N-1}, x_N, terminal variables)

and x_0 as a parameter. ``ParametricQp`` keeps the affine dependence of the
data on x_0 so one assembly serves every initial state of a study.
"""

import logging
import math
import time
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import pandas as pd

from . import conf
from .exceptions import DegenerateReference, Indeterminate, RecursiveFeasibilityError, StructuralError
from .polytope import HPolytope
from .qpcore import QpStatus, QuadraticProgram, solve_qp
from .terminal import TerminalEvaluation

logger = logging.getLogger(__name__)

STATE_TOL = 1e-7


# =============================================================================
# TYPES
# =============================================================================

@dataclass(frozen=True, eq=False)
class PlantSpec:
    A: np.ndarray
    B: np.ndarray
    X: HPolytope
    U: HPolytope

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.asarray(self.B, dtype=float).reshape(A.shape[0], -1)
        if A.shape[0] != A.shape[1]:
            raise StructuralError(f"A must be square, got {A.shape}")
        if self.X.n != A.shape[0] or self.U.n != B.shape[1]:
            raise StructuralError("X and U dimensions do not match (A, B)")
        if not self.X.contains(np.zeros(self.X.n)) or not self.U.contains(np.zeros(self.U.n)):
            raise StructuralError("X and U must contain the origin")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def n_x(self):
        return self.A.shape[0]

    @property
    def n_u(self):
        return self.B.shape[1]

    def step(self, x, u):
        return self.A @ np.asarray(x, dtype=float) + self.B @ np.asarray(u, dtype=float)


@dataclass(frozen=True, eq=False)
class Proposed:
    """Terminal cost m(x) with T(beta) as implicit terminal set."""

    design: object
    label = "proposed"


@dataclass(frozen=True, eq=False)
class NominalLqr:
    """Fixed terminal polytope with terminal cost x'Px."""

    terminal: HPolytope
    P: np.ndarray
    label = "nominal"


@dataclass(frozen=True, eq=False)
class LqrOpt:
    """Terminal cost x'Px on hat T_LQR, the union of LQR-invariant cc-polytopes."""

    design: object
    label = "lqr_opt"


@dataclass(frozen=True, eq=False)
class ZeroTerminal:
    """x_N = 0 and no terminal cost."""

    label = "zero"


@dataclass(frozen=True, eq=False)
class MpcProblem:
    plant: PlantSpec
    cost: object
    N: int
    mode: object

    def __post_init__(self):
        if int(self.N) < 1:
            raise StructuralError("horizon N must be a positive integer")
        if self.cost.n_x != self.plant.n_x or self.cost.n_u != self.plant.n_u:
            raise StructuralError("stage cost does not match the plant")
        object.__setattr__(self, "N", int(self.N))

    @cached_property
    def parametric(self):
        return _assemble_parametric(self)

    def with_horizon(self, N):
        return MpcProblem(self.plant, self.cost, N, self.mode)

    def u_index(self, k):
        step = self.plant.n_x + self.plant.n_u
        return slice(k * step, k * step + self.plant.n_u)

    def x_index(self, k):
        """Column block of x_k for k >= 1."""
        step = self.plant.n_x + self.plant.n_u
        start = (k - 1) * step + self.plant.n_u
        return slice(start, start + self.plant.n_x)

    @property
    def n_trajectory(self):
        return self.N * (self.plant.n_x + self.plant.n_u)


@dataclass(frozen=True, eq=False)
class ParametricQp:
    """QP data affine in x0: g = g0 + Gx x0, b = b0 + Bx x0, offset = x0'Ox x0."""

    H: np.ndarray
    g0: np.ndarray
    Gx: np.ndarray
    A_in: np.ndarray
    b0_in: np.ndarray
    Bx_in: np.ndarray
    A_eq: np.ndarray
    b0_eq: np.ndarray
    Bx_eq: np.ndarray
    Ox: np.ndarray

    def __post_init__(self):
        smallest = np.linalg.eigvalsh(self.H)[0] if self.H.size else 0.0
        if smallest < -1e-8 * max(1.0, np.max(np.abs(self.H), initial=0.0)):
            raise StructuralError("assembled Hessian is not positive semidefinite")

    @property
    def n(self):
        return self.H.shape[0]

    def at(self, x0):
        x0 = np.asarray(x0, dtype=float).reshape(-1)
        return QuadraticProgram(
            self.H, self.g0 + self.Gx @ x0,
            self.A_in, self.b0_in + self.Bx_in @ x0,
            self.A_eq, self.b0_eq + self.Bx_eq @ x0,
            offset=float(x0 @ self.Ox @ x0), convexity_checked=True,
        )


def _assemble_parametric(problem):
    plant, cost, N, mode = problem.plant, problem.cost, problem.N, problem.mode
    n_x, n_u = plant.n_x, plant.n_u
    n_traj = problem.n_trajectory
    if isinstance(mode, (Proposed, LqrOpt)):
        design = mode.design
        if design.n_x != n_x or design.n_u != n_u:
            raise StructuralError("terminal design does not match the plant")
        block = design.block if isinstance(mode, Proposed) else design.lqr_block
    else:
        block = None
    n_term = block.n_vars if block is not None else 0
    n = n_traj + n_term

    H = np.zeros((n, n))
    Gx = np.zeros((n, n_x))
    stage = 2.0 * np.block([[cost.Q, cost.S], [cost.S.T, cost.R]])
    H[problem.u_index(0), problem.u_index(0)] = 2.0 * cost.R
    Gx[problem.u_index(0)] = 2.0 * cost.S.T
    for k in range(1, N):
        idx = np.r_[problem.x_index(k), problem.u_index(k)]
        H[np.ix_(idx, idx)] += stage

    A_eq = np.zeros((N * n_x, n))
    Bx_eq = np.zeros((N * n_x, n_x))
    for k in range(N):
        rows = slice(k * n_x, (k + 1) * n_x)
        A_eq[rows, problem.x_index(k + 1)] = np.eye(n_x)
        A_eq[rows, problem.u_index(k)] = -plant.B
        if k == 0:
            Bx_eq[rows] = plant.A
        else:
            A_eq[rows, problem.x_index(k)] = -plant.A

    rows_in, rhs_in = [], []
    for k in range(N):
        row = np.zeros((plant.U.m, n))
        row[:, problem.u_index(k)] = plant.U.F
        rows_in.append(row)
        rhs_in.append(plant.U.y)
        row = np.zeros((plant.X.m, n))
        row[:, problem.x_index(k + 1)] = plant.X.F
        rows_in.append(row)
        rhs_in.append(plant.X.y)

    last = problem.x_index(N)
    if isinstance(mode, ZeroTerminal):
        tail = np.zeros((n_x, n))
        tail[:, last] = np.eye(n_x)
        A_eq = np.vstack([A_eq, tail])
        Bx_eq = np.vstack([Bx_eq, np.zeros((n_x, n_x))])
    elif isinstance(mode, NominalLqr):
        H[last, last] += 2.0 * np.asarray(mode.P, dtype=float)
        row = np.zeros((mode.terminal.m, n))
        row[:, last] = mode.terminal.F
        rows_in.append(row)
        rhs_in.append(mode.terminal.y)
    else:
        H[last, last] += 2.0 * mode.design.P
        H[n_traj:, n_traj:] += block.H
        row = np.zeros((block.rows, n))
        row[:, last] = block.Ax
        row[:, n_traj:] = block.Az
        rows_in.append(row)
        rhs_in.append(block.b)

    A_in = np.vstack(rows_in)
    b0_in = np.concatenate(rhs_in)
    H = 0.5 * (H + H.T)
    return ParametricQp(H, np.zeros(n), Gx, A_in, b0_in, np.zeros((A_in.shape[0], n_x)),
                        A_eq, np.zeros(A_eq.shape[0]), Bx_eq, cost.Q.copy())


def assemble(problem, x0):
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.shape[0] != problem.plant.n_x:
        raise StructuralError(f"x0 must have length {problem.plant.n_x}")
    return problem.parametric.at(x0)


def dimensions(problem):
    """(variables, inequality rows) of the assembled problem."""
    parametric = problem.parametric
    return parametric.n, parametric.A_in.shape[0]


# =============================================================================
# SOLVE / SIMULATE
# =============================================================================

@dataclass(frozen=True, eq=False)
class MpcSolution:
    status: QpStatus
    x0: np.ndarray
    u0: np.ndarray = None
    value: float = math.inf
    states: np.ndarray = None
    inputs: np.ndarray = None
    terminal: TerminalEvaluation = None
    solve_time: float = 0.0

    @property
    def feasible(self):
        return self.status is QpStatus.OPTIMAL


def solve_mpc(problem, x0, tol=None):
    """First input and optimal value; an infeasible status means x0 is outside O_N."""
    qp = assemble(problem, x0)
    started = time.perf_counter()
    result = solve_qp(qp, tol=tol)
    elapsed = time.perf_counter() - started
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if result.status is QpStatus.INFEASIBLE:
        return MpcSolution(result.status, x0, solve_time=elapsed)
    if not result.optimal:
        raise Indeterminate(f"MPC QP ended with status {result.status.value} at x0={x0.tolist()}")

    z = result.point
    N = problem.N
    inputs = np.array([z[problem.u_index(k)] for k in range(N)])
    states = np.vstack([x0] + [z[problem.x_index(k)] for k in range(1, N + 1)])
    terminal = None
    if isinstance(problem.mode, Proposed):
        design = problem.mode.design
        y, ys, v = design.split(z[problem.n_trajectory:])
        x_N = states[-1]
        value = float(x_N @ design.P @ x_N + 0.5 * z[problem.n_trajectory:] @ design.block.H
                      @ z[problem.n_trajectory:])
        terminal = TerminalEvaluation(x_N, value, y, v, ys)
    return MpcSolution(result.status, x0, inputs[0], result.objective, states, inputs,
                       terminal, elapsed)


@dataclass(frozen=True, eq=False)
class ClosedLoopTrace:
    states: np.ndarray
    inputs: np.ndarray
    stage_costs: np.ndarray
    values: np.ndarray
    solve_times: np.ndarray
    terminal: list = field(default_factory=list)

    @property
    def steps(self):
        return self.states.shape[0]


def simulate(problem, x0, M, tol=None):
    """Closed loop u_t = mu_N(x_t) for t = 0..M; returns M + 1 samples."""
    plant = problem.plant
    x = np.asarray(x0, dtype=float).reshape(-1)
    states, inputs, costs, values, times, terminal = [], [], [], [], [], []
    for t in range(M + 1):
        solution = solve_mpc(problem, x, tol=tol)
        if not solution.feasible:
            message = ("initial state is not admissible" if t == 0
                       else f"MPC problem became infeasible at step {t}")
            logger.warning("%s (x=%s)", message, x.tolist())
            raise RecursiveFeasibilityError(message, step=t, state=x)
        u = solution.u0
        states.append(x)
        inputs.append(u)
        costs.append(problem.cost.evaluate(x, u))
        values.append(solution.value)
        times.append(solution.solve_time)
        terminal.append(solution.terminal)
        x = plant.step(x, u)
    trace = ClosedLoopTrace(np.array(states), np.array(inputs), np.array(costs),
                            np.array(values), np.array(times), terminal)
    _check_trace(plant, trace)
    return trace


def _check_trace(plant, trace):
    for t, (x, u) in enumerate(zip(trace.states, trace.inputs)):
        if t and not plant.X.contains(x, STATE_TOL):
            raise RecursiveFeasibilityError("state constraint violated", step=t, state=x)
        if not plant.U.contains(u, STATE_TOL):
            raise RecursiveFeasibilityError("input constraint violated", step=t, state=x)


def lyapunov_gaps(trace):
    """V(x_{t+1}) - V(x_t) + l(x_t, u_t); non-positive along a certified closed loop."""
    return np.diff(trace.values) + trace.stage_costs[:-1]


def trace_frame(trace):
    """One row per step: t, x[i], u[j], stage_cost, V_N, solve_time_s."""
    n_x, n_u = trace.states.shape[1], trace.inputs.shape[1]
    frame = pd.DataFrame({"t": np.arange(trace.steps)})
    for i in range(n_x):
        frame[f"x[{i}]"] = trace.states[:, i]
    for j in range(n_u):
        frame[f"u[{j}]"] = trace.inputs[:, j]
    frame["stage_cost"] = trace.stage_costs
    frame["V_N"] = trace.values
    frame["solve_time_s"] = trace.solve_times
    return frame


# =============================================================================
# REFERENCE AND SUBOPTIMALITY
# =============================================================================

@dataclass(frozen=True, eq=False)
class ReferenceSolution:
    value: float
    states: np.ndarray
    inputs: np.ndarray


def infinite_horizon_reference(plant, cost, x0, horizon=None, tol=None):
    """Long-horizon optimum with x_N = 0, standing in for V_inf(x0)."""
    horizon = conf.resolve(horizon, "REFERENCE_HORIZON")
    problem = MpcProblem(plant, cost, horizon, ZeroTerminal())
    solution = solve_mpc(problem, x0, tol=tol)
    if not solution.feasible:
        return ReferenceSolution(math.inf, None, None)
    return ReferenceSolution(solution.value, solution.states, solution.inputs)


def suboptimality(problem, x0, M, trace=None, reference=None):
    """s_N(x0) = (sum_{t=0}^{M} l(x_t, mu_N(x_t)) - V_inf(x0)) / V_inf(x0)."""
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if not np.any(x0):
        raise DegenerateReference("suboptimality is undefined at the origin")
    if trace is None:
        trace = simulate(problem, x0, M)
    if reference is None:
        reference = infinite_horizon_reference(problem.plant, problem.cost, x0)
    if not math.isfinite(reference.value) or reference.value <= 0.0:
        raise DegenerateReference(f"reference value {reference.value} cannot normalise")
    closed_loop = float(np.sum(trace.stage_costs[:M + 1]))
    return (closed_loop - reference.value) / reference.value


def project_onto_admissible(problem, z, tol=None):
    """Euclidean projection of z onto the admissible region O_N."""
    z = np.asarray(z, dtype=float).reshape(-1)
    parametric = problem.parametric
    n_x, n = problem.plant.n_x, parametric.n
    H = np.zeros((n_x + n, n_x + n))
    H[:n_x, :n_x] = 2.0 * np.eye(n_x)
    g = np.concatenate([-2.0 * z, np.zeros(n)])
    A_in = np.hstack([-parametric.Bx_in, parametric.A_in])
    A_eq = np.hstack([-parametric.Bx_eq, parametric.A_eq])
    qp = QuadraticProgram(H, g, A_in, parametric.b0_in, A_eq, parametric.b0_eq,
                          offset=float(z @ z), convexity_checked=True)
    result = solve_qp(qp, tol=tol)
    if not result.optimal:
        raise Indeterminate(f"projection QP ended with status {result.status.value}")
    return result.point[:n_x]
