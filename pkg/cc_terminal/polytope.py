"""
Polytope representations and set algorithms.

- ``HPolytope`` / ``VPolytope``: halfspace and vertex representations.
- ``CcTemplate``: a configuration-constrained template (F, E, V). For every
  y with Ey <= 0 the polytope {x : Fx <= y} is the convex hull of the
  vertex maps V_i y.
- Fourier-Motzkin projection, one-step backward reachable sets and the
  invariant / control invariant / contractive set iterations.
- Support functions and the one-sided infinity-norm Hausdorff distance.

Every LP goes through ``qpcore.solve_lp``.
"""

import itertools
import logging
import math
from dataclasses import dataclass

import numpy as np

from . import conf
from .exceptions import (
    ConfigurationViolated,
    DegenerateTemplate,
    EmptySet,
    IterationLimit,
    NotNested,
    StructuralError,
    UnboundedTemplate,
    UnstableClosedLoop,
)
from .qpcore import QpStatus, solve_lp

logger = logging.getLogger(__name__)

ZERO_ROW_TOL = 1e-12
MERGE_TOL = 1e-9
CONTAINMENT_TOL = 1e-8
MAX_ENUMERATION_SUBSETS = 250000


def _clean_rows(F, y):
    """Drop all-zero rows. Returns (F, y, infeasible)."""
    F = np.asarray(F, dtype=float)
    y = np.asarray(y, dtype=float).reshape(-1)
    if F.shape[0] == 0:
        return F, y, False
    scale = np.max(np.abs(F), axis=1)
    zero = scale <= ZERO_ROW_TOL
    infeasible = bool(np.any(y[zero] < -ZERO_ROW_TOL))
    return F[~zero], y[~zero], infeasible


def _normalize_rows(F, y, ord=2):
    norms = np.linalg.norm(F, ord=ord, axis=1)
    return F / norms[:, None], y / norms


def _dedupe_rows(F, y, decimals=10):
    """Merge rows with identical normals, keeping the tightest offset."""
    best = {}
    for row, rhs in zip(F, y):
        key = tuple(np.round(row, decimals) + 0.0)
        if key not in best or rhs < best[key][1]:
            best[key] = (row, rhs)
    if not best:
        return F, y
    rows, rhs = zip(*best.values())
    return np.array(rows), np.array(rhs)


# =============================================================================
# HALFSPACE / VERTEX POLYTOPES
# =============================================================================

@dataclass(frozen=True, eq=False)
class HPolytope:
    """The set {x : Fx <= y}. An empty set is a valid value."""

    F: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        F = np.asarray(self.F, dtype=float)
        if F.ndim == 1:
            F = F.reshape(-1, 1)
        y = np.asarray(self.y, dtype=float).reshape(-1)
        if F.ndim != 2 or F.shape[0] != y.shape[0]:
            raise StructuralError(f"F {F.shape} and y {y.shape} do not match")
        if F.shape[1] == 0:
            raise StructuralError("polytope needs at least one coordinate")
        if F.shape[0] and np.any(np.max(np.abs(F), axis=1) <= ZERO_ROW_TOL):
            raise StructuralError("F has an all-zero row")
        object.__setattr__(self, "F", F)
        object.__setattr__(self, "y", y)

    @classmethod
    def from_inequalities(cls, F, y, n=None):
        """Build from raw rows, dropping trivial 0 <= c rows."""
        F = np.asarray(F, dtype=float)
        n = F.shape[1] if n is None else n
        F, y, infeasible = _clean_rows(F.reshape(-1, n), y)
        if infeasible:
            return cls.empty(n)
        return cls(F.reshape(-1, n), y)

    @classmethod
    def box(cls, lower, upper):
        lower = np.asarray(lower, dtype=float).reshape(-1)
        upper = np.asarray(upper, dtype=float).reshape(-1)
        eye = np.eye(lower.shape[0])
        return cls(np.vstack([eye, -eye]), np.concatenate([upper, -lower]))

    @classmethod
    def symmetric_box(cls, bounds):
        bounds = np.asarray(bounds, dtype=float).reshape(-1)
        return cls.box(-bounds, bounds)

    @classmethod
    def whole_space(cls, n):
        return cls(np.zeros((0, n)), np.zeros(0))

    @classmethod
    def empty(cls, n):
        e1 = np.eye(n)[:1]
        return cls(np.vstack([e1, -e1]), np.array([-1.0, -1.0]))

    @property
    def n(self):
        return self.F.shape[1]

    @property
    def m(self):
        return self.F.shape[0]

    def contains(self, points, tol=MERGE_TOL):
        pts = np.asarray(points, dtype=float)
        single = pts.ndim == 1
        pts = np.atleast_2d(pts)
        if self.m == 0:
            inside = np.ones(pts.shape[0], dtype=bool)
        else:
            inside = np.all(pts @ self.F.T <= self.y + tol, axis=1)
        return bool(inside[0]) if single else inside

    def is_empty(self):
        if self.m == 0:
            return False
        result = solve_lp(np.zeros(self.n), self.F, self.y)
        return result.status is QpStatus.INFEASIBLE

    def scaled(self, alpha):
        """alpha * P for alpha > 0."""
        return HPolytope(self.F, alpha * self.y)

    def intersect(self, other):
        return HPolytope(np.vstack([self.F, other.F]), np.concatenate([self.y, other.y]))

    def radius_along(self, direction):
        """Largest t >= 0 with t * direction in P (P must contain the origin)."""
        d = np.asarray(direction, dtype=float)
        if self.m == 0:
            return math.inf
        rate = self.F @ d
        moving = rate > ZERO_ROW_TOL
        if not np.any(moving):
            return math.inf
        return float(np.min(self.y[moving] / rate[moving]))

    def remove_redundant(self, tol=MERGE_TOL):
        """Irredundant representation; each remaining row is certified by an LP."""
        if self.m == 0:
            return self
        F, y = _dedupe_rows(*_normalize_rows(self.F, self.y))
        if solve_lp(np.zeros(self.n), F, y).status is QpStatus.INFEASIBLE:
            return HPolytope.empty(self.n)
        keep = list(range(F.shape[0]))
        for i in range(F.shape[0]):
            others = [j for j in keep if j != i]
            rows = np.vstack([F[others], F[i]])
            rhs = np.concatenate([y[others], [y[i] + 1.0]])
            result = solve_lp(-F[i], rows, rhs)
            if result.optimal and -result.objective <= y[i] + tol:
                keep.remove(i)
        return HPolytope(F[keep], y[keep])

    def vertices(self, tol=MERGE_TOL):
        return VPolytope(enumerate_vertices(self.F, self.y, tol))

    def to_dict(self):
        return {"F": self.F.tolist(), "y": self.y.tolist()}

    @classmethod
    def from_dict(cls, data, n=None):
        F = np.asarray(data["F"], dtype=float)
        if F.size == 0:
            return cls.whole_space(n if n is not None else 1)
        return cls(F, data["y"])


@dataclass(frozen=True, eq=False)
class VPolytope:
    """convh(vertices); duplicates within 1e-9 are merged on construction."""

    vertices: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.vertices, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        if pts.shape[0] == 0:
            raise EmptySet("a vertex polytope needs at least one vertex")
        object.__setattr__(self, "vertices", _merge_points(pts))

    @property
    def n(self):
        return self.vertices.shape[1]

    def contains(self, point, tol=CONTAINMENT_TOL):
        """LP test: point is a convex combination of the vertices."""
        p = np.asarray(point, dtype=float).reshape(-1)
        k = self.vertices.shape[0]
        A_eq = np.vstack([self.vertices.T, np.ones((1, k))])
        b_eq = np.concatenate([p, [1.0]])
        result = solve_lp(np.zeros(k), -np.eye(k), np.zeros(k), A_eq, b_eq, tol=tol)
        return result.optimal

    def scaled(self, alpha):
        return VPolytope(alpha * self.vertices)

    def to_dict(self):
        return {"vertices": self.vertices.tolist()}

    @classmethod
    def from_dict(cls, data):
        return cls(data["vertices"])


def _merge_points(points, tol=MERGE_TOL):
    kept = []
    for p in points:
        if not any(np.max(np.abs(p - q)) <= tol for q in kept):
            kept.append(p)
    return np.array(kept)


def enumerate_vertices(F, y, tol=MERGE_TOL):
    """
    Vertices of {x : Fx <= y} by intersecting every n-subset of facets.

    Exact for the small facet counts met here (planar sets, templates);
    refuses inputs with more than MAX_ENUMERATION_SUBSETS subsets.
    """
    return _enumerate_with_active_sets(F, y, tol)[0]


def _enumerate_with_active_sets(F, y, tol):
    F = np.asarray(F, dtype=float)
    y = np.asarray(y, dtype=float)
    m, n = F.shape
    if math.comb(m, n) > MAX_ENUMERATION_SUBSETS:
        raise StructuralError(f"vertex enumeration over C({m},{n}) subsets is not supported")
    points, actives = [], []
    slack_tol = tol * (1.0 + np.abs(y))
    for subset in itertools.combinations(range(m), n):
        rows = F[list(subset)]
        if abs(np.linalg.det(rows)) <= 1e-12 * max(1.0, np.max(np.abs(rows)) ** n):
            continue
        x = np.linalg.solve(rows, y[list(subset)])
        if np.all(F @ x <= y + slack_tol):
            if any(np.max(np.abs(x - p)) <= tol * (1.0 + np.max(np.abs(p))) for p in points):
                continue
            points.append(x)
            actives.append(tuple(int(i) for i in np.flatnonzero(np.abs(F @ x - y) <= slack_tol)))
    return np.array(points).reshape(-1, n), actives


def support(P, direction):
    """max d'x over P; +inf when unbounded."""
    d = np.asarray(direction, dtype=float).reshape(-1)
    if isinstance(P, VPolytope):
        return float(np.max(P.vertices @ d))
    if P.m == 0:
        if np.any(d):
            return math.inf
        return 0.0
    result = solve_lp(-d, P.F, P.y)
    if result.status is QpStatus.INFEASIBLE:
        raise EmptySet("support function of an empty set")
    if result.status is QpStatus.UNBOUNDED:
        return math.inf
    if not result.optimal:
        raise EmptySet(f"support LP ended with status {result.status.value}")
    return -result.objective


def contains_set(outer, inner, tol=CONTAINMENT_TOL):
    """inner ⊆ outer, tested on the facet normals of ``outer``."""
    if outer.m == 0:
        return True
    for row, rhs in zip(outer.F, outer.y):
        if support(inner, row) > rhs + tol:
            return False
    return True


# =============================================================================
# CONFIGURATION-CONSTRAINED TEMPLATES
# =============================================================================

@dataclass(frozen=True, eq=False)
class CcTemplate:
    """Triple (F, E, V) with active facet sets of the witness vertices."""

    F: np.ndarray
    E: np.ndarray
    V: np.ndarray
    active_sets: tuple

    @property
    def f(self):
        return self.F.shape[0]

    @property
    def n(self):
        return self.F.shape[1]

    @property
    def e(self):
        return self.E.shape[0]

    @property
    def v(self):
        return self.V.shape[0]

    def polytope(self, y):
        return HPolytope(self.F, y)

    def vertex_points(self, y):
        return np.einsum("inf,f->in", self.V, np.asarray(y, dtype=float))

    def configuration_residual(self, y):
        if self.e == 0:
            return -math.inf
        return float(np.max(self.E @ np.asarray(y, dtype=float)))

    def to_dict(self):
        return {
            "F": self.F.tolist(),
            "E": self.E.tolist(),
            "V": self.V.tolist(),
            "active_sets": [[int(i) for i in s] for s in self.active_sets],
        }

    @classmethod
    def from_dict(cls, data):
        F = np.asarray(data["F"], dtype=float)
        return cls(F, np.asarray(data["E"], dtype=float).reshape(-1, F.shape[0]),
                   np.asarray(data["V"], dtype=float),
                   tuple(tuple(s) for s in data["active_sets"]))


def build_template(F, y0, reduce_edges=True, tol=MERGE_TOL):
    """
    Build (F, E, V) from a simple witness polytope P(y0).

    V_i inverts the active facet rows at vertex i of P(y0). E collects, for
    every vertex i and non-active facet j, the row F_j V_i - e_j'. With
    ``reduce_edges`` the rows are scaled to unit max-norm, merged and pruned
    to an irredundant description of the cone {y : Ey <= 0}.
    """
    F = np.asarray(F, dtype=float)
    y0 = np.asarray(y0, dtype=float).reshape(-1)
    if F.ndim != 2 or F.shape[0] != y0.shape[0]:
        raise StructuralError(f"F {F.shape} and y0 {y0.shape} do not match")
    f, n = F.shape

    origin_cone = HPolytope(F, np.zeros(f))
    for d in np.vstack([np.eye(n), -np.eye(n)]):
        if support(origin_cone, d) > tol:
            raise UnboundedTemplate("P(0) is not {0}: the template is unbounded")
    if HPolytope(F, y0).is_empty():
        raise UnboundedTemplate("witness polytope P(y0) is empty")

    points, actives = _enumerate_with_active_sets(F, y0, tol)
    V = np.zeros((len(points), n, f))
    raw_edges = []
    for i, active in enumerate(actives):
        if len(active) != n:
            raise DegenerateTemplate(
                f"vertex {points[i].tolist()} has {len(active)} active facets, expected {n}"
            )
        V[i][:, list(active)] = np.linalg.inv(F[list(active)])
        for j in range(f):
            if j not in active:
                row = F[j] @ V[i]
                row[j] -= 1.0
                raw_edges.append(row)
    E = np.array(raw_edges).reshape(-1, f)
    if reduce_edges and E.shape[0]:
        E = _reduce_cone(E, tol)
    if E.shape[0] and np.max(E @ y0) > tol * (1.0 + np.max(np.abs(y0))):
        raise DegenerateTemplate("witness offset violates its own configuration constraint")
    logger.debug("template built: f=%d v=%d e=%d", f, V.shape[0], E.shape[0])
    return CcTemplate(F, E, V, tuple(actives))


def _reduce_cone(E, tol):
    scale = np.max(np.abs(E), axis=1)
    E = E[scale > ZERO_ROW_TOL] / scale[scale > ZERO_ROW_TOL, None]
    E, _ = _dedupe_rows(E, np.zeros(E.shape[0]))
    keep = list(range(E.shape[0]))
    for i in range(E.shape[0]):
        others = [j for j in keep if j != i]
        rows = np.vstack([E[others], E[i]])
        rhs = np.concatenate([np.zeros(len(others)), [1.0]])
        result = solve_lp(-E[i], rows, rhs)
        if result.optimal and -result.objective <= tol:
            keep.remove(i)
    return E[keep]


def _check_configuration(template, y, tol):
    if template.configuration_residual(y) > tol:
        raise ConfigurationViolated(
            f"Ey <= 0 violated by {template.configuration_residual(y):.3e}"
        )


def vertices_of(template, y, tol=CONTAINMENT_TOL):
    """The vertex maps V_i y of a configuration-respecting y."""
    _check_configuration(template, y, tol)
    return VPolytope(template.vertex_points(y))


def verify_cc_relation(template, y, tol=CONTAINMENT_TOL):
    """Two-sided check of P(y) = convh({V_i y}) against independent enumeration."""
    y = np.asarray(y, dtype=float)
    _check_configuration(template, y, tol)
    images = template.vertex_points(y)
    if np.any(images @ template.F.T > y + tol):
        return False
    for vertex in enumerate_vertices(template.F, y):
        if np.min(np.max(np.abs(images - vertex), axis=1)) > 1e-7:
            return False
    return True


# =============================================================================
# PROJECTION AND BACKWARD REACHABILITY
# =============================================================================

def _eliminate(F, y, column):
    coeff = F[:, column]
    scale = ZERO_ROW_TOL * np.max(np.abs(F), axis=1)
    pos = coeff > scale
    neg = coeff < -scale
    zero = ~(pos | neg)
    Fp, yp = F[pos] / coeff[pos, None], y[pos] / coeff[pos]
    Fn, yn = F[neg] / -coeff[neg, None], y[neg] / -coeff[neg]
    combined = (Fp[:, None, :] + Fn[None, :, :]).reshape(-1, F.shape[1])
    rhs = (yp[:, None] + yn[None, :]).reshape(-1)
    F_new = np.vstack([F[zero], combined])
    y_new = np.concatenate([y[zero], rhs])
    return np.delete(F_new, column, axis=1), y_new


def fm_project(H, drop):
    """
    Project {w : Fw <= y} onto the coordinates not listed in ``drop``.

    ``drop`` must be a contiguous block of indices. Redundant rows are removed
    after every elimination step.
    """
    indices = sorted(range(H.n)[drop] if isinstance(drop, slice) else list(drop))
    if not indices:
        return H.remove_redundant()
    if indices != list(range(indices[0], indices[-1] + 1)):
        raise StructuralError("fm_project drops a contiguous block only")
    F, y = H.F, H.y
    keep_n = H.n - len(indices)
    for column in reversed(indices):
        F, y = _eliminate(F, y, column)
        F, y, infeasible = _clean_rows(F, y)
        width = F.shape[1]
        if infeasible:
            return HPolytope.empty(keep_n)
        if F.shape[0]:
            reduced = HPolytope(F, y).remove_redundant()
            F, y = reduced.F, reduced.y
        F = F.reshape(-1, width)
        logger.debug("eliminated column %d: %d rows remain", column, F.shape[0])
    return HPolytope(F.reshape(-1, keep_n), y)


def pre_set(X, A, B, U):
    """{x : exists u in U with Ax + Bu in X}."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    n, m = B.shape
    lifted_F = np.vstack([
        np.hstack([X.F @ A, X.F @ B]),
        np.hstack([np.zeros((U.m, n)), U.F]),
    ])
    lifted = HPolytope.from_inequalities(lifted_F, np.concatenate([X.y, U.y]), n + m)
    return fm_project(lifted, range(n, n + m))


# =============================================================================
# INVARIANT SET ITERATIONS
# =============================================================================

def max_positive_invariant(A_cl, X_c, tol=None, max_iter=None):
    """Maximal invariant set of x+ = A_cl x inside X_c."""
    tol = conf.resolve(tol, "SET_INCLUSION_TOL")
    max_iter = conf.resolve(max_iter, "SET_MAX_ITER")
    A_cl = np.atleast_2d(np.asarray(A_cl, dtype=float))
    radius = max(abs(np.linalg.eigvals(A_cl)))
    if radius >= 1.0:
        raise UnstableClosedLoop(f"spectral radius {radius:.6f} >= 1")
    if not X_c.contains(np.zeros(X_c.n)):
        raise StructuralError("constraint set must contain the origin")

    omega = X_c.remove_redundant()
    for iteration in range(1, max_iter + 1):
        successor = HPolytope.from_inequalities(omega.F @ A_cl, omega.y, omega.n)
        if all(support(omega, row) <= rhs + tol for row, rhs in zip(successor.F, successor.y)):
            logger.debug("positive invariant set after %d iterations, %d facets",
                         iteration, omega.m)
            return omega
        omega = omega.intersect(successor).remove_redundant()
    logger.warning("positive invariant iteration hit %d iterations", max_iter)
    raise IterationLimit("maximal positive invariant set did not converge",
                         last_iterate=omega, iterations=max_iter)


def _backward_iteration(A, B, X, U, target_scale, tol, max_iter, label):
    current = X.remove_redundant()
    for iteration in range(1, max_iter + 1):
        target = current.scaled(target_scale) if target_scale != 1.0 else current
        following = current.intersect(pre_set(target, A, B, U)).remove_redundant()
        if contains_set(following, current, tol):
            logger.debug("%s set after %d iterations, %d facets", label, iteration, following.m)
            return following
        current = following
        logger.debug("%s iteration %d: %d facets", label, iteration, current.m)
    logger.warning("%s iteration hit %d iterations", label, max_iter)
    raise IterationLimit(f"{label} set iteration did not converge",
                         last_iterate=current, iterations=max_iter)


def max_control_invariant(A, B, X, U, tol=None, max_iter=None):
    """Maximal control invariant subset of X under inputs in U."""
    tol = conf.resolve(tol, "SET_INCLUSION_TOL")
    max_iter = conf.resolve(max_iter, "SET_MAX_ITER")
    return _backward_iteration(A, B, X, U, 1.0, tol, max_iter, "control invariant")


def max_contractive(A, B, X, U, lam, tol=None, max_iter=None):
    """Maximal lam-contractive subset of X: every x reaches lam * set in one step."""
    if not 0.0 < lam <= 1.0:
        raise StructuralError("lambda must lie in (0, 1]")
    tol = conf.resolve(tol, "SET_INCLUSION_TOL")
    max_iter = conf.resolve(max_iter, "SET_MAX_ITER")
    return _backward_iteration(A, B, X, U, lam, tol, max_iter, "contractive")


# =============================================================================
# DISTANCES
# =============================================================================

def _points_of(Z):
    return Z.vertices if isinstance(Z, VPolytope) else enumerate_vertices(Z.F, Z.y)


def _distance_to(Z, point):
    """min over x in Z of |point - x|_inf, by LP over (x or weights, t)."""
    n = point.shape[0]
    if isinstance(Z, VPolytope):
        k = Z.vertices.shape[0]
        # variables: weights (k), t
        A_in = np.vstack([
            np.hstack([-Z.vertices.T, -np.ones((n, 1))]),
            np.hstack([Z.vertices.T, -np.ones((n, 1))]),
            np.hstack([-np.eye(k), np.zeros((k, 1))]),
        ])
        b_in = np.concatenate([-point, point, np.zeros(k)])
        A_eq = np.hstack([np.ones((1, k)), np.zeros((1, 1))])
        result = solve_lp(np.eye(k + 1)[-1], A_in, b_in, A_eq, [1.0])
    else:
        # variables: x (n), t
        A_in = np.vstack([
            np.hstack([-np.eye(n), -np.ones((n, 1))]),
            np.hstack([np.eye(n), -np.ones((n, 1))]),
            np.hstack([Z.F, np.zeros((Z.m, 1))]),
        ])
        b_in = np.concatenate([-point, point, Z.y])
        result = solve_lp(np.eye(n + 1)[-1], A_in, b_in)
    if not result.optimal:
        raise EmptySet(f"distance LP ended with status {result.status.value}")
    return max(result.objective, 0.0)


def hausdorff(Z1, Z2, tol=CONTAINMENT_TOL):
    """d(Z1; Z2) = min{eps >= 0 : Z2 ⊆ Z1 + eps B_inf}, for Z1 ⊆ Z2."""
    for vertex in _points_of(Z1):
        if not Z2.contains(vertex, tol):
            raise NotNested(f"vertex {vertex.tolist()} of the inner set lies outside the outer set")
    return max(_distance_to(Z1, vertex) for vertex in _points_of(Z2))
