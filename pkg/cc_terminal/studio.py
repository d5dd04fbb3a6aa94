"""
Experiment studio for the terminal-ingredient studies.

This module handles:
- JSON problem files (plant, constraints, cost, template source, weights)
- The origin-fan template recipe for planar systems
- Admissible-region estimation along rays and distances to X_MCI
- The two case-study runners and their CSV / JSON reports
"""

import itertools
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from scipy import spatial, stats

from . import conf
from .exceptions import IterationLimit, ProblemFileError, StructuralError, TemplateRecipeError
from .mpc import (
    MpcProblem,
    NominalLqr,
    PlantSpec,
    Proposed,
    dimensions,
    infinite_horizon_reference,
    lyapunov_gaps,
    project_onto_admissible,
    simulate,
    suboptimality,
    trace_frame,
)
from .polytope import (
    HPolytope,
    VPolytope,
    build_template,
    hausdorff,
    max_contractive,
    max_control_invariant,
    max_positive_invariant,
)
from .qpcore import QpStatus, solve_lp
from .regulator import StageCost, solve_dare
from .terminal import design_terminal, tube_sequence

logger = logging.getLogger(__name__)

REGION_TOL = 1e-4
NESTING_TOL = 1e-6


def fixture_path(name):
    base = conf.setting("FIXTURE_DIR") or Path(__file__).resolve().parent / "fixtures"
    return Path(base) / name


# =============================================================================
# PROBLEM FILES
# =============================================================================

def _matrix_field(data, name, rows=None, cols=None):
    if name not in data:
        raise ProblemFileError(name, "missing")
    try:
        value = np.atleast_2d(np.asarray(data[name], dtype=float))
    except (TypeError, ValueError):
        raise ProblemFileError(name, "must be a numeric matrix")
    if not np.all(np.isfinite(value)):
        raise ProblemFileError(name, "entries must be finite")
    if rows is not None and value.shape[0] != rows:
        raise ProblemFileError(name, f"expected {rows} rows, got {value.shape[0]}")
    if cols is not None and value.shape[1] != cols:
        raise ProblemFileError(name, f"expected {cols} columns, got {value.shape[1]}")
    return value


def _polytope_field(data, name, n):
    block = data.get(name)
    if not isinstance(block, dict):
        raise ProblemFileError(name, 'must be an object {"F", "y"}')
    F = _matrix_field(block, "F", cols=n) if block.get("F") else np.zeros((0, n))
    y = np.asarray(block.get("y", []), dtype=float).reshape(-1)
    if y.shape[0] != F.shape[0]:
        raise ProblemFileError(f"{name}.y", f"expected {F.shape[0]} entries, got {y.shape[0]}")
    try:
        return HPolytope(F, y)
    except ValueError as exc:
        raise ProblemFileError(name, str(exc))


@dataclass(frozen=True, eq=False)
class ProblemFile:
    A: np.ndarray
    B: np.ndarray
    X: HPolytope
    U: HPolytope
    Q: np.ndarray
    S: np.ndarray
    R: np.ndarray
    template: dict
    beta: float
    gamma: object
    theta: object
    N: int
    experiment: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ProblemFileError("<root>", "problem file must hold a JSON object")
        A = _matrix_field(data, "A")
        n_x = A.shape[0]
        if A.shape[1] != n_x:
            raise ProblemFileError("A", f"must be square, got {A.shape}")
        B = _matrix_field(data, "B", rows=n_x)
        n_u = B.shape[1]
        X = _polytope_field(data, "X", n_x)
        U = _polytope_field(data, "U", n_u)
        Q = _matrix_field(data, "Q", rows=n_x, cols=n_x)
        R = _matrix_field(data, "R", rows=n_u, cols=n_u)
        S = _matrix_field(data, "S", rows=n_x, cols=n_u) if "S" in data else np.zeros((n_x, n_u))

        template = data.get("template")
        if not isinstance(template, dict) or not ("F" in template or "lambda" in template):
            raise ProblemFileError("template", 'must be {"F": matrix} or {"lambda", "facets"}')
        if "F" in template:
            _matrix_field(template, "F", cols=n_x)
        elif "facets" not in template:
            raise ProblemFileError("template.facets", "missing")

        beta = data.get("beta")
        if not isinstance(beta, (int, float)) or not 0.0 <= beta <= 1.0:
            raise ProblemFileError("beta", "must be a number in [0, 1]")
        gamma = data.get("gamma", "identity")
        if gamma != "identity":
            gamma = _matrix_field(data, "gamma")
        theta = data.get("theta", "theta_min")
        if theta != "theta_min":
            theta = _matrix_field(data, "theta", rows=n_u, cols=n_u)
        N = data.get("N")
        if not isinstance(N, int) or N < 1:
            raise ProblemFileError("N", "must be a positive integer")
        experiment = data.get("experiment", {})
        if not isinstance(experiment, dict):
            raise ProblemFileError("experiment", "must be an object")
        if "gain" in experiment:
            _matrix_field(experiment, "gain", rows=n_u, cols=n_x)
        return cls(A, B, X, U, Q, S, R, dict(template), float(beta), gamma, theta, N,
                   dict(experiment))

    @classmethod
    def load(cls, path):
        try:
            with open(path, encoding="utf-8") as handle:
                data = json.load(handle)
        except json.JSONDecodeError as exc:
            raise ProblemFileError("<root>", f"invalid JSON: {exc}")
        except OSError as exc:
            raise ProblemFileError("<root>", f"cannot read {path}: {exc.strerror or exc}")
        return cls.from_dict(data)

    def to_dict(self):
        def plain(value):
            return value.tolist() if isinstance(value, np.ndarray) else value

        return {
            "A": self.A.tolist(),
            "B": self.B.tolist(),
            "X": self.X.to_dict(),
            "U": self.U.to_dict(),
            "Q": self.Q.tolist(),
            "S": self.S.tolist(),
            "R": self.R.tolist(),
            "template": {k: plain(v) for k, v in self.template.items()},
            "beta": self.beta,
            "gamma": plain(self.gamma),
            "theta": plain(self.theta),
            "N": self.N,
            "experiment": {k: plain(v) for k, v in self.experiment.items()},
        }

    def dump(self, path):
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(self.to_dict(), handle, indent=2, sort_keys=True)

    # -- builders -------------------------------------------------------------

    def plant(self):
        return PlantSpec(self.A, self.B, self.X, self.U)

    def cost(self):
        return StageCost(self.Q, self.R, self.S)

    def gain(self):
        gain = self.experiment.get("gain")
        return None if gain is None else np.asarray(gain, dtype=float)

    def build_template(self):
        if "F" in self.template:
            F = np.asarray(self.template["F"], dtype=float)
            y0 = np.asarray(self.template.get("y0", np.ones(F.shape[0])), dtype=float)
            return build_template(F, y0)
        return build_example1_template(self.plant(), self.template["lambda"],
                                       int(self.template["facets"]))

    def design(self, template=None, beta=None):
        template = template if template is not None else self.build_template()
        beta = self.beta if beta is None else beta
        gamma = None if isinstance(self.gamma, str) else self.gamma
        theta = None if isinstance(self.theta, str) else self.theta
        return design_terminal(template, self.A, self.B, self.X, self.U, self.cost(), beta,
                               Gamma=gamma, Theta=theta, K=self.gain())

    def problem(self, design=None, N=None):
        design = design if design is not None else self.design()
        return MpcProblem(self.plant(), self.cost(), N or self.N, Proposed(design))


# =============================================================================
# TEMPLATE RECIPE
# =============================================================================

def build_example1_template(plant, lam=0.95, k=6):
    """
    Template from the k largest origin-fan triangles of the lam-contractive set.

    The vertices of the contractive set are ordered by angle, each consecutive
    pair spans a triangle with the origin, and the convex hull of the k
    largest triangles gives F, normalised so that P(1) is that hull.
    """
    if plant.n_x != 2:
        raise TemplateRecipeError("the origin-fan recipe needs a planar system")
    contractive = max_contractive(plant.A, plant.B, plant.X, plant.U, lam)
    vertices = contractive.vertices().vertices
    if vertices.shape[0] < max(k, 3):
        raise TemplateRecipeError(f"contractive set has {vertices.shape[0]} vertices, need {k}")
    vertices = vertices[np.argsort(np.arctan2(vertices[:, 1], vertices[:, 0]))]
    following = np.roll(vertices, -1, axis=0)
    areas = 0.5 * np.abs(vertices[:, 0] * following[:, 1] - vertices[:, 1] * following[:, 0])
    chosen = np.argsort(-areas, kind="stable")[:k]
    points = np.vstack([np.zeros((1, 2)), vertices[chosen], following[chosen]])
    hull = spatial.ConvexHull(points)
    normals, offsets = hull.equations[:, :2], hull.equations[:, 2]
    if np.any(offsets > -1e-12):
        raise TemplateRecipeError("origin lies on the boundary of the selected hull")
    F = normals / -offsets[:, None]
    logger.info("origin-fan template: %d contractive vertices, %d facets",
                vertices.shape[0], F.shape[0])
    return build_template(F, np.ones(F.shape[0]))


# =============================================================================
# REGION ESTIMATION
# =============================================================================

@dataclass(frozen=True, eq=False)
class RegionEstimate:
    """
    Per-direction admissible radii; rays are x0 = t * (scale * d).

    Every endpoint is admissible. On rays that stop short of X the endpoint
    scaled by (1 + 2 tol) is infeasible; saturated rays end on the boundary
    of X instead, where no such bracket exists.
    """

    directions: np.ndarray
    scale: np.ndarray
    radii: np.ndarray
    saturated: np.ndarray
    tol: float

    @property
    def endpoints(self):
        return self.radii[:, None] * self.directions * self.scale[None, :]

    @property
    def polytope(self):
        return VPolytope(np.vstack([self.endpoints, np.zeros((1, self.scale.shape[0]))]))

    def frame(self):
        frame = pd.DataFrame(self.directions, columns=[f"d[{i}]" for i in range(self.scale.shape[0])])
        frame["radius"] = self.radii
        frame["saturated"] = self.saturated
        return frame


def circle_directions(count):
    angles = np.linspace(0.0, 2.0 * np.pi, count, endpoint=False)
    return np.column_stack([np.cos(angles), np.sin(angles)])


def sphere_directions(count, dim, seed=None):
    """Scrambled Halton points pushed through the normal quantile onto the sphere."""
    sampler = stats.qmc.Halton(d=dim, scramble=True, seed=conf.resolve(seed, "DEFAULT_SEED"))
    cube = np.clip(sampler.random(count), 1e-12, 1.0 - 1e-12)
    gauss = stats.norm.ppf(cube)
    return gauss / np.linalg.norm(gauss, axis=1, keepdims=True)


def _box_scale(X):
    return np.array([min(X.radius_along(e), X.radius_along(-e)) for e in np.eye(X.n)])


def _feasibility(parametric, x0):
    x0 = np.asarray(x0, dtype=float)
    result = solve_lp(np.zeros(parametric.n), parametric.A_in,
                      parametric.b0_in + parametric.Bx_in @ x0,
                      parametric.A_eq, parametric.b0_eq + parametric.Bx_eq @ x0)
    return result.status


def _ray_radius(parametric, ray, limit):
    """max t in [0, limit] with t * ray admissible, as one LP over (t, z)."""
    n = parametric.n
    A_in = np.vstack([
        np.hstack([-(parametric.Bx_in @ ray)[:, None], parametric.A_in]),
        np.hstack([[[1.0]], np.zeros((1, n))]),
        np.hstack([[[-1.0]], np.zeros((1, n))]),
    ])
    b_in = np.concatenate([parametric.b0_in, [limit, 0.0]])
    A_eq = np.hstack([-(parametric.Bx_eq @ ray)[:, None], parametric.A_eq])
    cost = np.zeros(n + 1)
    cost[0] = -1.0
    result = solve_lp(cost, A_in, b_in, A_eq, parametric.b0_eq)
    return result.point[0] if result.optimal else None


def _certified_radius(parametric, ray, limit, tol):
    """Certified radius along ``ray``: feasible at r, infeasible at (1 + 2 tol) r."""
    if limit <= 0.0:
        return 0.0, False
    t_star = _ray_radius(parametric, ray, limit)
    if t_star is not None:
        t_star = min(max(t_star, 0.0), limit)
        if t_star >= limit * (1.0 - tol):
            if _feasibility(parametric, limit * ray) is QpStatus.OPTIMAL:
                return limit, True
        radius = t_star * (1.0 - 0.5 * tol)
        if radius == 0.0 or (
            _feasibility(parametric, radius * ray) is QpStatus.OPTIMAL
            and _feasibility(parametric, (1.0 + 2.0 * tol) * radius * ray) is QpStatus.INFEASIBLE
        ):
            return radius, False
    logger.debug("ray LP not certified; bisecting")
    return _bisect(parametric, ray, limit, tol)


def _bisect(parametric, ray, limit, tol):
    if _feasibility(parametric, limit * ray) is QpStatus.OPTIMAL:
        return limit, True
    lo, hi = 0.0, limit
    while hi - lo > tol * max(lo, 1e-12) and hi - lo > 1e-12:
        mid = 0.5 * (lo + hi)
        if _feasibility(parametric, mid * ray) is QpStatus.OPTIMAL:
            lo = mid
        else:
            hi = mid
    return lo, False


def _ray_chunk(args):
    parametric, rays, limits, tol = args
    return [_certified_radius(parametric, ray, limit, tol) for ray, limit in zip(rays, limits)]


def _fan_out(function, chunks, jobs):
    if jobs <= 1 or len(chunks) <= 1:
        return [function(chunk) for chunk in chunks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(function, chunks))


def estimate_region(problem, num_directions=None, tol=None, seed=None, jobs=None, directions=None):
    """
    Inner estimate of the admissible region O_N, clipped to X.

    Each ray is scaled by the half-widths of X. The exact ray LP seeds the
    radius, which is then certified by a feasible / infeasible pair of
    feasibility LPs; rays the LP cannot certify fall back to bisection.
    """
    plant = problem.plant
    tol = REGION_TOL if tol is None else tol
    jobs = conf.resolve(jobs, "DEFAULT_JOBS")
    if directions is None:
        if num_directions is None:
            num_directions = 360 if plant.n_x == 2 else 2000
        directions = (circle_directions(num_directions) if plant.n_x == 2
                      else sphere_directions(num_directions, plant.n_x, seed))
    scale = _box_scale(plant.X)
    rays = directions * scale[None, :]
    limits = np.array([plant.X.radius_along(ray) for ray in rays])
    parametric = problem.parametric

    chunk_count = max(1, min(len(rays), 4 * jobs))
    bounds = np.linspace(0, len(rays), chunk_count + 1).astype(int)
    chunks = [(parametric, rays[a:b], limits[a:b], tol) for a, b in zip(bounds[:-1], bounds[1:])]
    measured = [item for part in _fan_out(_ray_chunk, chunks, jobs) for item in part]
    radii = np.array([r for r, _ in measured])
    saturated = np.array([s for _, s in measured], dtype=bool)
    logger.info("region N=%d: %d directions, %d saturated", problem.N, len(radii),
                int(saturated.sum()))
    return RegionEstimate(directions, scale, radii, saturated, tol)


def region_distance(region, outer):
    """Hausdorff distance d(O_N; outer) for planar regions."""
    return hausdorff(region.polytope, outer, tol=NESTING_TOL)


def radial_gap(region, outer):
    """Largest per-direction gap between the radii of ``outer`` and the region, in ray units."""
    rays = region.directions * region.scale[None, :]
    outer_radii = np.array([outer.radius_along(ray) for ray in rays])
    return float(np.max(np.maximum(outer_radii - region.radii, 0.0)))


def sample_region(region, count, rng):
    """Random states inside the region estimate (uniform radius fraction per ray)."""
    picks = rng.integers(0, region.radii.shape[0], size=count)
    fractions = rng.uniform(0.0, 1.0, size=count) ** (1.0 / region.scale.shape[0])
    return fractions[:, None] * region.endpoints[picks]


def _suboptimality_chunk(args):
    problem, states, M = args
    return [suboptimality(problem, x0, M) for x0 in states if np.any(x0)]


def mean_suboptimality(problem, states, M, jobs=None):
    """Average s_N over the given initial states."""
    jobs = conf.resolve(jobs, "DEFAULT_JOBS")
    chunks = [(problem, part, M) for part in np.array_split(np.asarray(states), max(1, jobs))
              if len(part)]
    values = [s for part in _fan_out(_suboptimality_chunk, chunks, jobs) for s in part]
    return float(np.mean(values)) if values else math.nan


def smallest_horizon(build, lo, hi, accept):
    """Smallest N in [lo, hi] with accept(build(N)), assuming monotone acceptance; None if none."""
    if not accept(build(hi)):
        return None
    while lo < hi:
        mid = (lo + hi) // 2
        if accept(build(mid)):
            hi = mid
        else:
            lo = mid + 1
    return lo


# =============================================================================
# REPORTS
# =============================================================================

@dataclass(eq=False)
class Report:
    name: str
    summary: dict = field(default_factory=dict)
    series: dict = field(default_factory=dict)


def _series_frame(report, series):
    if series is None:
        if len(report.series) != 1:
            raise StructuralError(
                f"report {report.name!r} holds {len(report.series)} series; name the one to write")
        series = next(iter(report.series))
    if series not in report.series:
        raise StructuralError(f"report {report.name!r} has no series {series!r}")
    return report.series[series]


def emit_csv(report, path, series=None):
    """Write one series of ``report`` with a fixed column order and full-precision decimals."""
    frame = _series_frame(report, series)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=conf.setting("CSV_FLOAT_FORMAT"))
    return path


def _jsonable(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


def emit_report(report, out_dir):
    """One CSV per series plus ``<name>_summary.json``; returns the written paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = [emit_csv(report, out_dir / f"{report.name}_{key}.csv", key) for key in report.series]
    summary_path = out_dir / f"{report.name}_summary.json"
    with open(summary_path, "w", encoding="utf-8") as handle:
        json.dump(_jsonable(report.summary), handle, indent=2, sort_keys=True)
    written.append(summary_path)
    return written


# =============================================================================
# CASE STUDIES
# =============================================================================

def run_example1(problem_file=None, seed=None, tol=None, jobs=None, horizons=None, betas=None,
                 subopt_betas=None):
    """Planar case study: gain, closed loop, descent, tube, regions and beta sweeps."""
    problem_file = problem_file or ProblemFile.load(fixture_path("example1.json"))
    experiment = problem_file.experiment
    seed = conf.resolve(seed, "DEFAULT_SEED")
    tol = REGION_TOL if tol is None else tol
    horizons = horizons if horizons is not None else experiment.get("horizons", list(range(1, 10)))
    betas = betas if betas is not None else experiment.get("distance_betas", [])
    subopt_betas = subopt_betas if subopt_betas is not None else experiment.get("subopt_betas", [])
    M = int(experiment.get("M", 50))
    x0 = np.asarray(experiment.get("x0", [7.8875, -0.3386]), dtype=float)
    sweep_x0 = np.asarray(experiment.get("sweep_x0", [4.5159, -0.7044]), dtype=float)
    report = Report("example1", summary={"seed": seed, "problem": problem_file.to_dict()})

    plant, cost = problem_file.plant(), problem_file.cost()
    riccati = solve_dare(plant.A, plant.B, cost)
    template = problem_file.build_template()
    design = problem_file.design(template)
    problem = problem_file.problem(design)
    report.summary.update(K=riccati.K, template={"f": template.f, "v": template.v, "e": template.e},
                          dimensions=dimensions(problem))
    logger.info("example1: K=%s, template f=%d v=%d e=%d", riccati.K.tolist(),
                template.f, template.v, template.e)

    trace = simulate(problem, x0, M)
    reference = infinite_horizon_reference(plant, cost, x0)
    report.series["trajectory"] = trace_frame(trace)
    report.summary["suboptimality"] = suboptimality(problem, x0, M, trace, reference)
    report.summary["reference_value"] = reference.value
    report.summary["max_lyapunov_gap"] = float(np.max(lyapunov_gaps(trace), initial=-np.inf))
    first = trace.terminal[0]
    tube = tube_sequence(first, design.beta, M)
    report.series["tube"] = pd.DataFrame(tube, columns=[f"y[{j}]" for j in range(template.f)])

    mci = None
    if horizons or betas:
        mci = max_control_invariant(plant.A, plant.B, plant.X, plant.U)
    directions = experiment.get("directions")
    samples = int(experiment.get("region_samples", 0))
    rng = np.random.default_rng(seed)
    rows = []
    for N in horizons:
        candidate = problem.with_horizon(N)
        region = estimate_region(candidate, tol=tol, seed=seed, jobs=jobs, num_directions=directions)
        mean = math.nan
        if samples:
            mean = mean_suboptimality(candidate, sample_region(region, samples, rng), M, jobs=jobs)
        rows.append({"N": N, "distance": region_distance(region, mci), "mean_suboptimality": mean})
        logger.info("example1 region N=%d: %s", N, rows[-1])
    report.series["regions"] = pd.DataFrame(rows, columns=["N", "distance", "mean_suboptimality"])

    rows = []
    for beta in sorted(set(betas) | set(subopt_betas)):
        swept = problem_file.problem(problem_file.design(template, beta=beta))
        row = {"beta": beta, "distance_N1": math.nan, "suboptimality": math.nan}
        if beta in betas:
            region = estimate_region(swept.with_horizon(1), tol=tol, seed=seed, jobs=jobs,
                                     num_directions=directions)
            row["distance_N1"] = region_distance(region, mci)
        if beta in subopt_betas:
            row["suboptimality"] = suboptimality(swept, sweep_x0, M)
        logger.info("example1 beta sweep: %s", row)
        rows.append(row)
    report.series["beta_sweep"] = pd.DataFrame(rows, columns=["beta", "distance_N1", "suboptimality"])
    return report


def lqr_terminal_set(plant, K):
    """Maximal positive invariant set of x+ = (A + BK)x inside X with Kx in U."""
    K = np.asarray(K, dtype=float)
    constraint = plant.X.intersect(HPolytope.from_inequalities(plant.U.F @ K, plant.U.y, plant.n_x))
    return max_positive_invariant(plant.A + plant.B @ K, constraint)


def run_cstr(problem_file=None, seed=None, tol=None, jobs=None, num_directions=None,
             proposed_range=(1, 30), nominal_range=(1, 80)):
    """Reactor case study: dimensions, region criterion per scheme, closed loops and timing."""
    problem_file = problem_file or ProblemFile.load(fixture_path("cstr.json"))
    experiment = problem_file.experiment
    seed = conf.resolve(seed, "DEFAULT_SEED")
    tol = REGION_TOL if tol is None else tol
    num_directions = num_directions or int(experiment.get("directions", 2000))
    M = int(experiment.get("M", 300))
    x0 = np.asarray(experiment.get("x0", [0.0227, 0.0075, 3.9845, 3.9995]), dtype=float)
    nominal_N = int(experiment.get("nominal_N", 62))
    mci_iterations = int(experiment.get("mci_max_iter", 100))
    report = Report("cstr", summary={"seed": seed, "problem": problem_file.to_dict()})

    plant = problem_file.plant()
    template = problem_file.build_template()
    design = problem_file.design(template)
    terminal_set = lqr_terminal_set(plant, design.K)
    proposed = problem_file.problem(design)
    nominal = MpcProblem(plant, problem_file.cost(), nominal_N, NominalLqr(terminal_set, design.P))
    report.summary["template"] = {"f": template.f, "v": template.v, "e": template.e}
    report.summary["dimensions"] = {"proposed": dimensions(proposed),
                                    "nominal": dimensions(nominal)}
    report.series["dimensions"] = pd.DataFrame(
        [("proposed", proposed.N, *dimensions(proposed)), ("nominal", nominal.N, *dimensions(nominal))],
        columns=["scheme", "N", "variables", "inequalities"],
    )

    try:
        mci = max_control_invariant(plant.A, plant.B, plant.X, plant.U, max_iter=mci_iterations)
    except IterationLimit as exc:
        logger.warning("X_MCI capped after %d iterations; using the last iterate", exc.iterations)
        mci = exc.last_iterate
    directions = sphere_directions(num_directions, plant.n_x, seed)
    gaps = []

    def accept(candidate):
        region = estimate_region(candidate, tol=tol, jobs=jobs, directions=directions)
        gap = radial_gap(region, mci)
        gaps.append((candidate.mode.label, candidate.N, gap))
        logger.info("cstr %s N=%d: radial gap %.3e", candidate.mode.label, candidate.N, gap)
        return gap <= 2.0 * tol

    report.summary["criterion_N"] = {
        "proposed": smallest_horizon(proposed.with_horizon, *proposed_range, accept),
        "nominal": smallest_horizon(nominal.with_horizon, *nominal_range, accept),
    }
    report.series["criterion"] = pd.DataFrame(gaps, columns=["scheme", "N", "radial_gap"])

    timings = {}
    for label, problem in (("proposed", proposed), ("nominal", nominal)):
        started = time.perf_counter()
        trace = simulate(problem, x0, M)
        timings[label] = float(np.mean(trace.solve_times))
        report.series[f"trajectory_{label}"] = trace_frame(trace)
        logger.info("cstr %s closed loop done in %.1f s", label, time.perf_counter() - started)
    report.summary["mean_solve_time"] = timings
    report.summary["time_saving"] = (timings["nominal"] - timings["proposed"]) / timings["nominal"]

    if experiment.get("vertex_study", True):
        frame = vertex_study(proposed, nominal, M, jobs=jobs)
        report.series["vertex_study"] = frame
        report.summary["vertex_study"] = {
            "mean_suboptimality": float(frame["suboptimality"].mean()),
            "mean_time_saving": float(frame["time_saving"].mean()),
        }
    return report


def _vertex_case(args):
    proposed, nominal, corner, M = args
    start = project_onto_admissible(proposed, corner)
    trace_p = simulate(proposed, start, M)
    trace_n = simulate(nominal, start, M)
    tau_p, tau_n = float(np.mean(trace_p.solve_times)), float(np.mean(trace_n.solve_times))
    return {
        **{f"x[{i}]": value for i, value in enumerate(start)},
        "suboptimality": suboptimality(proposed, start, M, trace_p),
        "time_proposed_s": tau_p,
        "time_nominal_s": tau_n,
        "time_saving": (tau_n - tau_p) / tau_n,
    }


def vertex_study(proposed, nominal, M, jobs=None):
    """Project every corner of the box X onto O_N and compare both schemes from there."""
    jobs = conf.resolve(jobs, "DEFAULT_JOBS")
    half_widths = _box_scale(proposed.plant.X)
    corners = [np.array(signs) * half_widths
               for signs in itertools.product((-1.0, 1.0), repeat=half_widths.shape[0])]
    rows = _fan_out(_vertex_case, [(proposed, nominal, c, M) for c in corners], jobs)
    return pd.DataFrame(rows)
