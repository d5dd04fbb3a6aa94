import json
import math
import tempfile
from pathlib import Path

import numpy as np
import pandas as pd
from django.test import SimpleTestCase, override_settings, tag

from cc_terminal.exceptions import ProblemFileError, StructuralError, TemplateRecipeError
from cc_terminal.mpc import (
    LqrOpt,
    MpcProblem,
    NominalLqr,
    dimensions,
    lyapunov_gaps,
    simulate,
    solve_mpc,
    suboptimality,
)
from cc_terminal.polytope import HPolytope, support, verify_cc_relation
from cc_terminal.regulator import solve_dare
from cc_terminal.studio import (
    ProblemFile,
    Report,
    build_example1_template,
    circle_directions,
    emit_csv,
    emit_report,
    estimate_region,
    fixture_path,
    lqr_terminal_set,
    mean_suboptimality,
    radial_gap,
    region_distance,
    run_cstr,
    run_example1,
    sample_region,
    smallest_horizon,
    sphere_directions,
    vertex_study,
)
from cc_terminal.terminal import largest_lqr_offset

from .cases import (
    SCALAR_A,
    SCALAR_BETA,
    SCALAR_X,
    scalar_oracle,
    scalar_problem_data,
    t_beta_radius,
)

LINE = np.array([[1.0], [-1.0]])


class ProblemFileTests(SimpleTestCase):

    def test_bundled_files_parse(self):
        example = ProblemFile.load(fixture_path("example1.json"))
        self.assertEqual(example.A.shape, (2, 2))
        self.assertEqual(example.N, 5)
        cstr = ProblemFile.load(fixture_path("cstr.json"))
        self.assertEqual(cstr.gain().shape, (2, 4))
        self.assertEqual(cstr.X.m, 8)

    def test_round_trip(self):
        problem_file = ProblemFile.load(fixture_path("cstr.json"))
        canonical = problem_file.to_dict()
        self.assertEqual(ProblemFile.from_dict(canonical).to_dict(), canonical)

    def test_dump_and_load(self):
        problem_file = ProblemFile.from_dict(scalar_problem_data())
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "scalar.json"
            problem_file.dump(path)
            self.assertEqual(ProblemFile.load(path).to_dict(), problem_file.to_dict())

    def test_missing_field_is_named(self):
        data = scalar_problem_data()
        del data["A"]
        with self.assertRaises(ProblemFileError) as caught:
            ProblemFile.from_dict(data)
        self.assertEqual(caught.exception.field, "A")

    def test_field_errors(self):
        cases = {
            "beta": {"beta": 1.5},
            "N": {"N": 0},
            "template": {"template": {"facets": 6}},
            "X.y": {"X": {"F": [[1.0], [-1.0]], "y": [1.0]}},
            "Q": {"Q": [[1.0, 0.0], [0.0, 1.0]]},
            "B": {"B": [[1.0], [2.0]]},
            "theta": {"theta": [[1.0, 0.0]]},
        }
        for field, override in cases.items():
            with self.subTest(field=field):
                with self.assertRaises(ProblemFileError) as caught:
                    ProblemFile.from_dict(scalar_problem_data(**override))
                self.assertEqual(caught.exception.field, field)

    def test_invalid_json(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "broken.json"
            path.write_text("{not json", encoding="utf-8")
            with self.assertRaises(ProblemFileError):
                ProblemFile.load(path)

    def test_unreadable_file(self):
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertRaises(ProblemFileError) as caught:
                ProblemFile.load(Path(tmp) / "missing.json")
            with self.assertRaises(ProblemFileError):
                ProblemFile.load(tmp)
        self.assertEqual(caught.exception.field, "<root>")

    def test_builders(self):
        problem_file = ProblemFile.from_dict(scalar_problem_data())
        template = problem_file.build_template()
        self.assertEqual((template.f, template.v, template.e), (2, 2, 1))
        design = problem_file.design(template)
        self.assertEqual(design.beta, SCALAR_BETA)
        problem = problem_file.problem(design)
        self.assertEqual(problem.N, 3)
        self.assertEqual(problem_file.problem(design, N=7).N, 7)

    def test_given_gain(self):
        data = scalar_problem_data(experiment={"gain": [[-0.6]]})
        design = ProblemFile.from_dict(data).design()
        np.testing.assert_allclose(design.K, [[-0.6]])


class TemplateRecipeTests(SimpleTestCase):

    def test_needs_planar_plant(self):
        plant = ProblemFile.from_dict(scalar_problem_data()).plant()
        with self.assertRaises(TemplateRecipeError):
            build_example1_template(plant)


class RegionTests(SimpleTestCase):

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.problem_file = ProblemFile.from_dict(scalar_problem_data())
        cls.design = cls.problem_file.design()
        cls.directions = LINE

    def region(self, N, mode=None, **kwargs):
        problem = self.problem_file.problem(self.design, N=N)
        if mode is not None:
            problem = MpcProblem(problem.plant, problem.cost, N, mode)
        return problem, estimate_region(problem, directions=self.directions, **kwargs)

    def test_lqr_opt_radius_matches_oracle(self):
        oracle = scalar_oracle()
        for N in (1, 3):
            _, region = self.region(N, LqrOpt(self.design))
            expected = oracle.c_N(N)
            np.testing.assert_allclose(np.abs(region.endpoints[:, 0]), expected, rtol=1e-3)

    def test_proposed_radius(self):
        _, region = self.region(1)
        expected = (t_beta_radius() + 1.0) / SCALAR_A
        np.testing.assert_allclose(np.abs(region.endpoints[:, 0]), expected, rtol=1e-3)
        self.assertTrue(np.all(np.abs(region.endpoints[:, 0]) >= scalar_oracle().admissible_lower_bound(1)))
        self.assertFalse(region.saturated.any())

    def test_endpoints_are_bracketed(self):
        problem, region = self.region(2)
        for endpoint in region.endpoints:
            self.assertTrue(solve_mpc(problem, endpoint).feasible)
            self.assertFalse(solve_mpc(problem, (1.0 + 2.0 * region.tol) * endpoint * 1.001).feasible)

    def test_saturated_rays(self):
        problem = self.problem_file.problem(self.design, N=3)
        wide = MpcProblem(problem.plant, problem.cost, 3,
                          NominalLqr(HPolytope.symmetric_box([SCALAR_X]), self.design.P))
        region = estimate_region(wide, directions=LINE)
        self.assertTrue(region.saturated.all())
        np.testing.assert_allclose(region.radii, 1.0)
        np.testing.assert_allclose(np.abs(region.endpoints[:, 0]), SCALAR_X)
        for endpoint in region.endpoints:
            self.assertTrue(solve_mpc(wide, endpoint).feasible)

    def test_distances(self):
        _, region = self.region(1)
        outer = HPolytope.symmetric_box([SCALAR_X])
        reach = np.abs(region.endpoints[:, 0])
        self.assertAlmostEqual(region_distance(region, outer), SCALAR_X - reach.min(), places=6)
        self.assertAlmostEqual(radial_gap(region, outer), 1.0 - region.radii.min(), places=9)

    def test_samples_stay_inside(self):
        _, region = self.region(1)
        samples = sample_region(region, 50, np.random.default_rng(0))
        self.assertEqual(samples.shape, (50, 1))
        self.assertTrue(np.all(samples[:, 0] <= region.endpoints[:, 0].max() + 1e-12))
        self.assertTrue(np.all(samples[:, 0] >= region.endpoints[:, 0].min() - 1e-12))

    def test_frame_and_determinism(self):
        _, first = self.region(2)
        _, second = self.region(2)
        self.assertEqual(list(first.frame().columns), ["d[0]", "radius", "saturated"])
        with tempfile.TemporaryDirectory() as tmp:
            a = emit_csv(Report("a", series={"rays": first.frame()}), Path(tmp) / "a.csv").read_bytes()
            b = emit_csv(Report("b", series={"rays": second.frame()}), Path(tmp) / "b.csv").read_bytes()
        self.assertEqual(a, b)

    @override_settings(CCMPC={"REFERENCE_HORIZON": 40})
    def test_mean_suboptimality(self):
        problem = self.problem_file.problem(self.design)
        value = mean_suboptimality(problem, np.array([[2.0], [-1.5], [0.0]]), 15)
        self.assertTrue(math.isfinite(value))
        self.assertGreaterEqual(value, -1e-6)

    def test_lqr_terminal_set(self):
        plant = self.problem_file.plant()
        terminal = lqr_terminal_set(plant, self.design.K)
        self.assertAlmostEqual(support(terminal, [1.0]), scalar_oracle().b, places=7)

    @override_settings(CCMPC={"REFERENCE_HORIZON": 60})
    def test_vertex_study(self):
        proposed = self.problem_file.problem(self.design)
        plant = proposed.plant
        nominal = MpcProblem(plant, proposed.cost, 20,
                             NominalLqr(lqr_terminal_set(plant, self.design.K), self.design.P))
        frame = vertex_study(proposed, nominal, 15)
        self.assertEqual(len(frame), 2)
        self.assertEqual(list(frame.columns), ["x[0]", "suboptimality", "time_proposed_s",
                                               "time_nominal_s", "time_saving"])
        self.assertTrue(np.all(np.abs(frame["x[0]"]) < SCALAR_X))
        self.assertTrue(np.all(frame["suboptimality"] >= -1e-6))


class DirectionTests(SimpleTestCase):

    def test_circle(self):
        directions = circle_directions(360)
        self.assertEqual(directions.shape, (360, 2))
        np.testing.assert_allclose(np.linalg.norm(directions, axis=1), 1.0)
        np.testing.assert_allclose(directions[0], [1.0, 0.0])

    def test_sphere(self):
        first = sphere_directions(500, 4, seed=11)
        np.testing.assert_allclose(np.linalg.norm(first, axis=1), 1.0)
        np.testing.assert_array_equal(first, sphere_directions(500, 4, seed=11))
        self.assertLess(np.abs(first.mean(axis=0)).max(), 0.1)


class SmallestHorizonTests(SimpleTestCase):

    def test_finds_threshold(self):
        calls = []

        def accept(N):
            calls.append(N)
            return N >= 7

        self.assertEqual(smallest_horizon(lambda N: N, 1, 30, accept), 7)
        self.assertLess(len(calls), 30)

    def test_none_when_never_accepted(self):
        self.assertIsNone(smallest_horizon(lambda N: N, 1, 5, lambda N: False))

    def test_lower_end(self):
        self.assertEqual(smallest_horizon(lambda N: N, 1, 5, lambda N: True), 1)


class EmitTests(SimpleTestCase):

    def test_empty_frame_is_header_only(self):
        with tempfile.TemporaryDirectory() as tmp:
            report = Report("empty", series={"regions": pd.DataFrame(columns=["N", "distance"])})
            path = emit_csv(report, Path(tmp) / "empty.csv")
            self.assertEqual(path.read_text(encoding="utf-8").strip(), "N,distance")

    def test_full_precision(self):
        with tempfile.TemporaryDirectory() as tmp:
            report = Report("p", series={"values": pd.DataFrame({"value": [0.1]})})
            path = emit_csv(report, Path(tmp) / "nested" / "p.csv")
            self.assertEqual(path.read_text(encoding="utf-8").splitlines(),
                             ["value", "0.10000000000000001"])

    def test_named_series(self):
        report = Report("demo", series={"a": pd.DataFrame({"x": [1.0]}), "b": pd.DataFrame({"y": [2.0]})})
        with tempfile.TemporaryDirectory() as tmp:
            path = emit_csv(report, Path(tmp) / "b.csv", "b")
            self.assertEqual(path.read_text(encoding="utf-8").splitlines(), ["y", "2"])

    def test_series_must_be_named_when_ambiguous(self):
        report = Report("demo", series={"a": pd.DataFrame({"x": [1.0]}), "b": pd.DataFrame({"y": [2.0]})})
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertRaises(StructuralError):
                emit_csv(report, Path(tmp) / "demo.csv")
            with self.assertRaises(StructuralError):
                emit_csv(report, Path(tmp) / "demo.csv", "c")
            self.assertFalse((Path(tmp) / "demo.csv").exists())

    def test_report(self):
        report = Report("demo", summary={"K": np.array([[1.0, 2.0]]), "bound": math.inf,
                                         "count": np.int64(3)},
                        series={"a": pd.DataFrame({"x": [1.0]}), "b": pd.DataFrame({"y": [2.0]})})
        with tempfile.TemporaryDirectory() as tmp:
            paths = emit_report(report, tmp)
            self.assertEqual(sorted(p.name for p in paths),
                             ["demo_a.csv", "demo_b.csv", "demo_summary.json"])
            summary = json.loads((Path(tmp) / "demo_summary.json").read_text(encoding="utf-8"))
        self.assertEqual(summary, {"K": [[1.0, 2.0]], "bound": "inf", "count": 3})


class ScalarStudyTests(SimpleTestCase):

    @override_settings(CCMPC={"REFERENCE_HORIZON": 40})
    def test_region_series_carries_mean_suboptimality(self):
        data = scalar_problem_data(experiment={"M": 15, "x0": [3.0], "sweep_x0": [2.0],
                                               "directions": 2, "region_samples": 4})
        report = run_example1(ProblemFile.from_dict(data), horizons=[1, 2], betas=[0.5],
                              subopt_betas=[0.5])
        regions = report.series["regions"]
        self.assertEqual(list(regions.columns), ["N", "distance", "mean_suboptimality"])
        self.assertEqual(regions["N"].tolist(), [1, 2])
        self.assertTrue(np.all(np.isfinite(regions.to_numpy(dtype=float))))
        self.assertTrue(np.all(regions["distance"] >= 0.0))
        self.assertTrue(np.all(regions["mean_suboptimality"] >= -1e-6))
        sweep = report.series["beta_sweep"]
        self.assertEqual(sweep["beta"].tolist(), [0.5])
        self.assertTrue(math.isfinite(sweep["distance_N1"].iloc[0]))
        self.assertGreaterEqual(sweep["suboptimality"].iloc[0], -1e-6)

    def test_region_samples_default_to_off(self):
        data = scalar_problem_data(experiment={"M": 5, "x0": [1.0], "directions": 2})
        with override_settings(CCMPC={"REFERENCE_HORIZON": 20}):
            report = run_example1(ProblemFile.from_dict(data), horizons=[1], betas=[], subopt_betas=[])
        self.assertTrue(math.isnan(report.series["regions"]["mean_suboptimality"].iloc[0]))


@tag("slow", "casestudy")
class PlanarCaseStudyTests(SimpleTestCase):

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.problem_file = ProblemFile.load(fixture_path("example1.json"))
        cls.template = cls.problem_file.build_template()
        cls.design = cls.problem_file.design(cls.template)
        cls.problem = cls.problem_file.problem(cls.design)

    def test_gain(self):
        riccati = solve_dare(self.problem_file.A, self.problem_file.B, self.problem_file.cost())
        np.testing.assert_allclose(riccati.K, [[-4.6128, -18.8646]], atol=1e-3)

    def test_template_relation_on_random_offsets(self):
        rng = np.random.default_rng(2)
        t = self.template
        checked = 0
        for _ in range(5000):
            if checked == 200:
                break
            y = rng.uniform(0.2, 2.0) * np.ones(t.f) + t.F @ rng.normal(size=2) \
                + 0.05 * rng.normal(size=t.f)
            if t.configuration_residual(y) >= -1e-9:
                continue
            self.assertTrue(verify_cc_relation(t, y), msg=f"y={y.tolist()}")
            checked += 1
        self.assertGreater(checked, 50)

    def test_closed_loop_value_decreases(self):
        trace = simulate(self.problem, [7.8875, -0.3386], 50)
        self.assertTrue(np.all(lyapunov_gaps(trace) <= 1e-6 * (1.0 + trace.values[0])))
        self.assertTrue(np.all(np.diff(trace.values) <= 1e-6 * (1.0 + trace.values[0])))

    def test_suboptimality_of_the_reference_state(self):
        report = run_example1(self.problem_file, horizons=[], betas=[], subopt_betas=[])
        self.assertAlmostEqual(report.summary["suboptimality"], 0.0158, delta=0.002)
        self.assertEqual(len(report.series["trajectory"]), 51)
        self.assertEqual(len(report.series["tube"]), 51)
        variables, _ = report.summary["dimensions"]
        self.assertEqual(variables, 5 * 3 + 2 * self.template.f + self.template.v)

    def test_beta_sweep(self):
        distances = {0.1: 6.7116, 0.3: 6.4971, 0.5: 6.0446, 0.7: 4.6539, 0.9: 0.3930, 0.999: 0.1913}
        ratios = {0.5: 0.0235, 0.6: 0.0195, 0.7: 0.0253, 0.8: 0.0468, 0.9: 0.0554, 0.999: 0.0570}
        report = run_example1(self.problem_file, horizons=[], betas=list(distances),
                              subopt_betas=list(ratios))
        sweep = report.series["beta_sweep"].set_index("beta")
        for beta, expected in distances.items():
            with self.subTest(beta=beta, column="distance_N1"):
                self.assertAlmostEqual(sweep.loc[beta, "distance_N1"], expected, delta=0.10 * expected)
        for beta, expected in ratios.items():
            with self.subTest(beta=beta, column="suboptimality"):
                self.assertAlmostEqual(sweep.loc[beta, "suboptimality"], expected, delta=0.15 * expected)

    def test_lqr_region_is_optimal(self):
        x0 = 0.1 * self.template.vertex_points(largest_lqr_offset(self.design))[0]
        solution = solve_mpc(self.problem, x0)
        self.assertTrue(solution.feasible)
        expected = self.design.K @ x0
        np.testing.assert_allclose(solution.u0, expected, atol=1e-6 * (1.0 + np.abs(expected).max()))
        self.assertLessEqual(suboptimality(self.problem, x0, 50), 1e-4)


@tag("casestudy")
class ReactorCaseStudyTests(SimpleTestCase):

    def test_dimension_counts(self):
        problem_file = ProblemFile.load(fixture_path("cstr.json"))
        template = problem_file.build_template()
        self.assertEqual((template.f, template.v, template.e), (5, 5, 1))
        design = problem_file.design(template)
        proposed = problem_file.problem(design)
        self.assertEqual(dimensions(proposed), (110, 357))
        terminal = HPolytope.symmetric_box([0.01, 0.01, 0.1, 0.1])
        nominal = MpcProblem(proposed.plant, proposed.cost, 62, NominalLqr(terminal, design.P))
        self.assertEqual(dimensions(nominal), (372, 744 + terminal.m))

    @tag("slow")
    def test_region_criterion(self):
        data = ProblemFile.load(fixture_path("cstr.json")).to_dict()
        data["experiment"] = {**data["experiment"], "vertex_study": False}
        report = run_cstr(ProblemFile.from_dict(data))
        criterion = report.summary["criterion_N"]
        self.assertIsNotNone(criterion["proposed"])
        self.assertLessEqual(criterion["proposed"], 15)
        self.assertIsNotNone(criterion["nominal"])
        self.assertGreaterEqual(criterion["nominal"], 59)
        self.assertLessEqual(criterion["nominal"], 65)
        self.assertEqual(report.summary["dimensions"]["proposed"], (110, 357))
        self.assertNotIn("vertex_study", report.series)
