from pathlib import Path

from cc_terminal.exceptions import IterationLimit
from cc_terminal.management.base import StudioCommand
from cc_terminal.polytope import max_control_invariant
from cc_terminal.studio import Report, emit_csv, estimate_region, radial_gap, region_distance


class Command(StudioCommand):
    help = "Estimate the admissible region O_N along rays and compare it with X_MCI."

    def add_command_arguments(self, parser):
        parser.add_argument("--horizon", type=int, help="Override the problem file's N")
        parser.add_argument("--directions", type=int, help="Number of ray directions")
        parser.add_argument("--mci-max-iter", type=int, default=100,
                            help="Iteration cap for the maximal control invariant set")

    def run(self, options):
        problem_file = self.load_problem(options)
        problem = problem_file.problem(N=options.get("horizon"))
        region = estimate_region(problem, options.get("directions"), tol=options.get("tol"),
                                 seed=options.get("seed"), jobs=options.get("jobs"))
        plant = problem.plant
        try:
            mci = max_control_invariant(plant.A, plant.B, plant.X, plant.U,
                                        max_iter=options["mci_max_iter"])
        except IterationLimit as exc:
            self.stdout.write(self.style.WARNING(f"X_MCI capped after {exc.iterations} iterations"))
            mci = exc.last_iterate
        if plant.n_x == 2:
            self.stdout.write(f"d(O_{problem.N}; X_MCI) = {region_distance(region, mci)}")
        else:
            self.stdout.write(f"radial gap to X_MCI = {radial_gap(region, mci)}")
        self.stdout.write(f"{int(region.saturated.sum())}/{len(region.radii)} rays reach X")
        if options.get("out"):
            report = Report("region", series={"rays": region.frame()})
            path = emit_csv(report, Path(options["out"]) / f"region_N{problem.N}.csv")
            self.stdout.write(f"wrote {path}")
