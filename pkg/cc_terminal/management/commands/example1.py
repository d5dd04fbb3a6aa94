import pandas as pd

from cc_terminal.management.base import StudioCommand
from cc_terminal.studio import emit_report, run_example1


class Command(StudioCommand):
    help = "Run the planar case study and write its CSV series and summary."

    def add_command_arguments(self, parser):
        parser.add_argument("--quick", action="store_true",
                            help="Skip the region and beta sweeps")

    def run(self, options):
        problem_file = self.load_problem(options)
        extra = {"horizons": [], "betas": [], "subopt_betas": []} if options["quick"] else {}
        report = run_example1(problem_file, seed=options.get("seed"), tol=options.get("tol"),
                              jobs=options.get("jobs"), **extra)
        summary = report.summary
        self.stdout.write(f"K = {summary['K'].tolist()}")
        self.stdout.write(f"template f, v, e = {summary['template']}")
        self.stdout.write(f"s_N(x0) = {summary['suboptimality']:.4f}")
        for _, row in report.series["regions"].iterrows():
            line = f"d(O_{int(row['N'])}; X_MCI) = {row['distance']:.4f}"
            if pd.notna(row["mean_suboptimality"]):
                line += f", mean s_N = {row['mean_suboptimality']:.4f}"
            self.stdout.write(line)
        for path in emit_report(report, options.get("out") or "out"):
            self.stdout.write(f"wrote {path}")
