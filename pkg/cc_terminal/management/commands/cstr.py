from cc_terminal.management.base import StudioCommand
from cc_terminal.studio import emit_report, run_cstr


class Command(StudioCommand):
    help = "Run the reactor case study: region criterion per scheme, closed loops and timing."
    default_problem = "cstr.json"

    def add_command_arguments(self, parser):
        parser.add_argument("--directions", type=int, help="Number of ray directions")

    def run(self, options):
        problem_file = self.load_problem(options)
        report = run_cstr(problem_file, seed=options.get("seed"), tol=options.get("tol"),
                          jobs=options.get("jobs"), num_directions=options.get("directions"))
        summary = report.summary
        self.stdout.write(f"dimensions = {summary['dimensions']}")
        self.stdout.write(f"smallest N meeting the region criterion = {summary['criterion_N']}")
        self.stdout.write(f"mean solve time = {summary['mean_solve_time']}")
        self.stdout.write(f"time saving = {summary['time_saving']:.3f}")
        for path in emit_report(report, options.get("out") or "out"):
            self.stdout.write(f"wrote {path}")
