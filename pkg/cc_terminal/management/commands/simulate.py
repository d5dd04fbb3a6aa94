from pathlib import Path

from cc_terminal.management.base import StudioCommand
from cc_terminal.mpc import simulate, trace_frame
from cc_terminal.studio import Report, emit_csv


class Command(StudioCommand):
    help = "Simulate the MPC closed loop and write the trajectory as CSV."

    def add_command_arguments(self, parser):
        self.state_argument(parser)
        parser.add_argument("--steps", type=int, default=50, help="Closed-loop steps M")
        parser.add_argument("--horizon", type=int, help="Override the problem file's N")

    def run(self, options):
        problem_file = self.load_problem(options)
        x0 = self.check_state(problem_file, options["x"])
        problem = problem_file.problem(N=options.get("horizon"))
        frame = trace_frame(simulate(problem, x0, options["steps"]))
        self.stdout.write(f"final state = {frame.iloc[-1].filter(like='x[').tolist()}")
        self.stdout.write(f"closed-loop cost = {frame['stage_cost'].sum()}")
        if options.get("out"):
            path = emit_csv(Report("simulate", series={"trajectory": frame}),
                            Path(options["out"]) / "trajectory.csv")
            self.stdout.write(f"wrote {path}")
