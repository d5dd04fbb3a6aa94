from cc_terminal.management.base import StudioCommand
from cc_terminal.mpc import suboptimality


class Command(StudioCommand):
    help = "Closed-loop suboptimality s_N(x0) against the long-horizon reference."

    def add_command_arguments(self, parser):
        self.state_argument(parser)
        parser.add_argument("--steps", type=int, default=50, help="Closed-loop steps M")
        parser.add_argument("--horizon", type=int, help="Override the problem file's N")
        parser.add_argument("--beta", type=float, help="Override the problem file's beta")

    def run(self, options):
        problem_file = self.load_problem(options)
        x0 = self.check_state(problem_file, options["x"])
        design = problem_file.design(beta=options.get("beta"))
        problem = problem_file.problem(design, N=options.get("horizon"))
        value = suboptimality(problem, x0, options["steps"])
        self.stdout.write(f"s_{problem.N}(x0) = {value:.6f}")
