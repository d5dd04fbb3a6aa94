from cc_terminal.management.base import StudioCommand
from cc_terminal.mpc import dimensions, solve_mpc


class Command(StudioCommand):
    help = "Solve the MPC problem once at an initial state."

    def add_command_arguments(self, parser):
        self.state_argument(parser)
        parser.add_argument("--horizon", type=int, help="Override the problem file's N")

    def run(self, options):
        problem_file = self.load_problem(options)
        x0 = self.check_state(problem_file, options["x"])
        problem = problem_file.problem(N=options.get("horizon"))
        variables, rows = dimensions(problem)
        self.stdout.write(f"N = {problem.N}: {variables} variables, {rows} inequality rows")
        solution = solve_mpc(problem, x0)
        if not solution.feasible:
            self.stdout.write(self.style.WARNING("x0 is outside the admissible region"))
            return
        self.stdout.write(f"u0 = {solution.u0.tolist()}")
        self.stdout.write(f"V_N(x0) = {solution.value}")
        self.stdout.write(f"solve time = {solution.solve_time:.4f} s")
