from cc_terminal.management.base import StudioCommand
from cc_terminal.regulator import solve_dare


class Command(StudioCommand):
    help = "Solve the discrete algebraic Riccati equation of a problem file."

    def run(self, options):
        problem_file = self.load_problem(options)
        riccati = solve_dare(problem_file.A, problem_file.B, problem_file.cost())
        self.stdout.write(f"K = {riccati.K.tolist()}")
        self.stdout.write(f"P = {riccati.P.tolist()}")
        self.stdout.write(f"residual = {riccati.residual:.3e}")
        self.write_json(options, "dare.json", riccati.to_dict())
