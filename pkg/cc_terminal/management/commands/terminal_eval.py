from cc_terminal.management.base import StudioCommand
from cc_terminal.terminal import eval_lqr_opt_cost, eval_terminal_cost, membership_hatTLQR, membership_T_beta


class Command(StudioCommand):
    help = "Evaluate the terminal cost m(x) and set memberships at a state."

    def add_command_arguments(self, parser):
        self.state_argument(parser)
        parser.add_argument("--beta", type=float, help="Override the problem file's beta")

    def run(self, options):
        problem_file = self.load_problem(options)
        x = self.check_state(problem_file, options["x"])
        design = problem_file.design(beta=options.get("beta"))
        evaluation = eval_terminal_cost(design, x)
        self.stdout.write(f"T(beta) membership: {membership_T_beta(design, x).verdict.value}")
        self.stdout.write(f"hat T_LQR membership: {membership_hatTLQR(design, x).verdict.value}")
        self.stdout.write(f"m(x) = {evaluation.value}")
        self.stdout.write(f"LQR-optimal terminal cost = {eval_lqr_opt_cost(design, x)}")
        if evaluation.finite:
            self.write_json(options, "terminal.json", {
                "x": x.tolist(), "value": evaluation.value,
                "y": evaluation.y_star.tolist(), "ys": evaluation.ys_star.tolist(),
                "v": evaluation.v_star.tolist(),
            })
