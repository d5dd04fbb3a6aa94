import numpy as np

from cc_terminal.management.base import StudioCommand
from cc_terminal.polytope import verify_cc_relation


class Command(StudioCommand):
    help = "Build the configuration-constrained template (F, E, V) of a problem file."

    def add_command_arguments(self, parser):
        parser.add_argument("--samples", type=int, default=50,
                            help="Random offsets y with Ey <= 0 used to check the template")

    def run(self, options):
        problem_file = self.load_problem(options)
        template = problem_file.build_template()
        rng = np.random.default_rng(options.get("seed") or 0)
        witness = np.asarray(problem_file.template.get("y0", np.ones(template.f)), dtype=float)
        checked = 0
        for _ in range(options["samples"]):
            # Scaled and translated copies of the witness keep every vertex configuration.
            shift = template.F @ rng.normal(scale=0.1, size=template.n)
            y = rng.uniform(0.2, 2.0) * witness + shift
            checked += verify_cc_relation(template, y)
        self.stdout.write(f"f = {template.f}, v = {template.v}, e = {template.e}")
        self.stdout.write(f"cc-relation holds on {checked}/{options['samples']} samples")
        self.write_json(options, "template.json", template.to_dict())
