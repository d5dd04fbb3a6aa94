"""Shared options and error handling for the cc_terminal management commands."""

import json
from pathlib import Path

import numpy as np
from django.core.management.base import BaseCommand, CommandError

from cc_terminal.exceptions import CcMpcError
from cc_terminal.studio import ProblemFile, fixture_path


def parse_vector(text):
    """'1.5,-2' -> array([1.5, -2.])"""
    try:
        return np.array([float(part) for part in text.split(",") if part.strip()])
    except ValueError:
        raise CommandError(f"not a comma-separated vector: {text!r}")


class StudioCommand(BaseCommand):
    default_problem = "example1.json"

    def add_arguments(self, parser):
        parser.add_argument("--problem", help="JSON problem file (defaults to the bundled case study)")
        parser.add_argument("--out", help="Directory for CSV / JSON outputs")
        parser.add_argument("--seed", type=int, help="Seed for sampled directions and states")
        parser.add_argument("--tol", type=float, help="Region / bisection tolerance")
        parser.add_argument("--jobs", type=int, help="Worker processes for independent solves")
        self.add_command_arguments(parser)

    def add_command_arguments(self, parser):
        pass

    def handle(self, *args, **options):
        try:
            self.run(options)
        except CcMpcError as exc:
            raise CommandError(str(exc))

    def run(self, options):
        raise NotImplementedError

    def load_problem(self, options):
        path = options.get("problem") or fixture_path(self.default_problem)
        return ProblemFile.load(path)

    def write_json(self, options, name, payload):
        if not options.get("out"):
            return None
        out_dir = Path(options["out"])
        out_dir.mkdir(parents=True, exist_ok=True)
        path = out_dir / name
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(payload, handle, indent=2, sort_keys=True)
        self.stdout.write(f"wrote {path}")
        return path

    def state_argument(self, parser, name="--x", required=True):
        parser.add_argument(name, required=required, type=parse_vector,
                            help="Initial state as comma-separated values")

    def check_state(self, problem_file, x):
        if x.shape[0] != problem_file.A.shape[0]:
            raise CommandError(f"state must have {problem_file.A.shape[0]} entries")
        return x
