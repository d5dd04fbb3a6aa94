import json
import tempfile
from io import StringIO
from pathlib import Path

import pandas as pd
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase

from cc_terminal.management.base import parse_vector

from .cases import scalar_problem_data


class CommandTestCase(SimpleTestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.dir = Path(self.tmp.name)
        self.problem = self.write_problem(scalar_problem_data())

    def write_problem(self, data, name="scalar.json"):
        path = self.dir / name
        path.write_text(json.dumps(data), encoding="utf-8")
        return str(path)

    def call(self, name, *args):
        out = StringIO()
        call_command(name, "--problem", self.problem, *args, stdout=out)
        return out.getvalue()


class ParseVectorTests(SimpleTestCase):

    def test_parses(self):
        self.assertEqual(parse_vector("1.5,-2").tolist(), [1.5, -2.0])

    def test_rejects_text(self):
        with self.assertRaises(CommandError):
            parse_vector("1,a")


class DareCommandTests(CommandTestCase):

    def test_prints_and_writes(self):
        output = self.call("dare", "--out", str(self.dir / "out"))
        self.assertIn("K = [[-0.70", output)
        payload = json.loads((self.dir / "out" / "dare.json").read_text(encoding="utf-8"))
        self.assertAlmostEqual(payload["K"][0][0], -0.70343, places=4)

    def test_problem_file_error_becomes_command_error(self):
        self.problem = self.write_problem(scalar_problem_data(beta=2.0), "broken.json")
        with self.assertRaisesMessage(CommandError, "beta"):
            self.call("dare")

    def test_missing_problem_file(self):
        self.problem = str(self.dir / "absent.json")
        with self.assertRaisesMessage(CommandError, "cannot read"):
            self.call("dare")


class TemplateCommandTests(CommandTestCase):

    def test_reports_relation(self):
        output = self.call("template", "--samples", "10")
        self.assertIn("f = 2, v = 2, e = 1", output)
        self.assertIn("cc-relation holds on 10/10 samples", output)


class SolveCommandTests(CommandTestCase):

    def test_feasible_state(self):
        output = self.call("mpc_solve", "--x", "2.0")
        self.assertIn("N = 3: 12 variables", output)
        self.assertIn("u0 = ", output)

    def test_infeasible_state(self):
        output = self.call("mpc_solve", "--x", "10.0")
        self.assertIn("outside the admissible region", output)

    def test_wrong_state_length(self):
        with self.assertRaisesMessage(CommandError, "1 entries"):
            self.call("mpc_solve", "--x", "1.0,2.0")


class TerminalCommandTests(CommandTestCase):

    def test_member(self):
        output = self.call("terminal_eval", "--x", "3.0", "--out", str(self.dir))
        self.assertIn("T(beta) membership: member", output)
        payload = json.loads((self.dir / "terminal.json").read_text(encoding="utf-8"))
        self.assertEqual(payload["x"], [3.0])
        self.assertEqual(len(payload["y"]), 2)

    def test_outside(self):
        output = self.call("terminal_eval", "--x", "9.5")
        self.assertIn("m(x) = inf", output)
        self.assertFalse((self.dir / "terminal.json").exists())


class SimulateCommandTests(CommandTestCase):

    def test_writes_trajectory(self):
        self.call("simulate", "--x", "-4.0", "--steps", "10", "--out", str(self.dir))
        frame = pd.read_csv(self.dir / "trajectory.csv")
        self.assertEqual(len(frame), 11)
        self.assertEqual(frame["t"].tolist(), list(range(11)))

    def test_infeasible_start(self):
        with self.assertRaises(CommandError):
            self.call("simulate", "--x", "10.0", "--steps", "3")


class SuboptimalityCommandTests(CommandTestCase):

    def test_prints_value(self):
        output = self.call("subopt", "--x", "3.0", "--steps", "20")
        self.assertIn("s_3(x0) = ", output)


class RegionCommandTests(CommandTestCase):

    def test_scalar_region(self):
        output = self.call("region", "--directions", "4", "--out", str(self.dir))
        self.assertIn("radial gap to X_MCI = ", output)
        frame = pd.read_csv(self.dir / "region_N3.csv")
        self.assertEqual(len(frame), 4)
