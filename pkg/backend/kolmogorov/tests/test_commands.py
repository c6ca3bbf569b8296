import json
import tempfile
from io import StringIO
from pathlib import Path

from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import TestCase

from kolmogorov.models import ScenarioRun

CERTIFY_TOML = """
name = "ou-certify"
task = "certify"
seed = 1
expect = "{expect}"

[field]
family = "ornstein_uhlenbeck"
d = 1
lambda = 1.0
sigma0 = 0.5

[certify]
criteria = ["theorem1"]
radius = 3.0
sample_budget = 1500
multistart_count = 1
"""

DEGENERATE_TOML = """
name = "flat"
task = "solve"

[field]
family = "constant"
d = 1
sigma = [[0.0]]
drift = [1.0]
"""


class CommandTestCase(TestCase):
    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.tmp = Path(self._tmp.name)

    def tearDown(self):
        self._tmp.cleanup()

    def write(self, name, text):
        path = self.tmp / name
        path.write_text(text, encoding="utf-8")
        return path

    def call(self, *args, **options):
        out = StringIO()
        call_command(*args, stdout=out, verbosity=0, **options)
        return out.getvalue()


class ScenarioCommandTests(CommandTestCase):
    def test_certify_success_is_logged(self):
        config = self.write("certify.toml", CERTIFY_TOML.format(expect="holds"))
        output = self.call("certify", "--config", str(config), "--out", str(self.tmp / "run"))
        self.assertIn("ou-certify: holds_on_region", output)
        run = ScenarioRun.objects.get(name="ou-certify")
        self.assertEqual(run.status, "SUCCESS")
        self.assertEqual(run.report["verdict"], "holds_on_region")
        self.assertEqual(len(run.report_sha256), 64)
        self.assertTrue((self.tmp / "run" / "report.json").is_file())

    def test_expectation_mismatch(self):
        config = self.write("certify.toml", CERTIFY_TOML.format(expect="violated"))
        with self.assertRaises(CommandError) as ctx:
            self.call("certify", "--config", str(config), "--out", str(self.tmp / "run"))
        self.assertEqual(ctx.exception.returncode, 2)
        self.assertEqual(ScenarioRun.objects.get(name="ou-certify").status, "VIOLATED")

    def test_wrong_task_for_the_command(self):
        config = self.write("certify.toml", CERTIFY_TOML.format(expect="holds"))
        with self.assertRaises(CommandError) as ctx:
            self.call("solve", "--config", str(config))
        self.assertEqual(ctx.exception.returncode, 1)
        self.assertFalse(ScenarioRun.objects.exists())

    def test_invalid_config(self):
        config = self.write("bad.toml", CERTIFY_TOML.format(expect="sometimes"))
        with self.assertRaises(CommandError) as ctx:
            self.call("certify", "--config", str(config))
        self.assertEqual(ctx.exception.returncode, 1)
        self.assertIn("expect", str(ctx.exception))

    def test_numerical_failure_is_logged(self):
        config = self.write("flat.toml", DEGENERATE_TOML)
        with self.assertRaises(CommandError) as ctx:
            self.call("solve", "--config", str(config), "--out", str(self.tmp / "flat"), "--no-plots")
        self.assertEqual(ctx.exception.returncode, 1)
        run = ScenarioRun.objects.get(name="flat")
        self.assertEqual(run.status, "FAILURE")
        self.assertEqual(run.error_detail["type"], "UnsupportedDegeneracyError")

    def test_seed_override(self):
        config = self.write("certify.toml", CERTIFY_TOML.format(expect="holds"))
        self.call("certify", "--config", str(config), "--seed", "5", "--out", str(self.tmp / "run"))
        report = json.loads((self.tmp / "run" / "report.json").read_text(encoding="utf-8"))
        self.assertEqual(report["scenario"]["seed"], 5)
        self.assertEqual(ScenarioRun.objects.get().seed, 5)


class CompareCommandTests(CommandTestCase):
    def setUp(self):
        super().setUp()
        config = self.write("certify.toml", CERTIFY_TOML.format(expect="holds"))
        self.call("certify", "--config", str(config), "--out", str(self.tmp / "a"), "--threads", "1")
        self.call("certify", "--config", str(config), "--out", str(self.tmp / "b"), "--threads", "3")
        self.left = self.tmp / "a" / "report.json"
        self.right = self.tmp / "b" / "report.json"

    def test_identical_reports(self):
        output = self.call("compare", str(self.left), str(self.right))
        self.assertIn("No differences", output)

    def test_latest_runs_from_the_log(self):
        output = self.call("compare", "--latest", "ou-certify")
        self.assertIn("No differences", output)

    def test_latest_needs_two_runs(self):
        with self.assertRaises(CommandError) as ctx:
            self.call("compare", "--latest", "never-ran")
        self.assertEqual(ctx.exception.returncode, 1)

    def test_differences_exit_with_two(self):
        report = json.loads(self.right.read_text(encoding="utf-8"))
        report["verdict"] = "violated"
        self.right.write_text(json.dumps(report), encoding="utf-8")
        with self.assertRaises(CommandError) as ctx:
            self.call("compare", str(self.left), str(self.right))
        self.assertEqual(ctx.exception.returncode, 2)
        # --only で比較範囲を絞れる
        output = self.call("compare", str(self.left), str(self.right), "--only", "results")
        self.assertIn("No differences", output)

    def test_argument_errors(self):
        with self.assertRaises(CommandError) as ctx:
            self.call("compare", str(self.left))
        self.assertEqual(ctx.exception.returncode, 1)
        with self.assertRaises(CommandError) as ctx:
            self.call("compare", str(self.left), str(self.right), "--tolerance", "results.rate")
        self.assertEqual(ctx.exception.returncode, 1)


class PaperSuiteCommandTests(CommandTestCase):
    def test_quick_single_criterion(self):
        output = self.call("paper_suite", "--quick", "--criteria", "7", "--out", str(self.tmp / "suite"), "--no-plots")
        self.assertIn("suite", output.lower())
        run = ScenarioRun.objects.get(task="paper-suite")
        self.assertEqual(run.status, "SUCCESS")
        self.assertTrue(run.report["results"]["criteria"]["7"]["passed"])
