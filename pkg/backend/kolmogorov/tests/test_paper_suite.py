import tempfile
from pathlib import Path
from unittest import mock

import pandas as pd
from django.test import SimpleTestCase

from kolmogorov import paper_suite
from kolmogorov.exceptions import ConvergenceError
from kolmogorov.runner import run_scenario
from kolmogorov.scenarios import parse_scenario


def suite(criteria):
    return parse_scenario(
        {"name": "suite", "task": "paper-suite", "expect": "holds", "paper-suite": {"quick": True, "criteria": criteria}}
    )


class PaperSuiteTests(SimpleTestCase):
    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.tmp = Path(self._tmp.name)

    def tearDown(self):
        self._tmp.cleanup()

    def test_quick_criteria_pass(self):
        outcome = run_scenario(suite([7, 1, 5]), self.tmp, plots=False)
        criteria = outcome.report["results"]["criteria"]
        self.assertEqual(sorted(criteria), ["1", "5", "7"])
        for number, result in criteria.items():
            self.assertTrue(result["passed"], f"criterion {number}: {result}")
        self.assertAlmostEqual(criteria["5"]["measured"]["product"], 1.0, delta=2e-3)
        self.assertEqual(outcome.exit_code, 0)
        summary = pd.read_csv(self.tmp / "summary.csv")
        self.assertEqual(list(summary["criterion"]), [1, 5, 7])

    def test_errors_fail_the_criterion(self):
        def broken(budget):
            raise ConvergenceError("power iteration did not converge", 1.0)

        with mock.patch.dict(paper_suite.CRITERIA, {7: broken}):
            outcome = run_scenario(suite([7]), self.tmp, plots=False)
        result = outcome.report["results"]["criteria"]["7"]
        self.assertFalse(result["passed"])
        self.assertEqual(result["measured"]["error"]["type"], "ConvergenceError")
        self.assertEqual(outcome.verdict, "violated")
        self.assertEqual(outcome.exit_code, 2)

    def test_quick_numerical_criteria_pass(self):
        budget = paper_suite.SuiteBudget(quick=True, seed=0)
        for number in (2, 3, 4, 6, 8, 9):
            with self.subTest(criterion=number):
                result = paper_suite.run_criterion(number, budget, self.tmp)
                self.assertEqual(result.number, number)
                self.assertTrue(result.passed, f"criterion {number}: {result.to_dict()}")
