import tempfile
from pathlib import Path

from django.test import SimpleTestCase

from kolmogorov.runner import run_scenario
from kolmogorov.scenarios import load_scenario, parse_scenario

SCENARIO_DIR = Path(__file__).resolve().parents[2] / "scenarios"


def reduced(data):
    """同梱シナリオを判定が変わらない範囲で軽くする"""
    section = data[data["task"]]
    if data["task"] == "simulate":
        section["K"] = min(section["K"], 500)
        if section.get("invariant"):
            section["invariant"].update({"burn_in": 5.0, "T": 40.0, "chains": 2})
    elif data["task"] == "mollify":
        section["psd_pairs"] = min(section["psd_pairs"], 500)
    elif data["task"] == "paper-suite":
        section.update({"quick": True, "criteria": [1, 5, 7]})
    return data


class ShippedScenarioTests(SimpleTestCase):
    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.tmp = Path(self._tmp.name)

    def tearDown(self):
        self._tmp.cleanup()

    def test_every_shipped_scenario_meets_its_expectation(self):
        paths = sorted(SCENARIO_DIR.glob("*.toml"))
        self.assertEqual(len(paths), 12)
        for path in paths:
            with self.subTest(scenario=path.name):
                scenario = load_scenario(path)
                scenario = parse_scenario(reduced(scenario.to_dict()), path.parent, output_dir=self.tmp / path.stem)
                outcome = run_scenario(scenario, plots=False)
                self.assertEqual(outcome.exit_code, 0, f"{path.name}: verdict {outcome.verdict}")
                if scenario.expect is None:
                    self.assertEqual(outcome.verdict, "holds_on_region", path.name)
