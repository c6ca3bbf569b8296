import pandas as pd
from django.core.management.base import CommandError

from kolmogorov.exceptions import KolmogorovError
from kolmogorov.management.commands._base import ScenarioCommand
from kolmogorov.scenarios import parse_scenario


class Command(ScenarioCommand):
    help = "既知の例と性質を再現する 10 項目の回帰スイート (1 つでも失敗すれば終了コード 2)"
    task = "paper-suite"

    def add_arguments(self, parser):
        parser.add_argument("--config", help="Optional paper-suite scenario TOML")
        parser.add_argument("--seed", type=int, help="Override the seed")
        parser.add_argument("--out", help="Output directory (default: runs/paper-suite)")
        parser.add_argument("--threads", type=int, help="Worker threads (fallback: KOLMOCOUPLE_THREADS)")
        parser.add_argument("--quick", action="store_true", help="Reduced budgets, same thresholds")
        parser.add_argument("--criteria", type=int, nargs="+", help="Run only these criteria (1-10)")
        parser.add_argument("--no-plots", action="store_true", help="Accepted for symmetry; the suite writes no SVG")

    def handle(self, *args, **options):
        try:
            out = options["out"]
            if options["config"]:
                scenario = self.load_scenario(options)
                data, out = scenario.to_dict(), scenario.output_dir
            else:
                data = {"name": "paper-suite", "task": "paper-suite", "seed": options["seed"] or 0}
            section = dict(data.get("paper-suite", {}))
            if options["quick"]:
                section["quick"] = True
            if options["criteria"]:
                section["criteria"] = options["criteria"]
            # 失敗した項目があれば終了コード 2
            data.update({"paper-suite": section, "expect": "holds"})
            scenario = parse_scenario(data, output_dir=out)
        except KolmogorovError as e:
            raise CommandError(str(e), returncode=1)
        self.execute_scenario(scenario, options)

    def write_summary(self, outcome):
        criteria = outcome.report["results"]["criteria"]
        table = pd.DataFrame(
            [
                {"criterion": int(n), "passed": c["passed"], "headline": c["headline"], "title": c["title"]}
                for n, c in criteria.items()
            ]
        ).sort_values("criterion")
        self.stdout.write(table.to_string(index=False))
        failed = [n for n, c in criteria.items() if not c["passed"]]
        if failed:
            self.stdout.write(self.style.WARNING(f"failed criteria: {', '.join(failed)}"))


