from django.core.management.base import BaseCommand, CommandError

from kolmogorov.exceptions import ConfigError, KolmogorovError
from kolmogorov.models import ScenarioRun
from kolmogorov.runner import output_dir_for, run_scenario
from kolmogorov.scenarios import load_scenario


class ScenarioCommand(BaseCommand):
    """
    シナリオ実行コマンドの共通部分。
    実行ログ (ScenarioRun) を RUNNING で作成し、終了時に SUCCESS / VIOLATED / FAILURE に更新する。
    """

    task = None

    def add_arguments(self, parser):
        parser.add_argument("--config", required=True, help="Scenario TOML file")
        parser.add_argument("--seed", type=int, help="Override the scenario seed")
        parser.add_argument("--out", help="Output directory (default: output_dir of the scenario, else runs/<name>)")
        parser.add_argument("--threads", type=int, help="Worker threads (fallback: KOLMOCOUPLE_THREADS)")
        parser.add_argument("--no-plots", action="store_true", help="Skip SVG output")

    def load_scenario(self, options):
        scenario = load_scenario(options["config"])
        if scenario.task != self.task:
            raise ConfigError("task", f"config declares task {scenario.task!r}, but this command runs {self.task!r}")
        return scenario.with_overrides(seed=options["seed"], output_dir=options["out"])

    def handle(self, *args, **options):
        try:
            scenario = self.load_scenario(options)
        except KolmogorovError as e:
            raise CommandError(str(e), returncode=1)
        self.execute_scenario(scenario, options)

    def execute_scenario(self, scenario, options):
        out = output_dir_for(scenario)
        self.stdout.write(f"Running {scenario.task} scenario '{scenario.name}' (seed {scenario.seed}) -> {out}")

        # A. 開始ログを記録 (RUNNING)
        log = ScenarioRun.objects.create(
            name=scenario.name, task=scenario.task, seed=scenario.seed, status="RUNNING", output_dir=str(out)
        )
        try:
            # B. 実行
            outcome = run_scenario(
                scenario,
                out,
                threads=options.get("threads"),
                progress=options.get("verbosity", 1) > 0,
                plots=not options.get("no_plots", False),
            )
        except Exception as e:
            # C. 失敗ログに更新
            log.status = "FAILURE"
            log.message = str(e)
            log.error_detail = e.to_dict() if isinstance(e, KolmogorovError) else {"type": type(e).__name__}
            log.save()
            if isinstance(e, KolmogorovError):
                raise CommandError(f"{scenario.name}: {e}", returncode=1)
            raise

        # D. 結果ログに更新
        log.status = outcome.status
        log.report_sha256 = outcome.sha256
        log.report = outcome.report
        log.message = f"verdict {outcome.verdict}"
        log.save()

        self.write_summary(outcome)
        self.stdout.write(f"Report: {outcome.report_path} (sha256 {outcome.sha256[:12]})")
        if outcome.exit_code == 2:
            raise CommandError(
                f"{scenario.name}: verdict {outcome.verdict}, expected {scenario.expect}", returncode=2
            )
        self.stdout.write(self.style.SUCCESS(f"{scenario.name}: {outcome.verdict}"))
        return outcome

    def write_summary(self, outcome):
        """タスクごとの要約 (サブクラスで上書き)"""
        for name in outcome.report["files"]:
            self.stdout.write(f"  wrote {name}")
