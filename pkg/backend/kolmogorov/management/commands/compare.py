from django.core.management.base import BaseCommand, CommandError

from kolmogorov.exceptions import KolmogorovError
from kolmogorov.models import ScenarioRun
from kolmogorov.reports import compare_reports, read_report


def _parse_tolerance(text):
    path, sep, value = text.partition("=")
    if not sep:
        raise CommandError(f"--tolerance expects PATH=VALUE, got {text!r}", returncode=1)
    try:
        return path.strip(), float(value)
    except ValueError:
        raise CommandError(f"--tolerance value must be a number, got {value!r}", returncode=1)


class Command(BaseCommand):
    help = "2 つの report.json をフィールドごとに比較する (差分なし: 0, 差分あり: 2)"

    def add_arguments(self, parser):
        parser.add_argument("reports", nargs="*", help="Two report.json files")
        parser.add_argument("--latest", metavar="NAME", help="Compare the two latest finished runs of a scenario")
        parser.add_argument("--rtol", type=float, default=1e-12)
        parser.add_argument("--atol", type=float, default=0.0)
        parser.add_argument("--tolerance", action="append", default=[], help="PATH=VALUE absolute tolerance")
        parser.add_argument("--only", action="append", default=[], help="Compare only this dotted prefix")

    def _load(self, options):
        if options["latest"]:
            runs = list(
                ScenarioRun.objects.filter(
                    name=options["latest"], status__in=("SUCCESS", "VIOLATED"), report__isnull=False
                ).order_by("-created_at")[:2]
            )
            if len(runs) < 2:
                raise CommandError(f"need two finished runs of {options['latest']!r}, found {len(runs)}", returncode=1)
            newer, older = runs
            self.stdout.write(f"Comparing runs {older.id} -> {newer.id}")
            return older.report, newer.report
        if len(options["reports"]) != 2:
            raise CommandError("give two report files or --latest NAME", returncode=1)
        return tuple(read_report(path) for path in options["reports"])

    def handle(self, *args, **options):
        tolerances = dict(_parse_tolerance(t) for t in options["tolerance"])
        try:
            a, b = self._load(options)
            diff = compare_reports(
                a, b, rtol=options["rtol"], atol=options["atol"], tolerances=tolerances, only=options["only"]
            )
        except KolmogorovError as e:
            raise CommandError(str(e), returncode=1)

        if diff.empty:
            self.stdout.write(self.style.SUCCESS(f"No differences ({diff.compared} values compared)"))
            return
        self.stdout.write(diff.to_frame().to_string(index=False))
        raise CommandError(f"{len(diff.entries)} differences", returncode=2)
