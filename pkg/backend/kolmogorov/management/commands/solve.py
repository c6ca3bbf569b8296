from kolmogorov.management.commands._base import ScenarioCommand


class Command(ScenarioCommand):
    help = "1D/2D の定常 FPK 方程式を解き、弱形式残差と Lyapunov 条件を調べる"
    task = "solve"

    def write_summary(self, outcome):
        results = outcome.report["results"]
        solution = results["solution"]
        if solution["kind"] == "dirac":
            self.stdout.write(f"solution: Dirac measure at {solution['atom']}")
        else:
            self.stdout.write(f"solution: grid density {solution['resolution']}")
            for note in solution["notes"]:
                self.stdout.write(f"  {note}")
        self.stdout.write(f"max normalized residual {results['residual']['max_normalized']:.3e}")
        if "reference" in results:
            self.stdout.write(f"reference: {results['reference']}")
        for rep in results.get("lyapunov", []):
            self.stdout.write(f"Lyapunov |x|^{rep['power']:g}: R={rep['threshold_radius']} C={rep['constant']}")
