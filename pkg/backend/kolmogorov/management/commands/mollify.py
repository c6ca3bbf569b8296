from kolmogorov.management.commands._base import ScenarioCommand


class Command(ScenarioCommand):
    help = "測度を正則化し、正則化した系が自身の方程式を満たすことを確認する"
    task = "mollify"

    def write_summary(self, outcome):
        results = outcome.report["results"]
        for system in results["systems"]:
            line = f"eps={system['eps']:g}: residual {system['residual_max_normalized']:.3e}"
            if "psd_margin" in system:
                line += f", PSD margin {system['psd_margin']:.3e}"
            self.stdout.write(line)
        if "weak_convergence" in results:
            self.stdout.write(f"weak convergence monotone: {results['weak_convergence']['monotone']}")
