from kolmogorov.management.commands._base import ScenarioCommand


class Command(ScenarioCommand):
    help = "一意性条件 (q の符号, Λ 付き上界, Lipschitz 型条件, 対角写像と等方場の特殊化, モーメント) を有界領域で認定する"
    task = "certify"

    def write_summary(self, outcome):
        results = outcome.report["results"]
        for name, cert in results["certificates"].items():
            style = self.style.WARNING if cert["verdict"] == "violated" else self.style.SUCCESS
            self.stdout.write(style(f"{name}: {cert['criterion']} {cert['verdict']} (extremum {cert['extremum']})"))
            witness = cert["witness"]
            if witness is not None and cert["verdict"] != "holds_on_region":
                self.stdout.write(f"  witness x={witness['x']} y={witness['y']} value={witness['value']}")
        if "moments" in results:
            self.stdout.write(f"moments ({results['moments']['criterion']}): finite={results['moments']['all_finite']}")
        for caveat in sorted({c["caveat"] for c in results["certificates"].values()}):
            self.stdout.write(f"  ({caveat})")
