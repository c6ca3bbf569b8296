from kolmogorov.management.commands._base import ScenarioCommand


class Command(ScenarioCommand):
    help = "測度 (またはカップリング) の弱形式残差をテスト関数のバッテリーで計算する"
    task = "residual"

    def write_summary(self, outcome):
        residual = outcome.report["results"]["residual"]
        self.stdout.write(
            f"{residual['label']}: max |residual| {residual['max_abs']:.3e}, "
            f"max normalized {residual['max_normalized']:.3e} over {len(residual['entries'])} functions"
        )
        for entry in residual["entries"]:
            if entry["flags"]:
                self.stdout.write(self.style.WARNING(f"  function {entry['index']}: {', '.join(entry['flags'])}"))
