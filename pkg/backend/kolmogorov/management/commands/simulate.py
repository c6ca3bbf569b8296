from kolmogorov.management.commands._base import ScenarioCommand


class Command(ScenarioCommand):
    help = "同期カップリングの Euler-Maruyama シミュレーションと収縮率の推定"
    task = "simulate"

    def write_summary(self, outcome):
        results = outcome.report["results"]
        summary = results["summary"]
        self.stdout.write(
            f"K={summary['K']} h={summary['h']} T={summary['T']} blown up={summary['blown_up']} "
            f"final E|X-Y|^2={summary['final_mean_sq_diff']}"
        )
        contraction = results["contraction"]
        if "rate" in contraction:
            self.stdout.write(
                f"fitted rate {contraction['rate']:.6f} +- {contraction['rate_stderr']:.2e} "
                f"(contracting: {contraction['contracting']})"
            )
        else:
            self.stdout.write(self.style.WARNING(f"no rate: {contraction['error']}"))
        for bound in results["w2_bounds"]:
            self.stdout.write(f"W2 <= {bound['value']:.6g} at t={bound['t_used']:g}")
