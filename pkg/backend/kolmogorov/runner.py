"""
シナリオを 1 本実行して report.json・CSV・SVG を書き出す。

終了コード:
    0  成功 (regression モードでは期待どおりの判定)
    1  実行エラー (KolmogorovError は呼び出し側で変換)
    2  regression モードで判定が期待と食い違った
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .certify import (
    HOLDS,
    INDEFINITE,
    VIOLATED,
    LambdaFunction,
    ScanRegion,
    check_corollary1,
    check_example3,
    check_example4,
    check_moments,
    check_theorem1,
    check_theorem2,
    combine_verdicts,
)
from .conf import get_setting, provenance
from .coupling import (
    contraction_rate,
    empirical_invariant,
    sampler_from_config,
    simulate_coupled,
    w2_profile,
    w2_upper_bound,
)
from .exceptions import DegenerateFitError
from .fpk import (
    battery_from_config,
    cutoff_telescoping,
    default_battery,
    doubled_weak_residual,
    lyapunov_check,
    solve_1d,
    solve_2d,
    weak_residual,
)
from .measures import Box, DiracMeasure, GridDensity, measure_from_config
from .mollify import (
    GridSpec,
    doubled_regularized_psd,
    export_system,
    regularize_coefficients,
    regularized_lyapunov,
    regularized_residual,
    weak_convergence_profile,
)
from .plotting import plot_density, plot_lyapunov, plot_msd, plot_residuals
from .reports import build_report, write_report
from .testfunctions import function_from_config

logger = logging.getLogger(__name__)

EXPECTED_VERDICT = {"holds": HOLDS, "violated": VIOLATED}


@dataclass
class TaskOutput:
    verdict: str
    results: dict
    files: list = field(default_factory=list)
    tolerances: dict = field(default_factory=dict)
    settings: tuple = ()


@dataclass
class RunOutcome:
    scenario: object
    report: dict
    report_path: Path
    sha256: str
    verdict: str
    exit_code: int

    @property
    def status(self):
        return "SUCCESS" if self.exit_code == 0 else "VIOLATED"


@dataclass
class RunContext:
    out: Path
    threads: int = None
    progress: bool = False
    plots: bool = True

    def path(self, name):
        return self.out / name


def residual_frame(report) -> pd.DataFrame:
    rows = []
    for e in report.entries:
        rows.append(
            {
                "index": e.index,
                "kind": e.function.get("kind"),
                "residual": e.residual,
                "error": e.error,
                "scale": e.scale,
                "normalized": e.normalized,
                "flags": ";".join(e.flags),
            }
        )
    return pd.DataFrame(rows, columns=["index", "kind", "residual", "error", "scale", "normalized", "flags"])


def _write_csv(frame: pd.DataFrame, ctx: RunContext, name, files):
    frame.to_csv(ctx.path(name), index=False, float_format="%.17g")
    files.append(name)


def _plot(ctx: RunContext, files, name, func, *args, **kwargs):
    if not ctx.plots:
        return
    func(*args, ctx.path(name), **kwargs)
    files.append(name)


def _residual_verdict(report, tolerance):
    value = report.max_normalized
    return HOLDS if np.isfinite(value) and value <= tolerance else VIOLATED


# ==========================================
# 🔏 certify
# ==========================================


def _witness_rows(name, cert):
    rows = []
    primary = cert.witness
    for role, w in [("primary", primary)] + [("witness", w) for w in cert.witnesses]:
        if w is None:
            continue
        row = {"criterion": name, "role": role, "quantity": w.quantity, "value": w.value}
        row.update({f"x{k + 1}": v for k, v in enumerate(np.asarray(w.x).tolist())})
        row.update({f"y{k + 1}": v for k, v in enumerate(np.asarray(w.y).tolist())})
        rows.append(row)
    return rows


def run_certify(scenario, ctx: RunContext) -> TaskOutput:
    field_ = scenario.build_field()
    p = scenario.params
    region = ScanRegion(
        p["radius"], p["separation_floor"], p["sample_budget"], p["multistart_count"], scenario.seed, p["margin_floor"]
    )
    Lambda = LambdaFunction.from_config(p["lambda"]) if p.get("lambda") else None
    kw = {"threads": ctx.threads, "progress": ctx.progress}
    certificates, verdicts, rows = {}, [], []
    for name in p["criteria"]:
        if name == "moments":
            continue
        if name == "theorem1":
            cert = check_theorem1(field_, region, **kw)
        elif name == "theorem2":
            cert = check_theorem2(field_, Lambda, region, **kw)
        elif name == "corollary1":
            cert = check_corollary1(field_, Lambda, region, **kw)
        elif name == "example3":
            cert = check_example3(field_, p["example3_lambda"], region, **kw)
        else:
            cert = check_example4(field_, region, **kw)
        logger.info("%s on %s: %s (%s)", name, field_.label, cert.verdict, cert.criterion)
        certificates[name] = cert.to_dict()
        verdicts.append(cert.verdict)
        rows.extend(_witness_rows(name, cert))

    results = {"field": field_.describe(), "region": region.to_dict(), "certificates": certificates}
    if p.get("moments"):
        m = p["moments"]
        report = check_moments(field_, measure_from_config(m["measure"]), m["criterion"], Lambda, m["radius"])
        results["moments"] = report.to_dict()
        verdicts.append(HOLDS if report.all_finite else VIOLATED)

    files = []
    if rows:
        _write_csv(pd.DataFrame(rows), ctx, "certify_witnesses.csv", files)
    return TaskOutput(
        combine_verdicts(verdicts),
        results,
        files,
        settings=("scan_fd_step", "scan_chunk_size", "diagonal_tolerance", "moment_radius", "quadrature_rtol"),
    )


# ==========================================
# 🔗 simulate
# ==========================================


def run_simulate(scenario, ctx: RunContext) -> TaskOutput:
    field_ = scenario.build_field()
    p = scenario.params
    init = (sampler_from_config(p["init"]["x"], field_.d), sampler_from_config(p["init"]["y"], field_.d))
    ensemble = simulate_coupled(
        field_, init, p["h"], p["T"], p["K"], seed=scenario.seed, snapshots=p["snapshots"], threads=ctx.threads,
        block_size=p["block_size"], progress=ctx.progress,
    )
    files = []
    ensemble.to_csv(ctx.path("coupling_statistics.csv"))
    files.append("coupling_statistics.csv")
    if p["dump_states"]:
        ensemble.dump_states(ctx.path("states.bin"))
        files.append("states.bin")

    results = {"summary": ensemble.summary()}
    tolerances = {}
    try:
        contraction = contraction_rate(ensemble, p["fit_window"])
        results["contraction"] = contraction.to_dict()
        # Euler 法の偏りは O(h)。比較では h·max(1, λ̂²) まで許す
        bias = p["h"] * max(1.0, contraction.rate**2)
        results["contraction"]["rate_bias_bound"] = bias
        tolerances["results.contraction.rate"] = bias
        verdict = HOLDS if contraction.contracting else VIOLATED
    except DegenerateFitError as e:
        logger.warning("contraction fit failed: %s", e)
        results["contraction"] = {"error": str(e)}
        verdict = INDEFINITE
    results["w2_bounds"] = [w2_upper_bound(ensemble, t).to_dict() for t in p["w2_times"]]
    results["w2_profile"] = w2_profile(ensemble)

    inv = p.get("invariant")
    if inv:
        emp = empirical_invariant(
            field_, inv["h"], inv["burn_in"], inv["T"], seed=scenario.seed, stride=inv["stride"], x0=inv["x0"],
            chains=inv["chains"], progress=ctx.progress,
        )
        emp.to_csv(ctx.path("invariant_samples.csv"))
        files.append("invariant_samples.csv")
        results["invariant"] = {
            "samples": int(len(emp.points)),
            "mean": emp.mean().tolist(),
            "covariance": emp.covariance().tolist(),
        }
        if inv["battery"]:
            battery = battery_from_config(inv["battery"], field_.d)
            results["invariant"]["residual"] = weak_residual(field_, emp, battery, threads=ctx.threads).to_dict()

    contraction_dict = results["contraction"] if "rate" in results["contraction"] else None
    _plot(ctx, files, "msd.svg", plot_msd, ensemble.statistics(), contraction=contraction_dict)
    return TaskOutput(verdict, results, files, tolerances, ("coupling_blowup_guard", "coupling_noise_chunk"))


# ==========================================
# 🧮 solve
# ==========================================


def _default_solve_box(p, d):
    if d == 1:
        lo, hi = p["domain"]
        return Box((lo / 2.0,), (hi / 2.0,))
    lower, upper = np.asarray(p["box"]["lower"]), np.asarray(p["box"]["upper"])
    center, half = (lower + upper) / 2.0, (upper - lower) / 4.0
    return Box(tuple(center - half), tuple(center + half))


def _reference_distance(solution, reference):
    if isinstance(solution, GridDensity) and hasattr(reference, "density"):
        diff = np.abs(solution.values.ravel() - reference.density(solution.centers()))
        return {"l1_distance": float(diff.sum() * solution.cell_volume)}
    if isinstance(solution, DiracMeasure) and isinstance(reference, DiracMeasure):
        return {"atom_distance": float(np.linalg.norm(solution.atom - reference.atom))}
    return {"note": f"no distance between {type(solution).__name__} and {type(reference).__name__}"}


def run_solve(scenario, ctx: RunContext) -> TaskOutput:
    field_ = scenario.build_field()
    p = scenario.params
    if field_.d == 1:
        solution = solve_1d(field_, tuple(p["domain"]), p["n"])
    else:
        box = Box(tuple(p["box"]["lower"]), tuple(p["box"]["upper"]))
        solution = solve_2d(field_, box, p["nx"], p["ny"])
    files = []
    if isinstance(solution, DiracMeasure):
        results = {"solution": {"kind": "dirac", "atom": solution.atom.tolist()}}
    else:
        results = {
            "solution": {
                "kind": "grid",
                "box": solution.box.to_dict(),
                "resolution": list(solution.resolution),
                "notes": list(solution.notes),
                "diagnostics": dict(solution.diagnostics),
                "sha256": solution.fingerprint(),
            }
        }
        solution.to_csv(ctx.path("density.csv"))
        files.append("density.csv")

    reference = measure_from_config(p["reference"]) if p["reference"] else None
    if reference is not None:
        results["reference"] = _reference_distance(solution, reference)
    if isinstance(solution, GridDensity):
        ref_curve = reference if reference is not None and field_.d == 1 and hasattr(reference, "density") else None
        _plot(ctx, files, "density.svg", plot_density, solution, reference=ref_curve)

    if p["battery"]:
        battery = battery_from_config(p["battery"], field_.d, default_box=_default_solve_box(p, field_.d))
    else:
        battery = default_battery(field_.d, _default_solve_box(p, field_.d), 12, seed=scenario.seed)
    residual = weak_residual(field_, solution, battery, threads=ctx.threads)
    results["residual"] = residual.to_dict()
    _write_csv(residual_frame(residual), ctx, "residuals.csv", files)
    verdict = _residual_verdict(residual, p["residual_tolerance"])

    if p["lyapunov"]:
        ly = p["lyapunov"]
        radii = np.linspace(0.0, ly["r_max"], ly["points"])
        reports = lyapunov_check(field_, ly["powers"], radii, ly["target"])
        results["lyapunov"] = [r.to_dict() for r in reports]
        frame = pd.DataFrame({"radius": radii})
        for r in reports:
            frame[f"lv_max_p{r.power:g}"] = r.lv_max
        _write_csv(frame, ctx, "lyapunov.csv", files)
        _plot(ctx, files, "lyapunov.svg", plot_lyapunov, reports)
    return TaskOutput(
        verdict, results, files,
        settings=("degeneracy_threshold", "power_iteration_max", "power_iteration_tol", "anisotropy_fraction"),
    )


# ==========================================
# 🧾 residual
# ==========================================


def run_residual(scenario, ctx: RunContext) -> TaskOutput:
    field_ = scenario.build_field()
    p = scenario.params
    measure = measure_from_config(p["measure"])
    dim = measure.dim
    battery = battery_from_config(p["battery"], dim, default_box=measure.support_box())
    if p["doubled"]:
        report = doubled_weak_residual(field_, measure, battery, threads=ctx.threads)
    else:
        report = weak_residual(field_, measure, battery, threads=ctx.threads)
    files = []
    _write_csv(residual_frame(report), ctx, "residuals.csv", files)
    _plot(ctx, files, "residuals.svg", plot_residuals, report)
    results = {"measure": measure.to_config(), "residual": report.to_dict()}
    if p["cutoff"]:
        f = function_from_config(p["cutoff"]["function"], dim)
        rows = cutoff_telescoping(field_, measure, f, p["cutoff"]["js"])
        results["cutoff"] = rows
        _write_csv(pd.DataFrame(rows), ctx, "cutoff.csv", files)
    return TaskOutput(
        _residual_verdict(report, p["residual_tolerance"]), results, files,
        settings=("quadrature_rtol", "quadrature_atol", "quadrature_base_nodes", "quadrature_max_level"),
    )


# ==========================================
# 🫧 mollify
# ==========================================


def run_mollify(scenario, ctx: RunContext) -> TaskOutput:
    field_ = scenario.build_field()
    p = scenario.params
    d = field_.d
    measure = measure_from_config(p["measure"])
    nu = measure_from_config(p["second_measure"]) if p["second_measure"] else None
    if p["battery"]:
        battery = battery_from_config(p["battery"], d, default_box=Box.symmetric(d, 2.0))
    else:
        battery = default_battery(d, Box.symmetric(d, 2.0), 10, seed=scenario.seed)
    psd_floor = -get_setting("psd_tolerance")
    rows, verdicts, files = [], [], []
    for i, eps in enumerate(p["eps"]):
        spacing = p["spacing_ratio"] * eps
        system = regularize_coefficients(field_, measure, eps, GridSpec.covering(measure, eps, spacing))
        residual = regularized_residual(system, battery, threads=ctx.threads)
        entry = {
            "eps": eps,
            "grid": system.grid.to_dict(),
            "residual_max_abs": residual.max_abs,
            "residual_max_normalized": residual.max_normalized,
            "flagged": [e.index for e in residual.flagged],
        }
        verdicts.append(_residual_verdict(residual, p["residual_tolerance"]))
        if p["psd_pairs"]:
            if nu is None:
                system_nu = system
            else:
                system_nu = regularize_coefficients(field_, nu, eps, GridSpec.covering(nu, eps, spacing))
            margin = doubled_regularized_psd(system, system_nu, p["psd_pairs"], seed=scenario.seed)
            entry["psd_margin"] = margin
            verdicts.append(HOLDS if margin >= psd_floor else VIOLATED)
        if p["lyapunov"]:
            ly = p["lyapunov"]
            reports = regularized_lyapunov(system, ly["powers"], ly["target"], ly["points"])
            entry["lyapunov"] = [
                {"power": r.power, "threshold_radius": r.threshold_radius, "constant": r.constant} for r in reports
            ]
        if p["export"]:
            directory = f"eps_{i:02d}"
            csv_path, manifest_path = export_system(system, ctx.path(directory))
            files.extend([f"{directory}/{csv_path.name}", f"{directory}/{manifest_path.name}"])
        rows.append(entry)

    results = {"measure": measure.to_config(), "systems": rows}
    if len(p["eps"]) > 1:
        results["weak_convergence"] = weak_convergence_profile(measure, p["eps"], battery, spacing=p["spacing_ratio"])
    summary = pd.DataFrame(
        [
            {
                "eps": r["eps"],
                "cells": int(np.prod(r["grid"]["resolution"])),
                "residual_max_normalized": r["residual_max_normalized"],
                "psd_margin": r.get("psd_margin", np.nan),
            }
            for r in rows
        ]
    )
    _write_csv(summary, ctx, "mollify_summary.csv", files)
    return TaskOutput(
        combine_verdicts(verdicts), results, files,
        settings=("mollifier_resolution_ratio", "gaussian_tail_mass", "density_underflow", "psd_tolerance"),
    )


def run_paper_suite(scenario, ctx: RunContext) -> TaskOutput:
    from .paper_suite import run_suite

    return run_suite(scenario.params, ctx, seed=scenario.seed)


TASK_RUNNERS = {
    "certify": run_certify,
    "simulate": run_simulate,
    "solve": run_solve,
    "residual": run_residual,
    "mollify": run_mollify,
    "paper-suite": run_paper_suite,
}


def output_dir_for(scenario, out=None) -> Path:
    if out is not None:
        return Path(out)
    if scenario.output_dir:
        return Path(scenario.output_dir)
    return Path(get_setting("output_root")) / scenario.name


def exit_code_for(scenario, verdict):
    """期待と逆の確定判定 (holds ↔ violated) のときだけ 2。indefinite は 0 のまま"""
    if scenario.expect is None or verdict == INDEFINITE:
        return 0
    return 0 if EXPECTED_VERDICT[scenario.expect] == verdict else 2


def run_scenario(scenario, out=None, threads=None, progress=False, plots=True) -> RunOutcome:
    """シナリオを実行してレポートを書く。KolmogorovError はそのまま送出する。"""
    directory = output_dir_for(scenario, out)
    directory.mkdir(parents=True, exist_ok=True)
    ctx = RunContext(directory, threads, progress, plots)
    output = TASK_RUNNERS[scenario.task](scenario, ctx)
    settings = ("psd_tolerance", "scan_margin_floor") + tuple(output.settings)
    report = build_report(
        scenario, output.verdict, output.results, output.files, provenance(*sorted(set(settings))), output.tolerances
    )
    report_path = directory / "report.json"
    sha = write_report(report, report_path)
    code = exit_code_for(scenario, output.verdict)
    logger.info("scenario %s finished: verdict %s, exit %d", scenario.name, output.verdict, code)
    return RunOutcome(scenario, report, report_path, sha, output.verdict, code)
