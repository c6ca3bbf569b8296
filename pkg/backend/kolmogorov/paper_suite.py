"""
既知の例と性質をまとめて再現する回帰スイート (10 項目)。

各項目は決定的な予算で実行し、判定と測定値を report.json と summary.csv に残す。
--quick は標本数・格子・経路数を減らした版で、閾値は同じ。
"""

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from tqdm import tqdm

from .certify import HOLDS, VIOLATED, ScanRegion, check_example4, check_theorem1, reevaluate_witness
from .coeff import FieldParams, make_builtin
from .coupling import contraction_rate, simulate_coupled
from .doubling import doubled_generator_value, doubled_matrices, psd_margins, q_value, q_values
from .exceptions import KolmogorovError
from .fpk import default_battery, doubled_weak_residual, shell_battery, solve_1d, solve_2d, weak_residual
from .measures import Box, CouplingMeasure, DiracMeasure, example1_density, gaussian
from .mollify import GridSpec, doubled_regularized_psd, regularize_coefficients, regularized_residual
from .scenarios import parse_scenario
from .testfunctions import HalfSquaredDistance, Monomial, tapered

logger = logging.getLogger(__name__)

TITLES = {
    1: "doubling identity L(|x-y|^2/2) = q",
    2: "doubled diffusion matrices are PSD (raw and mollified)",
    3: "power-law example: two probability solutions",
    4: "OU synchronous coupling contracts at rate lambda",
    5: "product of Gaussians does not solve the doubled equation",
    6: "tanh diffusion: Dirac solution and coupling",
    7: "isotropic example margin equals 1",
    8: "mollified system solves its own equation",
    9: "2D grid solver against the Gaussian",
    10: "reports do not depend on the worker count",
}

# 倍化恒等式と PSD の確認に使う組み込みの係数場
SUITE_FIELDS = (
    FieldParams("power_law", 3, None, {"alpha": 2.0}),
    FieldParams("ornstein_uhlenbeck", 2, None, {"lambda": 1.0, "sigma0": 0.7}),
    FieldParams("diagonal_map", 2, None, {"slope": 1.5, "bend": 0.5, "drift_rate": 1.0}),
    FieldParams("tanh_1d", 1, None, {}),
    FieldParams("isotropic", 2, None, {"scale": 1.0, "exponent": 0.5, "drift_rate": 1.0}),
    FieldParams("constant", 2, 3, {"sigma": [[1.0, 0.0, 0.5], [0.0, 1.0, 0.2]], "drift": [0.3, -0.1]}),
)

OU_1D = FieldParams("ornstein_uhlenbeck", 1, None, {"lambda": 1.0, "sigma0": 1.0 / math.sqrt(2.0)})
OU_2D = FieldParams("ornstein_uhlenbeck", 2, None, {"lambda": 1.0, "sigma0": 1.0 / math.sqrt(2.0)})


@dataclass
class CriterionResult:
    number: int
    passed: bool
    headline: float
    threshold: str
    measured: dict = field(default_factory=dict)

    @property
    def title(self):
        return TITLES[self.number]

    def to_dict(self):
        return {
            "title": self.title,
            "passed": self.passed,
            "headline": self.headline,
            "threshold": self.threshold,
            "measured": self.measured,
        }


@dataclass
class SuiteBudget:
    quick: bool
    seed: int
    threads: int = None

    def pick(self, full, quick):
        return quick if self.quick else full


def _rng(seed, *keys):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), *keys])))


def _region(budget: SuiteBudget, radius):
    return ScanRegion(
        radius=radius,
        sample_budget=budget.pick(20_000, 5_000),
        multistart_count=budget.pick(8, 4),
        rng_seed=budget.seed,
    )


# ==========================================
# 1-2 倍化作用素
# ==========================================


def doubling_identity(budget: SuiteBudget) -> CriterionResult:
    total = budget.pick(12_000, 2_400)
    per_field = total // len(SUITE_FIELDS)
    worst, count = 0.0, 0
    for k, params in enumerate(SUITE_FIELDS):
        field_ = make_builtin(params)
        rng = _rng(budget.seed, 1, k)
        X = rng.uniform(-2.0, 2.0, (per_field, field_.d))
        Y = rng.uniform(-2.0, 2.0, (per_field, field_.d))
        lhs = doubled_generator_value(field_, HalfSquaredDistance(field_.d), np.concatenate([X, Y], axis=1))
        q = q_values(field_, X, Y)
        worst = max(worst, float(np.max(np.abs(lhs - q) / (1.0 + np.abs(q)))))
        count += per_field
    return CriterionResult(1, worst <= 1e-10, worst, "max |Lpsi - q|/(1+|q|) <= 1e-10", {"triples": count})


def doubled_psd(budget: SuiteBudget) -> CriterionResult:
    pairs = budget.pick(12_000, 2_400)
    per_field = pairs // len(SUITE_FIELDS)
    raw = math.inf
    for k, params in enumerate(SUITE_FIELDS):
        field_ = make_builtin(params)
        rng = _rng(budget.seed, 2, k)
        X = rng.uniform(-3.0, 3.0, (per_field, field_.d))
        Y = rng.uniform(-3.0, 3.0, (per_field, field_.d))
        A, _ = doubled_matrices(field_, X, Y)
        raw = min(raw, float(np.min(psd_margins(A))))
    eps = 0.2
    field_ = make_builtin(OU_1D)
    mu, nu = gaussian([0.0], [[0.5]]), DiracMeasure(np.array([0.5]))
    system_mu = regularize_coefficients(field_, mu, eps, GridSpec.covering(mu, eps, eps / 8.0))
    system_nu = regularize_coefficients(field_, nu, eps, GridSpec.covering(nu, eps, eps / 8.0))
    mollified = doubled_regularized_psd(system_mu, system_nu, pairs, seed=budget.seed)
    worst = min(raw, mollified)
    return CriterionResult(
        2, worst >= -1e-9, worst, "min eigenvalue >= -1e-9", {"raw": raw, "mollified": mollified, "pairs": pairs}
    )


# ==========================================
# 3 べき乗則の例 (2 つの確率解)
# ==========================================


def power_law_example(budget: SuiteBudget) -> CriterionResult:
    field_ = make_builtin(SUITE_FIELDS[0])
    battery = shell_battery(3, budget.pick(20, 8), 0.5, 3.0, seed=budget.seed)
    dirac = weak_residual(field_, DiracMeasure(np.zeros(3)), battery, threads=budget.threads)
    density = example1_density(3)
    smooth = weak_residual(field_, density, battery, threads=budget.threads)
    cert = check_theorem1(field_, _region(budget, 3.0), threads=budget.threads)
    hand = {
        "q(1,2)": q_value(field_, [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]),
        "q(0.1,0.2)": q_value(field_, [0.1, 0.0, 0.0], [0.2, 0.0, 0.0]),
    }
    hand_ok = abs(hand["q(1,2)"] + 4.0) <= 1e-9 and abs(hand["q(0.1,0.2)"] - 0.0293) <= 1e-9
    signs = sorted(np.sign(w.value) for w in cert.witnesses)
    reproduced = all(
        abs(reevaluate_witness(field_, w) - w.value) <= 1e-9 * (1.0 + abs(w.value)) for w in cert.witnesses
    )
    passed = (
        dirac.max_abs == 0.0
        and smooth.max_normalized <= 1e-5
        and abs(density.normalizer - 0.0634936) <= 1e-6
        and cert.verdict == VIOLATED
        and signs == [-1.0, 1.0]
        and reproduced
        and hand_ok
    )
    measured = {
        "dirac_residual": dirac.max_abs,
        "density_residual": smooth.max_normalized,
        "normalizer": density.normalizer,
        "verdict": cert.verdict,
        "witnesses": [w.to_dict() for w in cert.witnesses],
        "hand_values": hand,
    }
    return CriterionResult(3, passed, smooth.max_normalized, "density residual <= 1e-5, verdict violated", measured)


# ==========================================
# 4-6 カップリングと測度
# ==========================================


def _ou_rate(budget, h, T, K):
    ens = simulate_coupled(
        make_builtin(OU_1D), ([1.0], [0.0]), h, T, K, seed=budget.seed, snapshots=50, threads=budget.threads
    )
    return contraction_rate(ens, (0.0, ens.T)).rate


def ou_contraction(budget: SuiteBudget) -> CriterionResult:
    K = budget.pick(10_000, 2_000)
    T = budget.pick(2.0, 1.0)
    coarse = _ou_rate(budget, 1e-3, T, K)
    fine = _ou_rate(budget, 5e-4, T, K)
    err_coarse, err_fine = abs(coarse - 1.0), abs(fine - 1.0)
    passed = 0.98 <= coarse <= 1.02 and err_fine <= 0.6 * err_coarse
    return CriterionResult(
        4, passed, coarse, "rate in [0.98, 1.02], error(h/2) <= 0.6 error(h)",
        {"rate_h": coarse, "rate_h_half": fine, "K": K, "T": T},
    )


def gaussian_product(budget: SuiteBudget) -> CriterionResult:
    field_ = make_builtin(OU_1D)
    gamma = gaussian([0.0], [[0.5]])
    psi = tapered(Monomial((1, 1)), 4.0)
    product = doubled_weak_residual(field_, CouplingMeasure.product(gamma, gamma), [psi]).values[0]
    diagonal = doubled_weak_residual(field_, CouplingMeasure.diagonal(gamma), [psi]).values[0]
    passed = abs(product - 1.0) <= 2e-3 and abs(diagonal) <= 2e-3
    return CriterionResult(
        5, passed, float(product), "product 1 +- 2e-3, diagonal 0 +- 2e-3",
        {"product": float(product), "diagonal": float(diagonal)},
    )


def tanh_example(budget: SuiteBudget) -> CriterionResult:
    field_ = make_builtin(FieldParams("tanh_1d", 1, None, {}))
    solution = solve_1d(field_)
    is_dirac = isinstance(solution, DiracMeasure) and abs(float(solution.atom[0])) <= 1e-4
    cert = check_theorem1(field_, _region(budget, 3.0), threads=budget.threads)
    ens = simulate_coupled(
        field_, ([1.0], [-1.0]), 1e-2, 50.0, budget.pick(1_000, 400), seed=budget.seed, snapshots=50,
        threads=budget.threads,
    )
    # X - Y はマルチンゲールなので平均二乗差は減らない。経路ごとの収束は中央値で見る
    median = ens.summary()["final_median_sq_diff"]
    passed = is_dirac and cert.criterion == "theorem1_positive" and cert.verdict == HOLDS and median < 1e-3
    return CriterionResult(
        6, passed, median, "Dirac at 0, theorem1_positive holds, median |X-Y|^2 < 1e-3 at T=50",
        {
            "solution": type(solution).__name__,
            "atom": solution.atom.tolist() if isinstance(solution, DiracMeasure) else None,
            "criterion": cert.criterion,
            "verdict": cert.verdict,
            "final_mean_sq_diff": ens.summary()["final_mean_sq_diff"],
        },
    )


def isotropic_margin(budget: SuiteBudget) -> CriterionResult:
    field_ = make_builtin(FieldParams("isotropic", 2, None, {"scale": 1.0, "exponent": 1.0, "drift_rate": 1.0}))
    cert = check_example4(field_, _region(budget, 5.0), threads=budget.threads)
    passed = abs(cert.extremum - 1.0) <= 1e-6
    return CriterionResult(7, passed, cert.extremum, "min margin = 1 within 1e-6", {"verdict": cert.verdict})


# ==========================================
# 8-9 正則化とソルバー
# ==========================================


def mollified_identity(budget: SuiteBudget) -> CriterionResult:
    eps = 0.1
    field_ = make_builtin(OU_1D)
    gamma = gaussian([0.0], [[0.5]])
    battery = default_battery(1, Box((-2.0,), (2.0,)), budget.pick(10, 6), seed=budget.seed)
    values = []
    for ratio in (1.0 / 8.0, 1.0 / 16.0):
        system = regularize_coefficients(field_, gamma, eps, GridSpec.covering(gamma, eps, ratio * eps))
        values.append(regularized_residual(system, battery, threads=budget.threads).max_normalized)
    coarse, fine = values
    passed = coarse <= 1e-4 and (fine <= coarse / 1.5 or fine <= 1e-9)
    return CriterionResult(
        8, passed, coarse, "residual <= 1e-4 at eps/8, 1.5x smaller at eps/16",
        {"spacing_eps_8": coarse, "spacing_eps_16": fine},
    )


def grid_solver(budget: SuiteBudget) -> CriterionResult:
    field_ = make_builtin(OU_2D)
    box = Box((-6.0, -6.0), (6.0, 6.0))
    reference = gaussian([0.0, 0.0], 0.5 * np.eye(2))
    battery = default_battery(2, Box((-2.0, -2.0), (2.0, 2.0)), 8, seed=budget.seed)
    fine_n = budget.pick(128, 64)
    residuals, l1 = [], None
    for n in (fine_n // 2, fine_n):
        density = solve_2d(field_, box, n, n)
        residuals.append(weak_residual(field_, density, battery, threads=budget.threads).max_abs)
        diff = np.abs(density.values.ravel() - reference.density(density.centers()))
        l1 = float(diff.sum() * density.cell_volume)
    ratio = residuals[1] / residuals[0] if residuals[0] > 0 else 0.0
    passed = l1 <= 5e-2 and ratio <= 0.6
    return CriterionResult(
        9, passed, l1, "L1 <= 5e-2, residual ratio per halving <= 0.6",
        {"resolution": fine_n, "l1_distance": l1, "residuals": residuals, "ratio": ratio},
    )


# ==========================================
# 10 決定性
# ==========================================


def _determinism_scenarios(seed):
    field_ = {"family": "ornstein_uhlenbeck", "d": 1, "lambda": 1.0, "sigma0": 0.5}
    return [
        parse_scenario(
            {"name": "determinism-certify", "task": "certify", "seed": seed, "field": field_,
             "certify": {"radius": 3.0, "sample_budget": 20_000, "multistart_count": 4}}
        ),
        parse_scenario(
            {"name": "determinism-simulate", "task": "simulate", "seed": seed, "field": field_,
             "simulate": {"h": 0.01, "T": 1.0, "K": 600, "block_size": 128, "init": {"x": [1.0], "y": [0.0]}}}
        ),
    ]


def determinism(budget: SuiteBudget, out) -> CriterionResult:
    from .runner import run_scenario

    digests = {}
    for scenario in _determinism_scenarios(budget.seed):
        shas = [
            run_scenario(scenario, out / "determinism" / f"{scenario.name}-t{threads}", threads=threads, plots=False).sha256
            for threads in (1, 4)
        ]
        digests[scenario.name] = shas
    passed = all(len(set(s)) == 1 for s in digests.values())
    return CriterionResult(10, passed, float(passed), "identical report.json for 1 and 4 workers", {"sha256": digests})


CRITERIA = {
    1: doubling_identity,
    2: doubled_psd,
    3: power_law_example,
    4: ou_contraction,
    5: gaussian_product,
    6: tanh_example,
    7: isotropic_margin,
    8: mollified_identity,
    9: grid_solver,
}


def run_criterion(number, budget: SuiteBudget, out) -> CriterionResult:
    if number == 10:
        return determinism(budget, out)
    return CRITERIA[number](budget)


def run_suite(params, ctx, seed=0):
    """params = {"quick": bool, "criteria": [1..10]}。runner.TaskOutput を返す"""
    from .runner import TaskOutput

    budget = SuiteBudget(params.get("quick", False), seed, ctx.threads)
    numbers = params.get("criteria") or sorted(TITLES)
    results = {}
    for number in tqdm(numbers, desc="Paper suite", disable=not ctx.progress):
        started = time.perf_counter()
        try:
            result = run_criterion(number, budget, ctx.out)
        except KolmogorovError as e:
            tqdm.write(f"❌ criterion {number} failed: {e}")
            result = CriterionResult(number, False, float("nan"), "", {"error": e.to_dict()})
        elapsed = time.perf_counter() - started
        # 実行時間はログのみ (レポートは決定的に保つ)
        logger.info("criterion %d (%s): %s in %.1fs", number, TITLES[number],
                    "passed" if result.passed else "FAILED", elapsed)
        if not result.passed:
            tqdm.write(f"⚠️ criterion {number} did not pass: {TITLES[number]}")
        results[number] = result

    summary = pd.DataFrame(
        [
            {"criterion": n, "title": r.title, "passed": r.passed, "headline": r.headline, "threshold": r.threshold}
            for n, r in results.items()
        ]
    )
    summary.to_csv(ctx.path("summary.csv"), index=False, float_format="%.17g")
    verdict = HOLDS if all(r.passed for r in results.values()) else VIOLATED
    return TaskOutput(
        verdict,
        {"quick": budget.quick, "criteria": {str(n): r.to_dict() for n, r in results.items()}},
        ["summary.csv"],
        settings=("scan_chunk_size", "coupling_block_size", "quadrature_rtol", "power_iteration_tol"),
    )
