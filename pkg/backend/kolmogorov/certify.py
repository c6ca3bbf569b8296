"""
一意性条件の数値的な認定 (あるいは反例による反駁)。

走査は有界領域 (半径 R の球) 内の点対に限られ、結果は常にその領域付きで報告する。
乱数はチャンクごとに SeedSequence([seed, chunk]) から作る Philox ストリームで、
極値のマージはチャンク順に行うので、並列数に依らず結果はビット単位で一致する。
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from tqdm import tqdm

from .coeff import CoefficientField
from .conf import get_setting, resolve_threads
from .doubling import q_values, r_values
from .exceptions import ContractViolationError, InvalidParameterError, NumericalEvaluationError
from .measures import Box, DiracMeasure, EmpiricalMeasure, GridDensity, Integrand

logger = logging.getLogger(__name__)

HOLDS = "holds_on_region"
VIOLATED = "violated"
INDEFINITE = "indefinite"

CRITERIA = ("theorem1_negative", "theorem1_positive", "theorem2", "corollary1", "example4", "example3")


# ==========================================
# 🧱 走査領域と Λ
# ==========================================


@dataclass(frozen=True)
class ScanRegion:
    """
    半径 R の球、分離下限 δ_min、標本数 N、多点スタート数 M、乱数シード。
    None の項目は settings.KOLMOCOUPLE の既定値で埋める。
    """

    radius: Optional[float] = None
    separation_floor: Optional[float] = None
    sample_budget: Optional[int] = None
    multistart_count: Optional[int] = None
    rng_seed: int = 0
    margin_floor: Optional[float] = None

    def __post_init__(self):
        defaults = {
            "radius": "scan_radius",
            "separation_floor": "scan_separation_floor",
            "sample_budget": "scan_sample_budget",
            "multistart_count": "scan_multistart_count",
            "margin_floor": "scan_margin_floor",
        }
        for attr, key in defaults.items():
            if getattr(self, attr) is None:
                object.__setattr__(self, attr, get_setting(key))
        object.__setattr__(self, "radius", float(self.radius))
        object.__setattr__(self, "separation_floor", float(self.separation_floor))
        object.__setattr__(self, "sample_budget", int(self.sample_budget))
        object.__setattr__(self, "multistart_count", int(self.multistart_count))
        object.__setattr__(self, "margin_floor", float(self.margin_floor))
        if not self.radius > 0:
            raise InvalidParameterError("radius", "must be positive")
        if not 0 < self.separation_floor < self.radius:
            raise InvalidParameterError("separation_floor", "need 0 < separation_floor < radius")
        if self.sample_budget < 1:
            raise InvalidParameterError("sample_budget", "must be >= 1")
        if self.multistart_count < 0:
            raise InvalidParameterError("multistart_count", "must be >= 0")
        if int(self.rng_seed) < 0:
            raise InvalidParameterError("rng_seed", "must be a nonnegative integer")

    def to_dict(self):
        return {
            "radius": self.radius,
            "separation_floor": self.separation_floor,
            "sample_budget": self.sample_budget,
            "multistart_count": self.multistart_count,
            "rng_seed": int(self.rng_seed),
            "margin_floor": self.margin_floor,
        }


@dataclass(frozen=True)
class LambdaFunction:
    """q の上界に使う非負関数 Λ (theorem2 / corollary1)"""

    evaluator: Callable[[np.ndarray], np.ndarray]
    label: str

    def __call__(self, pts):
        pts = np.atleast_2d(pts)
        values = np.asarray(self.evaluator(pts), dtype=float).reshape(len(pts))
        if np.any(values < 0) or not np.isfinite(values).all():
            raise ContractViolationError(f"Lambda {self.label} must be finite and >= 0")
        return values

    @classmethod
    def constant(cls, value):
        value = float(value)
        if value < 0:
            raise InvalidParameterError("lambda.value", "Lambda must be nonnegative")
        return cls(lambda pts: np.full(len(pts), value), f"constant({value:g})")

    @classmethod
    def quadratic(cls, c0, c1):
        c0, c1 = float(c0), float(c1)
        if c0 < 0 or c1 < 0:
            raise InvalidParameterError("lambda", "quadratic Lambda needs c0, c1 >= 0")
        return cls(lambda pts: c0 + c1 * np.sum(pts * pts, axis=1), f"quadratic({c0:g}+{c1:g}|x|^2)")

    @classmethod
    def from_config(cls, spec):
        kind = spec.get("kind", "constant")
        if kind == "constant":
            return cls.constant(spec.get("value", 0.0))
        if kind == "quadratic":
            return cls.quadratic(spec.get("c0", 0.0), spec.get("c1", 0.0))
        raise InvalidParameterError("lambda.kind", f"unknown Lambda kind {kind!r}")


# ==========================================
# 📏 走査する量 (すべて |x-y|² で正規化)
# ==========================================


def _sep2(X, Y):
    dx = X - Y
    return np.sum(dx * dx, axis=1)


def q_hat(field, X, Y, **_):
    return q_values(field, X, Y) / _sep2(X, Y)


def strict_margin(field, X, Y, **_):
    """(2r - q)/|x-y|² (> 0 が狭義不等式 q < 2r)"""
    return (2.0 * r_values(field, X, Y) - q_values(field, X, Y)) / _sep2(X, Y)


def bound_margin(field, X, Y, Lambda=None, **_):
    """(Λ(x)+Λ(y)) - q/|x-y|² (>= 0)"""
    return Lambda(X) + Lambda(Y) - q_hat(field, X, Y)


def lipschitz_margin(field, X, Y, Lambda=None, **_):
    """(√Λ(x)+√Λ(y)) - ‖Σ(x)-Σ(y)‖_F/|x-y| (>= 0)"""
    ds = field.sigma(X) - field.sigma(Y)
    ratio = np.sqrt(np.sum(ds * ds, axis=(1, 2)) / _sep2(X, Y))
    return np.sqrt(Lambda(X)) + np.sqrt(Lambda(Y)) - ratio


def example4_margin(field, X, Y, **_):
    """A = σ²I のとき ((2-d)(Δσ)² - ⟨Δx, Δb⟩)/|Δx|²"""
    d = field.d
    dsig = field.sigma(X)[:, 0, 0] - field.sigma(Y)[:, 0, 0]
    dx = X - Y
    db = field.drift(X) - field.drift(Y)
    return ((2 - d) * dsig * dsig - np.sum(dx * db, axis=1)) / _sep2(X, Y)


def drift_margin(field, X, Y, lam=0.0, **_):
    """⟨Δx, Δb⟩/|Δx|² + λ (>= 0)"""
    dx = X - Y
    db = field.drift(X) - field.drift(Y)
    return np.sum(dx * db, axis=1) / _sep2(X, Y) + lam


def sigma_margin(field, X, Y, lam=0.0, **_):
    """‖ΔΣ‖²_F/|Δx|² - λ (> 0)"""
    ds = field.sigma(X) - field.sigma(Y)
    return np.sum(ds * ds, axis=(1, 2)) / _sep2(X, Y) - lam


QUANTITIES = {
    "q_hat": q_hat,
    "strict_margin": strict_margin,
    "bound_margin": bound_margin,
    "lipschitz_margin": lipschitz_margin,
    "example4_margin": example4_margin,
    "drift_margin": drift_margin,
    "sigma_margin": sigma_margin,
}


@dataclass(frozen=True)
class Witness:
    x: tuple
    y: tuple
    value: float
    quantity: str

    def to_dict(self):
        return {"x": list(self.x), "y": list(self.y), "value": self.value, "quantity": self.quantity}


def reevaluate_witness(field, witness: Witness, Lambda=None, lam=0.0) -> float:
    fn = QUANTITIES[witness.quantity]
    X = np.asarray(witness.x, dtype=float)[None, :]
    Y = np.asarray(witness.y, dtype=float)[None, :]
    return float(fn(field, X, Y, Lambda=Lambda, lam=lam)[0])


# ==========================================
# 🎲 標本化と極値のマージ
# ==========================================


@dataclass
class SignReport:
    """走査結果: 極値とその点対、符号の内訳、使った評価回数"""

    quantity: str
    min_value: float
    max_value: float
    argmin: Witness
    argmax: Witness
    negatives: int
    positives: int
    zeros: int
    sampled: int
    probes: int
    refinement_evaluations: int = 0

    @property
    def budget_used(self):
        return self.sampled + self.probes

    def to_dict(self):
        return {
            "quantity": self.quantity,
            "min": self.min_value,
            "max": self.max_value,
            "argmin": self.argmin.to_dict(),
            "argmax": self.argmax.to_dict(),
            "negatives": self.negatives,
            "positives": self.positives,
            "zeros": self.zeros,
            "sampled": self.sampled,
            "probes": self.probes,
            "refinement_evaluations": self.refinement_evaluations,
        }


def _chunk_rng(seed, chunk):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(chunk)])))


def _ball_points(rng, n, d, radius):
    g = rng.standard_normal((n, d))
    norms = np.linalg.norm(g, axis=1)
    norms[norms == 0] = 1.0
    r = radius * rng.random(n) ** (1.0 / d)
    return g / norms[:, None] * r[:, None]


def sample_pairs(d, region: ScanRegion, chunk, size):
    """
    チャンク chunk の点対。常にチャンク全体を生成してから先頭 size 個を返すので、
    標本数を増やしても既存の点対は変わらない。
    """
    full = get_setting("scan_chunk_size")
    rng = _chunk_rng(region.rng_seed, chunk)
    X = _ball_points(rng, full, d, region.radius)
    Y = _ball_points(rng, full, d, region.radius)
    bad = np.linalg.norm(X - Y, axis=1) < region.separation_floor
    while bad.any():
        k = int(bad.sum())
        X[bad] = _ball_points(rng, k, d, region.radius)
        Y[bad] = _ball_points(rng, k, d, region.radius)
        bad = np.linalg.norm(X - Y, axis=1) < region.separation_floor
    return X[:size], Y[:size]


def structured_probes(d, region: ScanRegion):
    """
    決定的な探索点対: 軸方向・対角方向の共線対 (s u, 2s u), (s u, 4s u)、
    原点との対 (0, s u)、対蹠対 (s u, -s u)、直交対 (s u, s u + s v)。
    """
    R, delta = region.radius, region.separation_floor
    scales = np.geomspace(max(10.0 * delta, 1e-4 * R), R / 4.0, 16)
    dirs = [np.eye(d)[k] for k in range(d)]
    if d > 1:
        dirs.append(np.ones(d) / math.sqrt(d))
    xs, ys = [], []
    for u in dirs:
        v = np.roll(u, 1) if d > 1 else None
        if v is not None:
            v = v - (v @ u) * u
            nv = np.linalg.norm(v)
            v = v / nv if nv > 0 else None
        for s in scales:
            candidates = [(s * u, 2 * s * u), (s * u, 4 * s * u), (np.zeros(d), s * u), (s * u, -s * u)]
            if v is not None:
                candidates.append((s * u, s * u + s * v))
            for x, y in candidates:
                xs.append(x)
                ys.append(y)
    X, Y = np.array(xs), np.array(ys)
    keep = (
        (np.linalg.norm(X, axis=1) <= R)
        & (np.linalg.norm(Y, axis=1) <= R)
        & (np.linalg.norm(X - Y, axis=1) >= delta)
    )
    return X[keep], Y[keep]


def _evaluate(objective, X, Y):
    values = np.asarray(objective(X, Y), dtype=float)
    bad = ~np.isfinite(values)
    if bad.any():
        i = int(np.argmax(bad))
        raise NumericalEvaluationError(np.concatenate([X[i], Y[i]]), "scan objective")
    return values


def _extremes(values, X, Y, keep):
    lo = np.argsort(values, kind="stable")[:keep]
    hi = np.argsort(-values, kind="stable")[:keep]
    return (values[lo], X[lo], Y[lo]), (values[hi], X[hi], Y[hi])


def _scan_chunk(objective, d, region, chunk, size, keep):
    X, Y = sample_pairs(d, region, chunk, size)
    values = _evaluate(objective, X, Y)
    lows, highs = _extremes(values, X, Y, keep)
    counts = (int(np.sum(values < 0)), int(np.sum(values > 0)), int(np.sum(values == 0)))
    return lows, highs, counts


# ==========================================
# 🔍 多点スタートの局所改良
# ==========================================


def _feasible(z, d, region):
    x, y = z[:d], z[d:]
    return (
        np.linalg.norm(x) <= region.radius
        and np.linalg.norm(y) <= region.radius
        and np.linalg.norm(x - y) >= region.separation_floor
    )


def refine_minimum(objective, x0, y0, region: ScanRegion, fd_iters=30, pattern_iters=200):
    """
    座標ごとの中心差分勾配による降下。勾配が雑音に埋もれる (非滑らかな σ など) ときは
    パターン探索 (compass search) に切り替える。
    戻り値: (value, x, y, evaluations)
    """
    d = len(x0)
    z = np.concatenate([x0, y0]).astype(float)
    f = float(_evaluate(objective, z[None, :d], z[None, d:])[0])
    evaluations = 1
    step_rel = get_setting("scan_fd_step")
    eye = np.eye(2 * d)

    def batch(points):
        nonlocal evaluations
        evaluations += len(points)
        vals = np.asarray(objective(points[:, :d], points[:, d:]), dtype=float)
        return np.where(np.isfinite(vals), vals, np.inf)

    for _ in range(fd_iters):
        h = step_rel * (1.0 + np.linalg.norm(z))
        probes = np.concatenate([z + h * eye, z - h * eye])
        vals = batch(probes)
        grad = (vals[: 2 * d] - vals[2 * d :]) / (2.0 * h)
        gnorm = np.linalg.norm(grad)
        if not np.isfinite(gnorm) or gnorm == 0.0:
            break
        t = 0.1 * (1.0 + np.linalg.norm(z)) / gnorm
        accepted = False
        for _ in range(20):
            cand = z - t * grad
            if _feasible(cand, d, region):
                fc = float(batch(cand[None, :])[0])
                if fc < f:
                    z, f, accepted = cand, fc, True
                    break
            t *= 0.5
        if not accepted:
            break

    step = 0.05 * (1.0 + np.linalg.norm(z))
    floor = 1e-12 * (1.0 + np.linalg.norm(z))
    for _ in range(pattern_iters):
        if step < floor:
            break
        probes = np.concatenate([z + step * eye, z - step * eye])
        ok = np.array([_feasible(p, d, region) for p in probes])
        vals = np.full(len(probes), np.inf)
        if ok.any():
            vals[ok] = batch(probes[ok])
        best = int(np.argmin(vals))
        if vals[best] < f:
            z, f = probes[best], float(vals[best])
        else:
            step *= 0.5
    return f, z[:d].copy(), z[d:].copy(), evaluations


# ==========================================
# 🛰️ 走査本体
# ==========================================


def scan(field: CoefficientField, region: ScanRegion, quantity="q_hat", threads=None, progress=False, **params):
    """
    quantity を N 個の乱択点対 + 決定的探索点対で評価し、最小・最大の候補から
    M 回の局所改良を行う。
    """
    fn = QUANTITIES[quantity]

    def objective(X, Y):
        return fn(field, X, Y, **params)

    d = field.d
    chunk = get_setting("scan_chunk_size")
    m = region.multistart_count
    keep = max(m, 1)
    n_chunks = math.ceil(region.sample_budget / chunk)
    sizes = [min(chunk, region.sample_budget - i * chunk) for i in range(n_chunks)]
    threads = resolve_threads(threads)

    def run(i):
        return _scan_chunk(objective, d, region, i, sizes[i], keep)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as executor:
            results = list(
                tqdm(executor.map(run, range(n_chunks)), total=n_chunks, desc=f"Scanning {quantity}", disable=not progress)
            )
    else:
        results = [run(i) for i in tqdm(range(n_chunks), desc=f"Scanning {quantity}", disable=not progress)]

    PX, PY = structured_probes(d, region)
    probe_values = _evaluate(objective, PX, PY) if len(PX) else np.zeros(0)
    probe_lows, probe_highs = _extremes(probe_values, PX, PY, keep)

    # チャンク順 → 探索点対の順で連結し、安定ソートで上位を取る
    def merge(parts):
        vals = np.concatenate([p[0] for p in parts])
        xs = np.concatenate([p[1] for p in parts])
        ys = np.concatenate([p[2] for p in parts])
        return vals, xs, ys

    low_vals, low_x, low_y = merge([r[0] for r in results] + [probe_lows])
    high_vals, high_x, high_y = merge([r[1] for r in results] + [probe_highs])
    order_lo = np.argsort(low_vals, kind="stable")
    order_hi = np.argsort(-high_vals, kind="stable")

    negatives = sum(r[2][0] for r in results) + int(np.sum(probe_values < 0))
    positives = sum(r[2][1] for r in results) + int(np.sum(probe_values > 0))
    zeros = sum(r[2][2] for r in results) + int(np.sum(probe_values == 0))

    best_lo = (float(low_vals[order_lo[0]]), low_x[order_lo[0]], low_y[order_lo[0]])
    best_hi = (float(high_vals[order_hi[0]]), high_x[order_hi[0]], high_y[order_hi[0]])
    evaluations = 0
    for i in order_lo[:m]:
        v, x, y, ev = refine_minimum(objective, low_x[i], low_y[i], region)
        evaluations += ev
        if v < best_lo[0]:
            best_lo = (v, x, y)
    neg_objective = lambda X, Y: -objective(X, Y)  # noqa: E731
    for i in order_hi[:m]:
        v, x, y, ev = refine_minimum(neg_objective, high_x[i], high_y[i], region)
        evaluations += ev
        if -v > best_hi[0]:
            best_hi = (-v, x, y)

    def witness(entry):
        v, x, y = entry
        return Witness(tuple(np.asarray(x).tolist()), tuple(np.asarray(y).tolist()), float(v), quantity)

    report = SignReport(
        quantity=quantity,
        min_value=best_lo[0],
        max_value=best_hi[0],
        argmin=witness(best_lo),
        argmax=witness(best_hi),
        negatives=negatives,
        positives=positives,
        zeros=zeros,
        sampled=region.sample_budget,
        probes=len(PX),
        refinement_evaluations=evaluations,
    )
    logger.info(
        "scan %s on %s: min=%.6g max=%.6g (%d pairs + %d probes)",
        quantity, field.label, report.min_value, report.max_value, report.sampled, report.probes,
    )
    return report


def scan_sign(field: CoefficientField, region: ScanRegion, threads=None, progress=False) -> SignReport:
    """q̂ = q/|x-y|² の極値"""
    return scan(field, region, "q_hat", threads=threads, progress=progress)


# ==========================================
# 📜 証明書
# ==========================================


@dataclass
class Certificate:
    criterion: str
    verdict: str
    witness: Optional[Witness]
    extremum: float
    budget_used: int
    region: ScanRegion
    witnesses: list = field(default_factory=list)
    checks: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "criterion": self.criterion,
            "verdict": self.verdict,
            "witness": self.witness.to_dict() if self.witness else None,
            "witnesses": [w.to_dict() for w in self.witnesses],
            "extremum": self.extremum,
            "budget_used": self.budget_used,
            "region": self.region.to_dict(),
            "checks": self.checks,
            "details": self.details,
            "caveat": f"scan restricted to the ball of radius {self.region.radius:g}",
        }


def _strict_verdict(report: SignReport, floor):
    """min > 0 を要求する条件: floor 以上なら成立、-floor 未満なら反例"""
    if report.min_value >= floor:
        return HOLDS
    if report.min_value < -floor:
        return VIOLATED
    return INDEFINITE


def _weak_verdict(report: SignReport, floor):
    """min >= 0 を要求する条件"""
    return VIOLATED if report.min_value < -floor else HOLDS


def combine_verdicts(verdicts):
    if VIOLATED in verdicts:
        return VIOLATED
    if INDEFINITE in verdicts:
        return INDEFINITE
    return HOLDS


def check_theorem1(field: CoefficientField, region: ScanRegion, threads=None, progress=False) -> Certificate:
    """
    【符号条件】 q > 0 (x != y) または q < 0 (x != y)。
    両符号が観測されれば violated (両方の証人付き)。criterion は標本の多数派の符号。
    """
    rep = scan_sign(field, region, threads=threads, progress=progress)
    floor = region.margin_floor
    majority_negative = rep.negatives > rep.positives
    criterion = "theorem1_negative" if majority_negative else "theorem1_positive"
    witnesses = []
    if rep.min_value < -floor and rep.max_value > floor:
        verdict = VIOLATED
        witnesses = [rep.argmin, rep.argmax]
        # 多数派と逆符号の点が反例
        witness = rep.argmax if majority_negative else rep.argmin
    elif rep.max_value < -floor:
        verdict, witness, criterion = HOLDS, rep.argmax, "theorem1_negative"
    elif rep.min_value > floor:
        verdict, witness, criterion = HOLDS, rep.argmin, "theorem1_positive"
    else:
        # 極値の一方が 0 の近傍
        verdict = INDEFINITE
        witness = rep.argmax if majority_negative else rep.argmin
    return Certificate(
        criterion=criterion,
        verdict=verdict,
        witness=witness,
        witnesses=witnesses,
        extremum=rep.min_value if criterion == "theorem1_positive" else rep.max_value,
        budget_used=rep.budget_used,
        region=region,
        checks={"q_hat": verdict},
        details={"scan": rep.to_dict()},
    )


def check_theorem2(field, Lambda: LambdaFunction, region: ScanRegion, threads=None, progress=False) -> Certificate:
    """
    【Λ 付き上界】 q <= (Λ(x)+Λ(y))|x-y|² かつ q < 2r (x != y)。
    狭義不等式の余裕 floor は実用上の代用で、条件そのものではない。
    """
    floor = region.margin_floor
    bound = scan(field, region, "bound_margin", threads=threads, progress=progress, Lambda=Lambda)
    strict = scan(field, region, "strict_margin", threads=threads, progress=progress)
    checks = {"bound": _weak_verdict(bound, floor), "strict": _strict_verdict(strict, floor)}
    verdict = combine_verdicts(checks.values())
    witnesses = [rep.argmin for rep, v in ((bound, checks["bound"]), (strict, checks["strict"])) if v != HOLDS]
    return Certificate(
        criterion="theorem2",
        verdict=verdict,
        witness=witnesses[0] if witnesses else strict.argmin,
        witnesses=witnesses,
        extremum=strict.min_value,
        budget_used=bound.budget_used + strict.budget_used,
        region=region,
        checks=checks,
        details={"lambda": Lambda.label, "bound": bound.to_dict(), "strict": strict.to_dict()},
    )


def check_corollary1(field, Lambda: LambdaFunction, region: ScanRegion, threads=None, progress=False) -> Certificate:
    """【Lipschitz 型条件】 ‖Σ(x)-Σ(y)‖ <= (√Λ(x)+√Λ(y))|x-y| かつ q < 2r"""
    floor = region.margin_floor
    lip = scan(field, region, "lipschitz_margin", threads=threads, progress=progress, Lambda=Lambda)
    strict = scan(field, region, "strict_margin", threads=threads, progress=progress)
    checks = {"lipschitz": _weak_verdict(lip, floor), "strict": _strict_verdict(strict, floor)}
    verdict = combine_verdicts(checks.values())
    witnesses = [rep.argmin for rep, v in ((lip, checks["lipschitz"]), (strict, checks["strict"])) if v != HOLDS]
    return Certificate(
        criterion="corollary1",
        verdict=verdict,
        witness=witnesses[0] if witnesses else lip.argmin,
        witnesses=witnesses,
        extremum=lip.min_value,
        budget_used=lip.budget_used + strict.budget_used,
        region=region,
        checks=checks,
        details={"lambda": Lambda.label, "lipschitz": lip.to_dict(), "strict": strict.to_dict()},
    )


def _require_isotropic(field, region):
    rng = _chunk_rng(region.rng_seed, 2**31)
    pts = _ball_points(rng, 64, field.d, region.radius)
    s = field.sigma(pts)
    if field.d1 != field.d:
        raise InvalidParameterError("field", "example4 needs a square isotropic Σ")
    expected = s[:, 0, 0][:, None, None] * np.eye(field.d)
    if not np.allclose(s, expected, rtol=0, atol=1e-12 * (1.0 + np.abs(s).max())):
        raise InvalidParameterError("field", "example4 needs Σ(x) = σ(x)I")


def check_example4(field, region: ScanRegion, threads=None, progress=False) -> Certificate:
    """
    【等方拡散】 A = σ²I: q < 2r ⇔ ⟨Δx, Δb⟩ < (2-d)(Δσ)²。
    余裕 ((2-d)(Δσ)² - ⟨Δx, Δb⟩)/|Δx|² の最小値を報告する。
    """
    _require_isotropic(field, region)
    rep = scan(field, region, "example4_margin", threads=threads, progress=progress)
    verdict = _strict_verdict(rep, region.margin_floor)
    return Certificate(
        criterion="example4",
        verdict=verdict,
        witness=rep.argmin,
        witnesses=[rep.argmin] if verdict != HOLDS else [],
        extremum=rep.min_value,
        budget_used=rep.budget_used,
        region=region,
        checks={"example4_margin": verdict},
        details={"scan": rep.to_dict()},
    )


def check_example3(field, lam: float, region: ScanRegion, threads=None, progress=False) -> Certificate:
    """
    【対角写像の十分条件】 ⟨x-y, b(x)-b(y)⟩ >= -λ|x-y|² かつ ‖Σ(x)-Σ(y)‖²_F > λ|x-y|² なら q > 0。
    """
    if not lam > 0:
        raise InvalidParameterError("lambda", "example3 needs lambda > 0")
    floor = region.margin_floor
    drift = scan(field, region, "drift_margin", threads=threads, progress=progress, lam=lam)
    sig = scan(field, region, "sigma_margin", threads=threads, progress=progress, lam=lam)
    checks = {"drift": _weak_verdict(drift, floor), "sigma": _strict_verdict(sig, floor)}
    verdict = combine_verdicts(checks.values())
    witnesses = [rep.argmin for rep, v in ((drift, checks["drift"]), (sig, checks["sigma"])) if v != HOLDS]
    return Certificate(
        criterion="example3",
        verdict=verdict,
        witness=witnesses[0] if witnesses else sig.argmin,
        witnesses=witnesses,
        extremum=sig.min_value,
        budget_used=drift.budget_used + sig.budget_used,
        region=region,
        checks=checks,
        details={"lambda": lam, "drift": drift.to_dict(), "sigma": sig.to_dict()},
    )


# ==========================================
# 📐 モーメント条件
# ==========================================


def _frob2(m):
    return np.sum(m * m, axis=(1, 2))


def _moment_terms(field, criterion, Lambda):
    def sigma_sq(pts):
        return _frob2(field.sigma(pts))

    def drift_times_x(pts):
        return np.linalg.norm(field.drift(pts), axis=1) * np.linalg.norm(pts, axis=1)

    def sigma_sq_weighted(pts):
        return sigma_sq(pts) / (1.0 + np.sum(pts * pts, axis=1))

    def drift_weighted(pts):
        return np.linalg.norm(field.drift(pts), axis=1) / (1.0 + np.linalg.norm(pts, axis=1))

    def superposition(pts):
        a = np.sqrt(_frob2(field.diffusion(pts)))
        bx = np.abs(np.sum(field.drift(pts) * pts, axis=1))
        return (a + bx) / (1.0 + np.sum(pts * pts, axis=1))

    terms = {
        "theorem1": {"sigma_sq": sigma_sq, "drift_times_x": drift_times_x},
        "theorem2": {"sigma_sq_weighted": sigma_sq_weighted, "drift_weighted": drift_weighted},
        "corollary1": {"drift_weighted": drift_weighted},
        "superposition": {"superposition": superposition},
    }
    if criterion not in terms:
        raise InvalidParameterError("criterion", f"unknown moment criterion {criterion!r}")
    chosen = dict(terms[criterion])
    if criterion in ("theorem2", "corollary1"):
        if Lambda is None:
            raise InvalidParameterError("lambda", f"{criterion} moments need Lambda")
        chosen["lambda"] = Lambda
    return chosen


@dataclass
class MomentReport:
    criterion: str
    radius: float
    integrals: dict

    @property
    def all_finite(self):
        return all(v["finite"] for v in self.integrals.values())

    def to_dict(self):
        return {"criterion": self.criterion, "radius": self.radius, "integrals": self.integrals,
                "all_finite": self.all_finite}


def _default_moment_radius(measure):
    if isinstance(measure, (GridDensity, EmpiricalMeasure, DiracMeasure)):
        box = measure.support_box()
        corners = np.maximum(np.abs(box.lo), np.abs(box.hi))
        return float(np.linalg.norm(corners)) + 1.0
    return float(get_setting("moment_radius"))


def check_moments(field, measure, criterion="theorem1", Lambda=None, radius=None) -> MomentReport:
    """
    必要な積分を半径 R と 2R の球で打ち切って計算する。
    finite フラグは打ち切りの安定性 (1% 以内で一致) であって証明ではない。
    """
    R = float(radius) if radius is not None else _default_moment_radius(measure)
    terms = _moment_terms(field, criterion, Lambda)
    integrals = {}
    for name, fn in terms.items():
        values = []
        for rad in (R, 2.0 * R):
            integrand = Integrand(fn, Box.symmetric(field.d, rad), (np.zeros(field.d), rad))
            values.append(measure.integrate(integrand).value)
        v1, v2 = values
        finite = bool(np.isfinite(v2) and (v1 == v2 or abs(v2 - v1) <= 0.01 * abs(v2)))
        integrals[name] = {"R": v1, "2R": v2, "finite": finite}
    return MomentReport(criterion, R, integrals)
