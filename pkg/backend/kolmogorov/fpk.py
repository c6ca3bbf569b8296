"""
定常 Kolmogorov (FPK) 方程式 L*μ = 0 の弱形式残差・試験関数バッテリー・
1D/2D の定常解ソルバー・Lyapunov 関数のチェック。
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import sparse
from scipy.integrate import cumulative_trapezoid
from scipy.optimize import minimize_scalar

from .coeff import CoefficientField
from .conf import get_setting, resolve_threads
from .doubling import doubled_generator_value, generator_value
from .exceptions import (
    AnisotropyError,
    ConvergenceError,
    InvalidParameterError,
    ToleranceError,
    UnsupportedDegeneracyError,
)
from .measures import Box, DiracMeasure, GridDensity, Integrand
from .testfunctions import Cutoff, PolyBump, ProductFunction, SquaredNorm, TestFunction, function_from_config

logger = logging.getLogger(__name__)


# ==========================================
# 🧾 弱形式残差
# ==========================================


@dataclass
class ResidualEntry:
    index: int
    function: dict
    residual: float
    error: float
    scale: float
    flags: list = field(default_factory=list)

    @property
    def normalized(self):
        return self.residual / self.scale

    def to_dict(self):
        return {
            "index": self.index,
            "function": self.function,
            "residual": self.residual,
            "error": self.error,
            "scale": self.scale,
            "normalized": self.normalized,
            "flags": list(self.flags),
        }


@dataclass
class ResidualReport:
    label: str
    entries: list

    @property
    def values(self):
        return np.array([e.residual for e in self.entries])

    @property
    def max_abs(self):
        return float(np.max(np.abs(self.values))) if self.entries else 0.0

    @property
    def max_normalized(self):
        return float(max(abs(e.normalized) for e in self.entries)) if self.entries else 0.0

    @property
    def flagged(self):
        return [e for e in self.entries if e.flags]

    def to_dict(self):
        return {
            "label": self.label,
            "max_abs": self.max_abs,
            "max_normalized": self.max_normalized,
            "entries": [e.to_dict() for e in self.entries],
        }


def _residual_entry(index, measure, f: TestFunction, integrand_func, support_hint=None):
    box = f.support_box()
    if box is None:
        raise InvalidParameterError("battery", f"test function {index} has no compact support")
    scale = f.c2_scale()
    if support_hint is not None and box.intersect(support_hint) is None:
        return ResidualEntry(index, f.describe(), 0.0, 0.0, scale, ["outside_support"])
    integrand = Integrand(integrand_func, box, f.support_ball())
    try:
        result = measure.integrate(integrand)
        return ResidualEntry(index, f.describe(), result.value, result.error, scale)
    except ToleranceError as e:
        logger.warning("residual of test function %d did not converge: %s", index, e)
        estimate = e.estimate if e.estimate is not None else float("nan")
        return ResidualEntry(index, f.describe(), estimate, e.error or float("nan"), scale, ["tolerance"])


def _run_battery(tasks, threads):
    threads = resolve_threads(threads)
    if threads > 1 and len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as executor:
            return list(executor.map(lambda task: task(), tasks))
    return [task() for task in tasks]


def weak_residual(field: CoefficientField, measure, battery, threads=None) -> ResidualReport:
    """各 f について ∫ Lf dμ (supp f に制限)"""
    if not battery:
        raise InvalidParameterError("battery", "battery must be nonempty")
    support = measure.support_box()

    def task_for(i, f):
        if f.dim != field.d:
            raise InvalidParameterError("battery", f"test function {i} has dimension {f.dim}, field has {field.d}")
        return lambda: _residual_entry(i, measure, f, lambda pts: generator_value(field, f, pts), support)

    entries = _run_battery([task_for(i, f) for i, f in enumerate(battery)], threads)
    return ResidualReport(f"L* {field.label}", entries)


def doubled_weak_residual(field: CoefficientField, coupling, battery, threads=None) -> ResidualReport:
    """各 ψ について ∫ 𝕃ψ dπ"""
    if not battery:
        raise InvalidParameterError("battery", "battery must be nonempty")

    def task_for(i, psi):
        if psi.dim != 2 * field.d:
            raise InvalidParameterError("battery", f"doubled test function {i} must live on R^{2 * field.d}")
        return lambda: _residual_entry(i, coupling, psi, lambda pts: doubled_generator_value(field, psi, pts))

    entries = _run_battery([task_for(i, psi) for i, psi in enumerate(battery)], threads)
    return ResidualReport(f"doubled L* {field.label}", entries)


# ==========================================
# 🧪 バッテリー
# ==========================================


def _stratified(rng, count, dim):
    """各軸を count 層に分けたラテン超方格"""
    u = np.empty((count, dim))
    for k in range(dim):
        u[:, k] = (rng.permutation(count) + rng.random(count)) / count
    return u


def default_battery(dim, box: Box, count, seed=0):
    """
    決定的なバッテリー: 層化した中心、3 種類の半径、4 本に 1 本は x_k·bump の重み付き変種。
    """
    if count < 1:
        raise InvalidParameterError("count", "battery needs count >= 1")
    if box.dim != dim:
        raise InvalidParameterError("box", "box dimension mismatch")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed)])))
    centers = box.lo + box.widths * _stratified(rng, count, dim)
    base = float(np.min(box.widths))
    fractions = (0.15, 0.25, 0.35)
    battery = []
    for i, c in enumerate(centers):
        radius = fractions[i % 3] * base
        weight_axis = (i // 4) % dim if i % 4 == 3 else None
        battery.append(PolyBump(c, radius, weight_axis))
    return battery


def shell_battery(dim, count, r_min, r_max, seed=0):
    """
    中心のノルムが [r_min, r_max] に入るバンプ。半径は 0.5|c| と 1.5|c| を交互に使う
    (後者は原点を台に含む)。
    """
    if count < 1 or not 0 < r_min <= r_max:
        raise InvalidParameterError("count", "need count >= 1 and 0 < r_min <= r_max")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), 1])))
    g = rng.standard_normal((count, dim))
    g /= np.linalg.norm(g, axis=1)[:, None]
    norms = r_min + (r_max - r_min) * (np.arange(count) + rng.random(count)) / count
    battery = []
    for i in range(count):
        c = g[i] * norms[i]
        battery.append(PolyBump(c, (0.5 if i % 2 == 0 else 1.5) * norms[i]))
    return battery


def battery_from_config(spec: dict, dim, default_box: Optional[Box] = None):
    """
    {"kind": "default", "count": .., "box": {"lower": .., "upper": ..}}
    {"kind": "shell", "count": .., "r_min": .., "r_max": ..}
    {"kind": "list", "functions": [..]}
    """
    kind = spec.get("kind", "default")
    seed = int(spec.get("seed", 0))
    count = int(spec.get("count", 20))
    if kind == "default":
        box = spec.get("box")
        box = Box(tuple(box["lower"]), tuple(box["upper"])) if box else default_box
        if box is None:
            raise InvalidParameterError("battery.box", "the default battery needs a box")
        return default_battery(dim, box, count, seed)
    if kind == "shell":
        return shell_battery(dim, count, float(spec["r_min"]), float(spec["r_max"]), seed)
    if kind == "list":
        functions = spec.get("functions") or []
        if not functions:
            raise InvalidParameterError("battery.functions", "list battery must be nonempty")
        return [function_from_config(f, dim) for f in functions]
    raise InvalidParameterError("battery.kind", f"unknown battery kind {kind!r}")


def cutoff_family(j, mode="quadratic_arg", V: Optional[SquaredNorm] = None, dim=None) -> Cutoff:
    """ψ_j = F(V/j) または F(ln(1+V)/j)。V の既定は |z|²"""
    if j < 1:
        raise InvalidParameterError("j", "cutoff index must be >= 1")
    if V is not None:
        dim = V.dim
    if dim is None:
        raise InvalidParameterError("dim", "give V or dim")
    return Cutoff(float(j), mode, dim, V)


def cutoff_telescoping(field: CoefficientField, measure, f: TestFunction, js=(1, 2, 4, 8, 16, 32)):
    """
    |∫ L(f ψ_j) dμ - ∫ ψ_j Lf dμ| を j ごとに返す (j → ∞ で 0 に近づくはず)。
    """
    rows = []
    for j in js:
        psi = cutoff_family(j, "quadratic_arg", dim=field.d)
        product = ProductFunction(f, psi)
        box, ball = psi.support_box(), psi.support_ball()

        def lhs_func(pts, product=product):
            return generator_value(field, product, pts)

        def rhs_func(pts, psi=psi):
            return psi.value(pts) * generator_value(field, f, pts)

        lhs = measure.integrate(Integrand(lhs_func, box, ball)).value
        rhs = measure.integrate(Integrand(rhs_func, box, ball)).value
        rows.append({"j": float(j), "lhs": lhs, "rhs": rhs, "gap": abs(lhs - rhs)})
    return rows


# ==========================================
# ⛓️ マルコフ生成作用素と定常ベクトル
# ==========================================


def _drift_rates(D, b, h):
    """
    軸方向の遷移率 (up, down)。
    D >= |b|/(2h) なら中心差分、そうでなければ風上差分。
    """
    central = D >= np.abs(b) / (2.0 * h)
    up = np.where(central, D + b / (2.0 * h), D + np.maximum(b, 0.0) / h)
    down = np.where(central, D - b / (2.0 * h), D + np.maximum(-b, 0.0) / h)
    return up, down, central


def _assemble(n_cells, rows, cols, rates):
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    rates = np.concatenate(rates)
    keep = rates > 0
    rows, cols, rates = rows[keep], cols[keep], rates[keep]
    out = np.bincount(rows, weights=rates, minlength=n_cells)
    diag = np.arange(n_cells)
    Q = sparse.coo_matrix(
        (np.concatenate([rates, -out]), (np.concatenate([rows, diag]), np.concatenate([cols, diag]))),
        shape=(n_cells, n_cells),
    ).tocsr()
    Q.sum_duplicates()
    return Q


def generator_checks(Q):
    """非対角 >= 0 と行和 0 (1e-12 相対)"""
    Q = Q.tocoo()
    off = Q.row != Q.col
    min_off = float(Q.data[off].min()) if off.any() else 0.0
    row_sums = np.asarray(Q.sum(axis=1)).ravel()
    scale = float(np.max(np.abs(Q.diagonal()))) or 1.0
    return {"min_offdiagonal": min_off, "max_row_sum": float(np.max(np.abs(row_sums))) / scale}


def stationary_vector(Q, max_iter=None, tol=None):
    """
    p ← p + τ Qᵗ p (τ = 0.9/max|Q_ii|) のべき乗法。
    100 反復ごとに ‖τQᵗp‖₁ を調べ、tol 以下で停止。
    """
    max_iter = max_iter or get_setting("power_iteration_max")
    tol = tol or get_setting("power_iteration_tol")
    n = Q.shape[0]
    q_max = float(np.max(np.abs(Q.diagonal())))
    if q_max == 0.0:
        return np.full(n, 1.0 / n), 0, 0.0
    tau = 0.9 / q_max
    QT = Q.T.tocsr()
    p = np.full(n, 1.0 / n)
    residual = np.inf
    for it in range(1, max_iter + 1):
        step = tau * (QT @ p)
        p = p + step
        if it % 100 == 0:
            residual = float(np.abs(step).sum())
            p = np.clip(p, 0.0, None)
            p /= p.sum()
            if residual <= tol:
                return p, it, residual
    raise ConvergenceError(f"power iteration did not converge in {max_iter} iterations", residual)


# ==========================================
# 📈 1D ソルバー
# ==========================================


def _zeros_of_a(a_func, x, a, threshold):
    """格子上の局所最小の近くで a の零点を有界 1 変数最小化で探す"""
    zeros = []
    n = len(x)
    for i in range(n):
        left = a[i - 1] if i > 0 else np.inf
        right = a[i + 1] if i < n - 1 else np.inf
        # 平坦な区間 (a 一定) は候補にしない
        if not (a[i] <= left and a[i] <= right and a[i] < max(left, right)):
            continue
        lo = x[max(i - 1, 0)]
        hi = x[min(i + 1, n - 1)]
        res = minimize_scalar(a_func, bounds=(lo, hi), method="bounded", options={"xatol": 1e-12})
        value = min(float(res.fun), float(a[i]))
        where = float(res.x) if res.fun <= a[i] else float(x[i])
        if value < threshold:
            zeros.append(where)
    # 隣接セルが同じ零点を拾うので統合
    zeros = sorted(zeros)
    merged = []
    h = x[1] - x[0]
    for z in zeros:
        if not merged or z - merged[-1] > 2.0 * h:
            merged.append(z)
    return merged


def _runs(mask):
    runs, start = [], None
    for i, flag in enumerate(mask):
        if flag and start is None:
            start = i
        elif not flag and start is not None:
            runs.append((start, i))
            start = None
    if start is not None:
        runs.append((start, len(mask)))
    return runs


def _generator_1d(a, b, h):
    n = len(a)
    D = a / (h * h)
    up, down, central = _drift_rates(D, b, h)
    idx = np.arange(n)
    rows = [idx[:-1], idx[1:]]
    cols = [idx[1:], idx[:-1]]
    rates = [up[:-1], down[1:]]
    return _assemble(n, rows, cols, rates), int(central.sum())


def solve_1d(field: CoefficientField, domain=(-8.0, 8.0), n=1024):
    """
    1D 定常解。
    a > 閾値: 流束ゼロの閉形式 μ ∝ exp(∫b/a)/a
    a が孤立零点を持ち b ≡ 0: 零点の Dirac 測度
    a が区間で消える: UnsupportedDegeneracyError
    それ以外: 生成作用素の定常ベクトル (診断付き)
    """
    if field.d != 1:
        raise InvalidParameterError("field", "solve_1d needs d = 1")
    if n < 16:
        raise InvalidParameterError("n", "need n >= 16 cells")
    lo, hi = float(domain[0]), float(domain[1])
    if not hi > lo:
        raise InvalidParameterError("domain", "need lo < hi")
    box = Box((lo,), (hi,))
    h = (hi - lo) / n
    x = lo + (np.arange(n) + 0.5) * h
    pts = x[:, None]
    a = field.diffusion(pts)[:, 0, 0]
    b = field.drift(pts)[:, 0]
    a_max = float(np.max(a))
    if a_max <= 0.0:
        raise UnsupportedDegeneracyError("a vanishes on the whole domain")
    threshold = get_setting("degeneracy_threshold") * a_max

    for start, stop in _runs(a < threshold):
        if stop - start >= 3:
            raise UnsupportedDegeneracyError(
                f"a vanishes on [{x[start]:.6g}, {x[stop - 1]:.6g}]; probability solutions are not unique there"
            )

    def a_func(t):
        return float(field.diffusion(np.array([[t]]))[0, 0, 0])

    zeros = _zeros_of_a(a_func, x, a, threshold)
    if not zeros:
        log_p = cumulative_trapezoid(b / a, x, initial=0.0) - np.log(a)
        p = np.exp(log_p - log_p.max())
        return GridDensity.from_values(box, p, (f"closed-form zero-flux density on {n} cells",))

    drift_free = bool(np.all(np.abs(b) <= threshold))
    if drift_free:
        if len(zeros) > 1:
            raise UnsupportedDegeneracyError(
                f"a has {len(zeros)} isolated zeros with b = 0; every mixture of the Dirac measures solves"
            )
        logger.info("a vanishes only at %.6g and b = 0: Dirac solution", zeros[0])
        return DiracMeasure(np.array([zeros[0]]))

    Q, central = _generator_1d(a, b, h)
    p, iterations, residual = stationary_vector(Q)
    notes = (
        f"degenerate: a vanishes near {', '.join(f'{z:.6g}' for z in zeros)}",
        f"generator fallback: {iterations} power iterations, residual {residual:.3e}, central cells {central}/{n}",
    )
    logger.warning(notes[0])
    diagnostics = {
        "degenerate_points": [float(z) for z in zeros],
        "power_iterations": int(iterations),
        "stationary_residual": float(residual),
    }
    return GridDensity.from_values(box, p / h, notes, diagnostics)


# ==========================================
# 🗺️ 2D ソルバー
# ==========================================


def assemble_generator_2d(field: CoefficientField, box: Box, nx, ny):
    """
    9 点ステンシルの生成作用素 Q (反射境界)。
    軸方向: a_kk/h_k² - |a12|/(h1 h2) (+ 移流)、対角方向: a12^± /(h1 h2)。
    |a12| > min(a11 h2/h1, a22 h1/h2) のセルが 1% を超えれば AnisotropyError、
    それ以下ならそのセルの |a12| を上限に切り詰める。
    """
    if field.d != 2:
        raise InvalidParameterError("field", "solve_2d needs d = 2")
    if box.dim != 2:
        raise InvalidParameterError("box", "need a 2D box")
    h1, h2 = box.widths[0] / nx, box.widths[1] / ny
    xs = box.lo[0] + (np.arange(nx) + 0.5) * h1
    ys = box.lo[1] + (np.arange(ny) + 0.5) * h2
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    pts = np.stack([X.ravel(), Y.ravel()], axis=1)
    A = field.diffusion(pts)
    b = field.drift(pts)
    a11, a22, a12 = A[:, 0, 0], A[:, 1, 1], 0.5 * (A[:, 0, 1] + A[:, 1, 0])

    limit = np.minimum(a11 * h2 / h1, a22 * h1 / h2)
    bad = np.abs(a12) > limit * (1.0 + 1e-12)
    fraction = float(bad.mean())
    allowed = 1.0 - get_setting("anisotropy_fraction")
    if fraction > allowed:
        cells = [tuple(int(v) for v in np.unravel_index(i, (nx, ny))) for i in np.flatnonzero(bad)]
        raise AnisotropyError(cells, fraction)
    if bad.any():
        logger.warning(
            "clamped |a12| to the monotone limit on %d of %d cells (%.2f%%); the stencil is inexact there",
            int(bad.sum()), bad.size, 100.0 * fraction,
        )
    a12 = np.where(bad, np.sign(a12) * limit, a12)

    cross = np.abs(a12) / (h1 * h2)
    D1 = a11 / (h1 * h1) - cross
    D2 = a22 / (h2 * h2) - cross
    up1, down1, c1 = _drift_rates(D1, b[:, 0], h1)
    up2, down2, c2 = _drift_rates(D2, b[:, 1], h2)
    pos = np.maximum(a12, 0.0) / (h1 * h2)
    neg = np.maximum(-a12, 0.0) / (h1 * h2)

    I, J = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    I, J = I.ravel(), J.ravel()
    flat = lambda i, j: i * ny + j  # noqa: E731
    rows, cols, rates = [], [], []
    for di, dj, rate in (
        (1, 0, up1), (-1, 0, down1), (0, 1, up2), (0, -1, down2),
        (1, 1, pos), (-1, -1, pos), (1, -1, neg), (-1, 1, neg),
    ):
        ti, tj = I + di, J + dj
        ok = (ti >= 0) & (ti < nx) & (tj >= 0) & (tj < ny)
        rows.append(flat(I[ok], J[ok]))
        cols.append(flat(ti[ok], tj[ok]))
        rates.append(rate[ok])
    Q = _assemble(nx * ny, rows, cols, rates)
    info = {
        "clamped_cells": int(bad.sum()),
        "central_fraction": float(0.5 * (c1.mean() + c2.mean())),
        "spacing": [float(h1), float(h2)],
    }
    return Q, info


def solve_2d(field: CoefficientField, box: Box, nx=128, ny=128) -> GridDensity:
    """生成作用素の定常確率ベクトルをセル体積で割って密度にする"""
    if nx < 4 or ny < 4:
        raise InvalidParameterError("nx", "need at least 4 cells per axis")
    Q, info = assemble_generator_2d(field, box, nx, ny)
    p, iterations, residual = stationary_vector(Q)
    checks = generator_checks(Q)
    h1, h2 = info["spacing"]
    notes = (
        f"power iterations {iterations}, residual {residual:.3e}",
        f"clamped cells {info['clamped_cells']}, central fraction {info['central_fraction']:.4f}",
        f"min off-diagonal {checks['min_offdiagonal']:.3e}, max row sum {checks['max_row_sum']:.3e}",
    )
    diagnostics = {
        "clamped_cells": info["clamped_cells"],
        "central_fraction": info["central_fraction"],
        "power_iterations": int(iterations),
        "stationary_residual": float(residual),
    }
    logger.info("solve_2d %s on %dx%d: %s", field.label, nx, ny, notes[0])
    return GridDensity.from_values(box, p.reshape(nx, ny) / (h1 * h2), notes, diagnostics)


# ==========================================
# 🪜 Lyapunov 関数
# ==========================================


@dataclass
class LyapunovReport:
    label: str
    power: float
    radii: np.ndarray
    lv_max: np.ndarray
    lv_mean: np.ndarray
    target: float
    threshold_radius: Optional[float]
    constant: Optional[float]
    extras: dict = field(default_factory=dict)

    @property
    def valid(self):
        return self.threshold_radius is not None

    def to_dict(self):
        return {
            "label": self.label,
            "power": self.power,
            "target": self.target,
            "valid": self.valid,
            "threshold_radius": self.threshold_radius,
            "constant": self.constant,
            "radii": self.radii.tolist(),
            "lv_max": self.lv_max.tolist(),
            "lv_mean": self.lv_mean.tolist(),
            "extras": self.extras,
        }


def _lyapunov_directions(d, count=64):
    if d == 1:
        return np.array([[1.0], [-1.0]])
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([2024])))
    g = rng.standard_normal((count, d))
    g /= np.linalg.norm(g, axis=1)[:, None]
    return np.vstack([np.eye(d), -np.eye(d), g])


def power_lv(field: CoefficientField, power, pts):
    """V = |x|^p に対する LV = trace(A D²V) + ⟨b, ∇V⟩"""
    pts = np.atleast_2d(pts)
    r = np.linalg.norm(pts, axis=1)
    d = field.d
    with np.errstate(divide="ignore", invalid="ignore"):
        g = np.where(r > 0, power * r ** (power - 2.0), 0.0 if power > 2 else power)
        k = np.where(r > 0, power * (power - 2.0) * r ** (power - 4.0), 0.0)
    grad = g[:, None] * pts
    hess = g[:, None, None] * np.eye(d) + k[:, None, None] * pts[:, :, None] * pts[:, None, :]
    A = field.diffusion(pts)
    return np.einsum("nij,nij->n", A, hess) + np.einsum("ni,ni->n", field.drift(pts), grad)


def lyapunov_check(field: CoefficientField, powers=(2.0,), radii=None, target=1.0):
    """
    動径格子上で LV の方向最大値を調べ、それより外側で LV <= -target となる最小の R を返す。
    constant は R より外側での -max LV (その R で成り立つ最大の C)。
    """
    if not target > 0:
        raise InvalidParameterError("target", "target constant must be positive")
    radii = np.linspace(0.0, 10.0, 401) if radii is None else np.asarray(radii, dtype=float)
    dirs = _lyapunov_directions(field.d)
    reports = []
    for p in powers:
        if p < 2:
            raise InvalidParameterError("powers", "V = |x|^p needs p >= 2")
        pts = (radii[:, None, None] * dirs[None, :, :]).reshape(-1, field.d)
        lv = power_lv(field, p, pts).reshape(len(radii), len(dirs))
        lv_max, lv_mean = lv.max(axis=1), lv.mean(axis=1)
        # 外側からの累積最大
        tail_max = np.maximum.accumulate(lv_max[::-1])[::-1]
        ok = np.flatnonzero(tail_max <= -target)
        R = float(radii[ok[0]]) if ok.size else None
        C = float(-tail_max[ok[0]]) if ok.size else None
        extras = _example1_extras(field, p, radii, lv_max)
        reports.append(LyapunovReport(field.label, float(p), radii, lv_max, lv_mean, float(target), R, C, extras))
    return reports


def _example1_extras(field, power, radii, lv_max):
    """power_law(d=3, α=2) と V = |x|² の組では記載値 8r²-2r⁴ と上界 16-r⁴ も並べる"""
    params = field.params
    if params is None or params.family != "power_law" or field.d != 3 or power != 2.0:
        return {}
    if float(params.parameters.get("alpha", 0.0)) != 2.0:
        return {}
    stated = 8.0 * radii**2 - 2.0 * radii**4
    bound = 16.0 - radii**4
    return {
        "computed_formula": "6|x|^2 - 2|x|^4",
        "stated_formula": "8|x|^2 - 2|x|^4",
        "stated": stated.tolist(),
        "stated_bound": "16 - |x|^4",
        "bound_holds": bool(np.all(lv_max <= bound + 1e-9 * (1.0 + np.abs(bound)))),
    }
