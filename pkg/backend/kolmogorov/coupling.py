"""
同期カップリング (同じ Brownian 増分で駆動する 2 本の SDE) の Euler–Maruyama シミュレーション、
収縮率と W₂ 上界の推定、時間平均による経験的不変測度。

    X_{n+1} = X_n + √2 Σ(X_n) ΔW_n + b(X_n) h
    Y_{n+1} = Y_n + √2 Σ(Y_n) ΔW_n + b(Y_n) h

経路対 i は Philox(SeedSequence([seed, i])) を使い、対はブロック単位でスレッドに配る。
結果はスレッド数・ブロック幅・K に依らず、対ごとにビット単位で一致する。
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np
import pandas as pd
from scipy.stats import linregress
from tqdm import tqdm

from .coeff import CoefficientField
from .conf import get_setting, resolve_threads
from .exceptions import DegenerateFitError, InvalidParameterError, PathBlowupError
from .measures import EmpiricalMeasure

logger = logging.getLogger(__name__)

SQRT2 = math.sqrt(2.0)

Sampler = Callable[[np.random.Generator, int], np.ndarray]


# ==========================================
# 🎯 初期分布のサンプラー
# ==========================================


def point_sampler(x, d) -> Sampler:
    x = np.asarray(x, dtype=float).reshape(d)
    return lambda rng, n: np.tile(x, (n, 1))


def gaussian_sampler(mean, covariance) -> Sampler:
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    cov = np.atleast_2d(np.asarray(covariance, dtype=float))
    chol = np.linalg.cholesky(cov)
    return lambda rng, n: mean + rng.standard_normal((n, mean.size)) @ chol.T


def sampler_from_config(spec, d) -> Sampler:
    """[1.0] のような点、または {"kind": "gaussian", "mean": ..., "variance": ...}"""
    if isinstance(spec, (list, tuple, int, float)):
        return point_sampler(spec, d)
    kind = spec.get("kind", "point")
    if kind == "point":
        return point_sampler(spec["at"], d)
    if kind == "gaussian":
        mean = np.asarray(spec.get("mean", np.zeros(d)), dtype=float).reshape(d)
        cov = spec.get("covariance")
        if cov is None:
            cov = float(spec.get("variance", 1.0)) * np.eye(d)
        return gaussian_sampler(mean, cov)
    raise InvalidParameterError("init.kind", f"unknown initial law {kind!r}")


def _as_sampler(obj, d) -> Sampler:
    return obj if callable(obj) else point_sampler(obj, d)


# ==========================================
# 📦 アンサンブル
# ==========================================


@dataclass
class CouplingEnsemble:
    """
    states: (K, スナップショット数, 2, d)。死んだ経路は死亡以降 NaN。
    統計量は保存した states から毎回計算し直す。
    """

    label: str
    h: float
    T: float
    K: int
    seed: int
    d1: int
    snapshot_steps: np.ndarray
    states: np.ndarray
    escape_times: np.ndarray
    noise_draws: int

    @property
    def times(self):
        return self.snapshot_steps * self.h

    @property
    def steps(self):
        return int(self.snapshot_steps[-1])

    @property
    def blown_up(self):
        return int(np.sum(np.isfinite(self.escape_times)))

    def sq_diff(self):
        diff = self.states[:, :, 0, :] - self.states[:, :, 1, :]
        return np.sum(diff * diff, axis=2)

    def statistics(self) -> pd.DataFrame:
        sq = self.sq_diff()
        rows = []
        for k, t in enumerate(self.times):
            col = sq[:, k]
            col = col[np.isfinite(col)]
            n = len(col)
            mean = float(np.mean(col)) if n else float("nan")
            stderr = float(np.std(col, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
            median = float(np.median(col)) if n else float("nan")
            rows.append((float(t), mean, stderr, n, median))
        return pd.DataFrame(rows, columns=["t", "mean_sq_diff", "stderr", "alive_paths", "median_sq_diff"])

    def to_csv(self, path):
        self.statistics().to_csv(path, index=False, float_format="%.17g")

    def dump_states(self, path):
        """little-endian float64、(pair, time, copy, coordinate) の順に連続"""
        Path(path).write_bytes(np.ascontiguousarray(self.states, dtype="<f8").tobytes())

    def summary(self):
        stats = self.statistics()
        return {
            "label": self.label,
            "h": self.h,
            "T": self.T,
            "K": self.K,
            "seed": self.seed,
            "steps": self.steps,
            "snapshots": len(self.snapshot_steps),
            "noise_draws": self.noise_draws,
            "blown_up": self.blown_up,
            "final_mean_sq_diff": float(stats["mean_sq_diff"].iloc[-1]),
            "final_median_sq_diff": float(stats["median_sq_diff"].iloc[-1]),
        }


def read_state_dump(path, K, snapshots, d):
    data = np.frombuffer(Path(path).read_bytes(), dtype="<f8")
    return data.reshape(K, snapshots, 2, d)


def _snapshot_steps(n_steps, snapshots):
    return np.unique(np.round(np.linspace(0, n_steps, snapshots + 1)).astype(np.int64))


def pair_generator(seed, pair) -> np.random.Generator:
    """経路対 pair 専用のストリーム"""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(pair)])))


def _simulate_block(field, init_x, init_y, h, n_steps, snap_steps, seed, start, n):
    d, d1 = field.d, field.d1
    rngs = [pair_generator(seed, start + i) for i in range(n)]
    # 各対は自分のストリームから x, y, 増分の順に引く
    X = np.empty((n, d))
    Y = np.empty((n, d))
    for i, rng in enumerate(rngs):
        X[i] = np.asarray(init_x(rng, 1), dtype=float).reshape(d)
        Y[i] = np.asarray(init_y(rng, 1), dtype=float).reshape(d)
    states = np.full((n, len(snap_steps), 2, d), np.nan)
    escape = np.full(n, np.nan)
    alive = np.ones(n, dtype=bool)
    guard = get_setting("coupling_blowup_guard")
    chunk = get_setting("coupling_noise_chunk")
    sqrt_h = math.sqrt(h)
    draws = 0
    snap_pos = {int(s): k for k, s in enumerate(snap_steps)}
    noise = None

    if 0 in snap_pos:
        states[:, snap_pos[0], 0] = X
        states[:, snap_pos[0], 1] = Y

    for step in range(n_steps):
        offset = step % chunk
        if offset == 0:
            # ステップ方向に chunk 本まとめて生成 (死んだ経路の分も引く)
            m = min(chunk, n_steps - step)
            noise = np.stack([rng.standard_normal((m, d1)) for rng in rngs], axis=1) * sqrt_h
            draws += m * n * d1
        if alive.any():
            idx = np.flatnonzero(alive)
            dW = noise[offset, idx]
            xs, ys = X[idx], Y[idx]
            X[idx] = xs + SQRT2 * np.einsum("nij,nj->ni", field.sigma(xs), dW) + field.drift(xs) * h
            Y[idx] = ys + SQRT2 * np.einsum("nij,nj->ni", field.sigma(ys), dW) + field.drift(ys) * h
            big = np.maximum(np.abs(X[idx]).max(axis=1), np.abs(Y[idx]).max(axis=1))
            dead = idx[~(big <= guard)]
            if dead.size:
                alive[dead] = False
                escape[dead] = (step + 1) * h
                X[dead] = np.nan
                Y[dead] = np.nan
        k = snap_pos.get(step + 1)
        if k is not None:
            states[:, k, 0] = X
            states[:, k, 1] = Y
    return states, escape, draws


def simulate_coupled(
    field: CoefficientField,
    init,
    h,
    T,
    K,
    seed=0,
    snapshots=None,
    threads=None,
    block_size=None,
    progress=False,
) -> CouplingEnsemble:
    """
    init = (μ₀ のサンプラー, ν₀ のサンプラー)。サンプラーは (rng, n) -> (n, d) の関数か、固定点。
    """
    h, T, K = float(h), float(T), int(K)
    if not h > 0:
        raise InvalidParameterError("h", "step must be positive")
    if not T >= h:
        raise InvalidParameterError("T", "horizon must be >= h")
    if K < 1:
        raise InvalidParameterError("K", "need at least one path pair")
    n_steps = int(round(T / h))
    if abs(n_steps * h - T) > 1e-9 * T:
        logger.warning("T=%g is not a multiple of h=%g; using %d steps", T, h, n_steps)
    snapshots = snapshots or get_setting("coupling_snapshots")
    snap_steps = _snapshot_steps(n_steps, int(snapshots))
    block_size = int(block_size or get_setting("coupling_block_size"))
    init_x = _as_sampler(init[0], field.d)
    init_y = _as_sampler(init[1], field.d)

    blocks = [(start, min(block_size, K - start)) for start in range(0, K, block_size)]

    def run(block):
        start, n = block
        return _simulate_block(field, init_x, init_y, h, n_steps, snap_steps, seed, start, n)

    threads = resolve_threads(threads)
    desc = f"Coupled paths {field.label}"
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as executor:
            results = list(tqdm(executor.map(run, blocks), total=len(blocks), desc=desc, disable=not progress))
    else:
        results = [run(block) for block in tqdm(blocks, desc=desc, disable=not progress)]

    states = np.concatenate([r[0] for r in results], axis=0)
    escape = np.concatenate([r[1] for r in results])
    draws = sum(r[2] for r in results)
    ensemble = CouplingEnsemble(
        label=field.label,
        h=h,
        T=n_steps * h,
        K=K,
        seed=int(seed),
        d1=field.d1,
        snapshot_steps=snap_steps,
        states=states,
        escape_times=escape,
        noise_draws=draws,
    )
    if ensemble.blown_up:
        logger.warning("%d of %d path pairs blew up and are excluded", ensemble.blown_up, K)
    return ensemble


# ==========================================
# 📉 収縮率と W₂ 上界
# ==========================================


@dataclass
class ContractionReport:
    rate: float
    rate_stderr: float
    window: tuple
    residual: float
    predicted_final: float
    observed_final: float
    points: int

    @property
    def contracting(self):
        """推定率が有意に正か"""
        return bool(self.rate > max(0.05, 3.0 * self.rate_stderr))

    def to_dict(self):
        return {
            "rate": self.rate,
            "rate_stderr": self.rate_stderr,
            "window": list(self.window),
            "residual": self.residual,
            "predicted_final": self.predicted_final,
            "observed_final": self.observed_final,
            "points": self.points,
            "contracting": self.contracting,
        }


def contraction_rate(ensemble: CouplingEnsemble, fit_window=None) -> ContractionReport:
    """log E|X_t-Y_t|² の最小二乗の傾きから λ̂ = -slope/2"""
    t0, t1 = fit_window if fit_window is not None else (0.0, ensemble.T)
    t0, t1 = float(t0), float(t1)
    if not (0.0 <= t0 < t1 <= ensemble.T + 1e-12):
        raise InvalidParameterError("fit_window", f"window ({t0}, {t1}) must lie within [0, {ensemble.T}]")
    stats = ensemble.statistics()
    sel = stats[(stats["t"] >= t0 - 1e-12) & (stats["t"] <= t1 + 1e-12)]
    msd = sel["mean_sq_diff"].to_numpy()
    if len(sel) < 2:
        raise DegenerateFitError("fit window holds fewer than two snapshots")
    if not np.all(np.isfinite(msd)) or np.any(msd <= 0):
        raise DegenerateFitError("mean-square difference is not positive on the fit window")
    t = sel["t"].to_numpy()
    fit = linregress(t, np.log(msd))
    resid = np.log(msd) - (fit.intercept + fit.slope * t)
    rate = -fit.slope / 2.0
    if not math.isfinite(rate):
        raise DegenerateFitError("fitted rate is not finite")
    return ContractionReport(
        rate=float(rate),
        rate_stderr=float(fit.stderr / 2.0) if math.isfinite(fit.stderr) else 0.0,
        window=(t0, t1),
        residual=float(np.sqrt(np.mean(resid * resid))),
        predicted_final=float(math.exp(fit.intercept + fit.slope * t[-1])),
        observed_final=float(msd[-1]),
        points=len(sel),
    )


@dataclass(frozen=True)
class W2Bound:
    t_requested: float
    t_used: float
    value: float
    stderr: float
    off_grid: bool

    def to_dict(self):
        return {
            "t_requested": self.t_requested,
            "t_used": self.t_used,
            "value": self.value,
            "stderr": self.stderr,
            "off_grid": self.off_grid,
        }


def _bound_from_row(msd, se):
    value = math.sqrt(max(msd, 0.0))
    # デルタ法: se(√m) = se(m)/(2√m)
    stderr = se / (2.0 * value) if value > 0 else 0.0
    return value, stderr


def w2_upper_bound(ensemble: CouplingEnsemble, t) -> W2Bound:
    """W₂(μ_t, ν_t) <= √E|X_t-Y_t|²。格子外の t は最も近いスナップショット"""
    stats = ensemble.statistics()
    times = stats["t"].to_numpy()
    k = int(np.argmin(np.abs(times - t)))
    off_grid = bool(abs(times[k] - t) > 1e-9 * max(1.0, ensemble.T))
    if off_grid:
        logger.warning("t=%g is not a snapshot time; using t=%g", t, times[k])
    value, stderr = _bound_from_row(stats["mean_sq_diff"].iloc[k], stats["stderr"].iloc[k])
    return W2Bound(float(t), float(times[k]), value, stderr, off_grid)


def w2_profile(ensemble: CouplingEnsemble):
    """全スナップショットの上界と、統計誤差を超えて増えた時刻"""
    stats = ensemble.statistics()
    values, errors = [], []
    for msd, se in zip(stats["mean_sq_diff"], stats["stderr"]):
        v, e = _bound_from_row(msd, se)
        values.append(v)
        errors.append(e)
    values, errors = np.array(values), np.array(errors)
    times = stats["t"].to_numpy()
    grow = values[1:] > values[:-1] * (1.0 + 1e-12) + 2.0 * (errors[1:] + errors[:-1])
    return {
        "t": times.tolist(),
        "bound": values.tolist(),
        "stderr": errors.tolist(),
        "increases_at": times[1:][grow].tolist(),
        "nonincreasing": bool(not grow.any()),
    }


# ==========================================
# 🌀 経験的不変測度
# ==========================================


def empirical_invariant(
    field: CoefficientField,
    h,
    burn_in,
    T,
    seed=0,
    stride=1,
    x0=None,
    chains=1,
    progress=False,
) -> EmpiricalMeasure:
    """
    長い軌道 (chains 本、各自のストリーム) を burn_in 後に stride ステップごとに標本化し、
    一様重みの経験測度にまとめる。
    """
    h, T, burn_in = float(h), float(T), float(burn_in)
    if not h > 0:
        raise InvalidParameterError("h", "step must be positive")
    if not T > burn_in >= 0:
        raise InvalidParameterError("T", "need T > burn_in >= 0")
    if int(stride) < 1 or int(chains) < 1:
        raise InvalidParameterError("stride", "stride and chains must be >= 1")
    stride, chains = int(stride), int(chains)
    d, d1 = field.d, field.d1
    n_steps = int(round(T / h))
    burn_steps = int(round(burn_in / h))
    start = np.zeros(d) if x0 is None else np.asarray(x0, dtype=float).reshape(d)
    X = np.tile(start, (chains, 1))
    rngs = [np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), c]))) for c in range(chains)]
    guard = get_setting("coupling_blowup_guard")
    chunk = get_setting("coupling_noise_chunk")
    sqrt_h = math.sqrt(h)
    samples = []
    if burn_steps == 0:
        samples.append(X.copy())
    noise = None
    for step in tqdm(range(n_steps), desc=f"Invariant {field.label}", disable=not progress):
        offset = step % chunk
        if offset == 0:
            m = min(chunk, n_steps - step)
            noise = np.stack([rng.standard_normal((m, d1)) for rng in rngs], axis=1) * sqrt_h
        X = X + SQRT2 * np.einsum("nij,nj->ni", field.sigma(X), noise[offset]) + field.drift(X) * h
        big = np.abs(X).max(axis=1)
        bad = ~(big <= guard)
        if bad.any():
            chain = int(np.argmax(bad))
            raise PathBlowupError((step + 1) * h, chain)
        n = step + 1
        if n >= burn_steps and (n - burn_steps) % stride == 0:
            samples.append(X.copy())
    points = np.concatenate(samples, axis=0)
    logger.info("empirical invariant of %s: %d samples from %d chains", field.label, len(points), chains)
    return EmpiricalMeasure.uniform(points)
