"""
係数場 (Σ, b, A = ΣΣᵗ) の定義と評価。

評価関数は 1 点 (shape d) でもバッチ (shape n×d) でも受け付け、
内部では常に (n, d) の配列として扱う。
"""

import logging
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np
import pandas as pd
from scipy.interpolate import RegularGridInterpolator

from .exceptions import InvalidParameterError, NumericalEvaluationError

logger = logging.getLogger(__name__)

FAMILIES = (
    "power_law",
    "ornstein_uhlenbeck",
    "diagonal_map",
    "tanh_1d",
    "constant",
    "tabulated",
    "isotropic",
)

BatchEval = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class FieldParams:
    """
    係数場の族とパラメータ。
    parameters には alpha, lambda, sigma0, ... や表データのパスが入る。
    """

    family: str
    d: int = 1
    d1: Optional[int] = None
    parameters: dict = field(default_factory=dict)

    def to_dict(self):
        out = {"family": self.family, "d": self.d}
        if self.d1 is not None:
            out["d1"] = self.d1
        for key, value in self.parameters.items():
            out[key] = value.tolist() if isinstance(value, np.ndarray) else value
        return out


def as_points(x, d):
    """x を (n, d) に揃える。戻り値の single は 1 点入力だったかどうか。"""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    single = arr.ndim == 1
    pts = arr.reshape(1, -1) if single else arr
    if pts.ndim != 2 or pts.shape[1] != d:
        raise InvalidParameterError("x", f"expected shape ({d},) or (n, {d}), got {np.shape(x)}")
    return pts, single


def _check_finite(values, pts, what):
    flat = values.reshape(values.shape[0], -1)
    bad = ~np.isfinite(flat).all(axis=1)
    if bad.any():
        raise NumericalEvaluationError(pts[int(np.argmax(bad))], what)


class CoefficientField:
    """
    Σ: ℝ^d → ℝ^{d×d1}, b: ℝ^d → ℝ^d を持つ係数場。
    diffusion_eval を渡した場合、A はその評価値を使う (正則化された場では A ⪰ ΣΣᵗ)。
    構築後は不変で、複数スレッドから共有してよい。
    """

    def __init__(
        self,
        d: int,
        d1: int,
        sigma_eval: BatchEval,
        drift_eval: BatchEval,
        label: str,
        diffusion_eval: Optional[BatchEval] = None,
        params: Optional[FieldParams] = None,
    ):
        if d < 1 or d1 < 1:
            raise InvalidParameterError("d", f"dimensions must be positive, got d={d}, d1={d1}")
        self.d = int(d)
        self.d1 = int(d1)
        self.label = label
        self.params = params
        self._sigma_eval = sigma_eval
        self._drift_eval = drift_eval
        self._diffusion_eval = diffusion_eval

    def __repr__(self):
        return f"CoefficientField({self.label}, d={self.d}, d1={self.d1})"

    def sigma(self, x):
        pts, single = as_points(x, self.d)
        s = np.asarray(self._sigma_eval(pts), dtype=float).reshape(len(pts), self.d, self.d1)
        _check_finite(s, pts, "sigma")
        return s[0] if single else s

    def drift(self, x):
        pts, single = as_points(x, self.d)
        b = np.asarray(self._drift_eval(pts), dtype=float).reshape(len(pts), self.d)
        _check_finite(b, pts, "drift")
        return b[0] if single else b

    def diffusion(self, x):
        pts, single = as_points(x, self.d)
        if self._diffusion_eval is not None:
            a = np.asarray(self._diffusion_eval(pts), dtype=float).reshape(len(pts), self.d, self.d)
        else:
            s = self.sigma(pts)
            a = s @ np.swapaxes(s, 1, 2)
        a = 0.5 * (a + np.swapaxes(a, 1, 2))
        _check_finite(a, pts, "diffusion")
        return a[0] if single else a

    @property
    def has_own_diffusion(self):
        return self._diffusion_eval is not None

    def describe(self):
        out = {"label": self.label, "d": self.d, "d1": self.d1}
        if self.params is not None:
            out["params"] = self.params.to_dict()
        return out


def eval_diffusion(field: CoefficientField, x):
    """A(x) = Σ(x)Σ(x)ᵗ (Gram 積を転置との平均で対称化)"""
    return field.diffusion(x)


def psd_defect(field: CoefficientField, points) -> float:
    """min λ_min(A(x)) / (1 + ‖A(x)‖) over points; 負なら正定値性の破れ"""
    a = field.diffusion(np.atleast_2d(points))
    eig = np.linalg.eigvalsh(a)
    scale = 1.0 + np.linalg.norm(a, ord=2, axis=(1, 2))
    return float(np.min(eig[:, 0] / scale))


# ==========================================
# 🧱 パラメータ読み取り
# ==========================================


def _real(p, name, default=None, *, minimum=None, strict=False):
    if name not in p:
        if default is None:
            raise InvalidParameterError(name, "required parameter is missing")
        return float(default)
    try:
        value = float(p[name])
    except (TypeError, ValueError):
        raise InvalidParameterError(name, f"expected a real number, got {p[name]!r}")
    if not math.isfinite(value):
        raise InvalidParameterError(name, "must be finite")
    if minimum is not None:
        if strict and value <= minimum:
            raise InvalidParameterError(name, f"must be > {minimum}, got {value}")
        if not strict and value < minimum:
            raise InvalidParameterError(name, f"must be >= {minimum}, got {value}")
    return value


def _reject_unknown(p, allowed):
    for key in p:
        if key not in allowed:
            raise InvalidParameterError(key, "unknown parameter for this family")


def _identity_stack(scale, d):
    return scale[:, None, None] * np.eye(d)


# ==========================================
# 🧪 組み込みの族
# ==========================================


def _build_power_law(d, d1, p, params):
    """Σ(x) = |x|^{α/2} I, b(x) = -|x|^α x"""
    _reject_unknown(p, {"alpha"})
    alpha = _real(p, "alpha")

    def sigma(pts):
        r = np.linalg.norm(pts, axis=1)
        return _identity_stack(r ** (alpha / 2.0), d)

    def drift(pts):
        r = np.linalg.norm(pts, axis=1)
        return -(r**alpha)[:, None] * pts

    return CoefficientField(d, d, sigma, drift, f"power_law(d={d}, alpha={alpha:g})", params=params)


def _build_ornstein_uhlenbeck(d, d1, p, params):
    _reject_unknown(p, {"lambda", "sigma0"})
    lam = _real(p, "lambda", minimum=0.0, strict=True)
    sigma0 = _real(p, "sigma0", minimum=0.0)

    def sigma(pts):
        return np.broadcast_to(sigma0 * np.eye(d), (len(pts), d, d)).copy()

    def drift(pts):
        return -lam * pts

    return CoefficientField(
        d, d, sigma, drift, f"ornstein_uhlenbeck(d={d}, lambda={lam:g}, sigma0={sigma0:g})", params=params
    )


def _build_diagonal_map(d, d1, p, params):
    """Σ = diag(f¹..f^d), f^k(x) = c x_k + β tanh(x_k); b = -κx"""
    _reject_unknown(p, {"slope", "bend", "drift_rate"})
    slope = _real(p, "slope", minimum=0.0, strict=True)
    bend = _real(p, "bend", 0.0, minimum=0.0)
    kappa = _real(p, "drift_rate", 0.0, minimum=0.0)

    def sigma(pts):
        diag = slope * pts + bend * np.tanh(pts)
        out = np.zeros((len(pts), d, d))
        idx = np.arange(d)
        out[:, idx, idx] = diag
        return out

    def drift(pts):
        return -kappa * pts

    return CoefficientField(
        d, d, sigma, drift, f"diagonal_map(d={d}, slope={slope:g}, bend={bend:g}, drift_rate={kappa:g})", params=params
    )


def _build_tanh_1d(d, d1, p, params):
    # Σ = tanh(x), b = 0 : 有界かつ単射な σ
    _reject_unknown(p, set())
    if d != 1:
        raise InvalidParameterError("d", "tanh_1d is one-dimensional")

    def sigma(pts):
        return np.tanh(pts).reshape(len(pts), 1, 1)

    def drift(pts):
        return np.zeros_like(pts)

    return CoefficientField(1, 1, sigma, drift, "tanh_1d", params=params)


def _build_constant(d, d1, p, params):
    _reject_unknown(p, {"sigma", "drift"})
    if "sigma" not in p:
        raise InvalidParameterError("sigma", "required parameter is missing")
    sig = np.atleast_2d(np.asarray(p["sigma"], dtype=float))
    if sig.shape[0] != d:
        raise InvalidParameterError("sigma", f"expected {d} rows, got shape {sig.shape}")
    if d1 is not None and sig.shape[1] != d1:
        raise InvalidParameterError("sigma", f"expected {d1} columns, got shape {sig.shape}")
    drift_vec = np.asarray(p.get("drift", np.zeros(d)), dtype=float).reshape(-1)
    if drift_vec.shape != (d,):
        raise InvalidParameterError("drift", f"expected length {d}, got {drift_vec.shape}")
    if not (np.isfinite(sig).all() and np.isfinite(drift_vec).all()):
        raise InvalidParameterError("sigma", "constant coefficients must be finite")
    k = sig.shape[1]

    def sigma(pts):
        return np.broadcast_to(sig, (len(pts), d, k)).copy()

    def drift(pts):
        return np.broadcast_to(drift_vec, (len(pts), d)).copy()

    return CoefficientField(d, k, sigma, drift, f"constant(d={d}, d1={k})", params=params)


def _build_isotropic(d, d1, p, params):
    """Σ(x) = s|x|^p I, b(x) = -κx (σ(x)=|x| のとき example4 の基準が使える族)"""
    _reject_unknown(p, {"scale", "exponent", "drift_rate"})
    scale = _real(p, "scale", 1.0, minimum=0.0)
    exponent = _real(p, "exponent", 1.0, minimum=0.0)
    kappa = _real(p, "drift_rate", 0.0, minimum=0.0)

    def sigma(pts):
        r = np.linalg.norm(pts, axis=1)
        return _identity_stack(scale * r**exponent, d)

    def drift(pts):
        return -kappa * pts

    return CoefficientField(
        d, d, sigma, drift, f"isotropic(d={d}, scale={scale:g}, exponent={exponent:g}, drift_rate={kappa:g})",
        params=params,
    )


def _build_tabulated(d, d1, p, params):
    _reject_unknown(p, {"path"})
    if "path" not in p:
        raise InvalidParameterError("path", "tabulated fields need a CSV path")
    f = load_tabulated(p["path"])
    if f.d != d:
        raise InvalidParameterError("d", f"table has d={f.d}, config says d={d}")
    f.params = params
    return f


_BUILDERS = {
    "power_law": _build_power_law,
    "ornstein_uhlenbeck": _build_ornstein_uhlenbeck,
    "diagonal_map": _build_diagonal_map,
    "tanh_1d": _build_tanh_1d,
    "constant": _build_constant,
    "tabulated": _build_tabulated,
    "isotropic": _build_isotropic,
}


def make_builtin(params: FieldParams) -> CoefficientField:
    builder = _BUILDERS.get(params.family)
    if builder is None:
        raise InvalidParameterError("family", f"unknown family {params.family!r}; expected one of {FAMILIES}")
    if int(params.d) < 1:
        raise InvalidParameterError("d", f"must be >= 1, got {params.d}")
    field_ = builder(int(params.d), params.d1, dict(params.parameters), params)
    logger.debug("built coefficient field %s", field_.label)
    return field_


# ==========================================
# 📊 格子上の係数 (表データ・正則化係数)
# ==========================================


def grid_field(axes, sigma_grid, drift_grid, label, diffusion_grid=None):
    """
    格子点上の値から多重線形補間の係数場を作る。格子外は境界値に固定 (clamp)。
    sigma_grid: (*shape, d, d1), drift_grid: (*shape, d), diffusion_grid: (*shape, d, d)
    """
    axes = [np.asarray(a, dtype=float) for a in axes]
    d = len(axes)
    for k, a in enumerate(axes):
        if len(a) < 2 or np.any(np.diff(a) <= 0):
            raise InvalidParameterError(f"x{k + 1}", "grid axes need >= 2 strictly increasing nodes")
    shape = tuple(len(a) for a in axes)
    sigma_grid = np.asarray(sigma_grid, dtype=float)
    d1 = sigma_grid.shape[-1]
    lower = np.array([a[0] for a in axes])
    upper = np.array([a[-1] for a in axes])

    def interpolator(values, tail):
        flat = values.reshape(shape + (-1,))
        rgi = RegularGridInterpolator(axes, flat, method="linear")

        def evaluate(pts):
            clamped = np.clip(pts, lower, upper)
            return rgi(clamped).reshape((len(pts),) + tail)

        return evaluate

    sigma_eval = interpolator(sigma_grid, (d, d1))
    drift_eval = interpolator(np.asarray(drift_grid, dtype=float), (d,))
    diffusion_eval = None
    if diffusion_grid is not None:
        diffusion_eval = interpolator(np.asarray(diffusion_grid, dtype=float), (d, d))
    return CoefficientField(d, d1, sigma_eval, drift_eval, label, diffusion_eval=diffusion_eval)


def _coordinate_columns(columns):
    found = [(int(m.group(1)), c) for c in columns if (m := re.fullmatch(r"x(\d+)", c))]
    return [c for _, c in sorted(found)]


def load_tabulated(path) -> CoefficientField:
    """
    CSV (x1..xd, sigma_1_1..sigma_d_d1, b_1..b_d) を読み、テンソル格子として補間する。
    """
    path = Path(path)
    if not path.exists():
        raise InvalidParameterError("path", f"file not found: {path}")
    df = pd.read_csv(path)
    xcols = _coordinate_columns(df.columns)
    d = len(xcols)
    if d == 0:
        raise InvalidParameterError("path", "no coordinate columns x1..xd in table")
    sigma_cols = [c for c in df.columns if c.startswith("sigma_")]
    if len(sigma_cols) == 0 or len(sigma_cols) % d:
        raise InvalidParameterError("path", f"expected d*d1 sigma columns, found {len(sigma_cols)}")
    d1 = len(sigma_cols) // d
    sigma_names = [f"sigma_{i}_{j}" for i in range(1, d + 1) for j in range(1, d1 + 1)]
    drift_names = [f"b_{i}" for i in range(1, d + 1)]
    missing = [c for c in sigma_names + drift_names if c not in df.columns]
    if missing:
        raise InvalidParameterError("path", f"missing columns {missing}")

    df = df.sort_values(xcols, kind="mergesort").reset_index(drop=True)
    axes = [np.unique(df[c].to_numpy(dtype=float)) for c in xcols]
    shape = tuple(len(a) for a in axes)
    if int(np.prod(shape)) != len(df):
        raise InvalidParameterError("path", f"{len(df)} rows do not form a full {shape} tensor grid")

    sigma_grid = df[sigma_names].to_numpy(dtype=float).reshape(shape + (d, d1))
    drift_grid = df[drift_names].to_numpy(dtype=float).reshape(shape + (d,))
    if not (np.isfinite(sigma_grid).all() and np.isfinite(drift_grid).all()):
        raise InvalidParameterError("path", "table contains non-finite values")
    logger.info("loaded tabulated field %s on grid %s", path.name, shape)
    return grid_field(axes, sigma_grid, drift_grid, f"tabulated({path.name})")
