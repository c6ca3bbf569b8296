"""
確率測度の表現 (格子密度・重み付き点群・解析密度・Dirac 測度・カップリング) と
共通の積分インターフェース integrate(measure, f)。

試験関数は「台の箱」(と分かる場合は台の球) を必ず宣言する。
格子・求積はその台に制限して行う。
"""

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np
import pandas as pd
from scipy import integrate as sp_integrate

from .conf import get_setting
from .exceptions import (
    InvalidParameterError,
    ToleranceError,
    UnsupportedDimensionError,
)

logger = logging.getLogger(__name__)


# ==========================================
# 📦 箱と被積分関数
# ==========================================


@dataclass(frozen=True)
class Box:
    """軸に平行な閉直方体 [lower, upper]"""

    lower: tuple
    upper: tuple

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float).reshape(-1)
        hi = np.asarray(self.upper, dtype=float).reshape(-1)
        if lo.shape != hi.shape or lo.size == 0:
            raise InvalidParameterError("box", "lower and upper must have the same positive length")
        if not (np.isfinite(lo).all() and np.isfinite(hi).all()):
            raise InvalidParameterError("box", "support box must be finite")
        if np.any(hi < lo):
            raise InvalidParameterError("box", f"empty box {lo.tolist()} .. {hi.tolist()}")
        object.__setattr__(self, "lower", tuple(lo.tolist()))
        object.__setattr__(self, "upper", tuple(hi.tolist()))

    @classmethod
    def cube(cls, center, half_width):
        c = np.asarray(center, dtype=float).reshape(-1)
        return cls(tuple(c - half_width), tuple(c + half_width))

    @classmethod
    def symmetric(cls, dim, half_width):
        return cls.cube(np.zeros(dim), half_width)

    @property
    def dim(self):
        return len(self.lower)

    @property
    def lo(self):
        return np.asarray(self.lower)

    @property
    def hi(self):
        return np.asarray(self.upper)

    @property
    def widths(self):
        return self.hi - self.lo

    @property
    def volume(self):
        return float(np.prod(self.widths))

    @property
    def center(self):
        return 0.5 * (self.lo + self.hi)

    def contains(self, pts):
        pts = np.atleast_2d(pts)
        return np.all((pts >= self.lo) & (pts <= self.hi), axis=1)

    def intersect(self, other: "Box") -> Optional["Box"]:
        lo = np.maximum(self.lo, other.lo)
        hi = np.minimum(self.hi, other.hi)
        if np.any(hi < lo):
            return None
        return Box(tuple(lo), tuple(hi))

    def hull(self, other: "Box") -> "Box":
        return Box(tuple(np.minimum(self.lo, other.lo)), tuple(np.maximum(self.hi, other.hi)))

    def dilate(self, amount):
        return Box(tuple(self.lo - amount), tuple(self.hi + amount))

    def split(self, d):
        return Box(self.lower[:d], self.upper[:d]), Box(self.lower[d:], self.upper[d:])

    def product(self, other: "Box") -> "Box":
        return Box(self.lower + other.lower, self.upper + other.upper)

    def to_dict(self):
        return {"lower": list(self.lower), "upper": list(self.upper)}


@dataclass(frozen=True)
class Integrand:
    """
    台 (box, 任意で ball) の外では 0 とみなす関数。
    ball = (center, radius) があれば解析密度の極座標求積に使う。
    """

    func: Callable[[np.ndarray], np.ndarray]
    box: Box
    ball: Optional[tuple] = None

    @property
    def dim(self):
        return self.box.dim

    def mask(self, pts):
        inside = self.box.contains(pts)
        if self.ball is not None:
            center, radius = self.ball
            inside &= np.sum((pts - np.asarray(center)) ** 2, axis=1) <= radius * radius
        return inside

    def evaluate(self, pts, chunk=None):
        pts = np.atleast_2d(pts)
        out = np.zeros(len(pts))
        inside = self.mask(pts)
        idx = np.flatnonzero(inside)
        if idx.size == 0:
            return out
        chunk = chunk or get_setting("quadrature_chunk")
        for start in range(0, idx.size, chunk):
            sel = idx[start : start + chunk]
            out[sel] = np.asarray(self.func(pts[sel]), dtype=float).reshape(-1)
        return out


def as_integrand(f) -> Integrand:
    if isinstance(f, Integrand):
        return f
    if hasattr(f, "as_integrand"):
        return f.as_integrand()
    raise InvalidParameterError("f", "integrand must declare a compact support box")


@dataclass(frozen=True)
class QuadratureResult:
    value: float
    error: float = 0.0
    level: int = 0


def _weighted_sum(values, weights):
    # 0 * inf を避ける (f = 0 の点は寄与 0)
    prod = np.where(values == 0.0, 0.0, values * weights)
    return float(np.sum(prod)), float(np.sum(np.abs(prod)))


def _converged(value, prev, abs_value):
    rtol = get_setting("quadrature_rtol")
    atol = get_setting("quadrature_atol")
    return abs(value - prev) <= max(rtol * abs(value), atol * abs_value)


# ==========================================
# 🧮 測度の共通インターフェース
# ==========================================


class Measure:
    """確率測度の基底クラス。構築後は不変。"""

    discrete = True

    @property
    def dim(self):
        raise NotImplementedError

    def integrate(self, f) -> QuadratureResult:
        raise NotImplementedError

    def nodes(self, box: Box, level: int = 0):
        """box 内の求積点と重み (カップリングのテンソル積に使う)"""
        raise NotImplementedError

    def support_box(self) -> Optional[Box]:
        return None

    def to_config(self):
        raise NotImplementedError

    def _fingerprint_arrays(self):
        return []

    def fingerprint(self):
        h = hashlib.sha256()
        h.update(json.dumps(self.to_config(), sort_keys=True).encode())
        for arr in self._fingerprint_arrays():
            h.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        return h.hexdigest()


@dataclass(frozen=True, eq=False)
class GridDensity(Measure):
    """
    セル中心の密度値を持つ格子密度。
    values.shape == resolution, Σ values·cell_volume = 1 (1e-9 以内)。
    notes にはソルバーの診断文、diagnostics には数値の診断 (切り詰めたセル数など) を残す。
    """

    box: Box
    values: np.ndarray
    notes: tuple = field(default=())
    diagnostics: dict = field(default_factory=dict)

    kind = "grid"

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != self.box.dim:
            raise InvalidParameterError("values", f"expected {self.box.dim}-dimensional array")
        if np.any(values < 0) or not np.isfinite(values).all():
            raise InvalidParameterError("values", "grid density values must be finite and >= 0")
        if np.any(self.box.widths <= 0):
            raise InvalidParameterError("box", "grid box must have positive widths")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        mass = float(values.sum() * self.cell_volume)
        if abs(mass - 1.0) > 1e-9:
            raise InvalidParameterError("values", f"grid density has mass {mass:.12g}, expected 1")

    @classmethod
    def from_values(cls, box, values, notes=(), diagnostics=None):
        """非負値 (微小な負の丸め誤差は 0 に) を正規化して密度にする"""
        values = np.asarray(values, dtype=float)
        peak = float(np.max(np.abs(values))) if values.size else 0.0
        if np.any(values < -1e-12 * max(peak, 1e-300)):
            raise InvalidParameterError("values", "grid density values must be nonnegative")
        values = np.clip(values, 0.0, None)
        cell_volume = float(np.prod(box.widths / np.asarray(values.shape)))
        mass = values.sum() * cell_volume
        if not mass > 0:
            raise InvalidParameterError("values", "grid values have zero mass")
        return cls(box, values / mass, tuple(notes), dict(diagnostics or {}))

    @property
    def dim(self):
        return self.box.dim

    @property
    def resolution(self):
        return tuple(self.values.shape)

    @property
    def spacing(self):
        return self.box.widths / np.asarray(self.resolution)

    @property
    def cell_volume(self):
        return float(np.prod(self.box.widths / np.asarray(self.values.shape)))

    @property
    def axes(self):
        h = self.spacing
        return [self.box.lo[k] + (np.arange(n) + 0.5) * h[k] for k, n in enumerate(self.resolution)]

    def centers(self):
        grids = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)

    def support_box(self):
        return self.box

    def integrate(self, f) -> QuadratureResult:
        # 中点則 (supp f に制限)
        integrand = as_integrand(f)
        pts = self.centers()
        weights = self.values.ravel() * self.cell_volume
        values = integrand.evaluate(pts)
        value, _ = _weighted_sum(values, weights)
        return QuadratureResult(value, 0.0, 0)

    def nodes(self, box, level=0):
        pts = self.centers()
        keep = box.contains(pts)
        return pts[keep], (self.values.ravel() * self.cell_volume)[keep]

    def marginal(self, keep_axes):
        keep_axes = tuple(keep_axes)
        drop = tuple(k for k in range(self.dim) if k not in keep_axes)
        h = self.spacing
        values = self.values.sum(axis=drop) * float(np.prod(h[list(drop)]))
        box = Box(tuple(self.box.lo[list(keep_axes)]), tuple(self.box.hi[list(keep_axes)]))
        return GridDensity.from_values(box, values, self.notes)

    def to_config(self):
        return {"kind": "grid", "box": self.box.to_dict(), "resolution": list(self.resolution)}

    def _fingerprint_arrays(self):
        return [self.values]

    def to_frame(self):
        idx = np.stack(
            [g.ravel() for g in np.meshgrid(*[np.arange(n) for n in self.resolution], indexing="ij")], axis=1
        )
        data = {f"i{k + 1}": idx[:, k] for k in range(self.dim)}
        pts = self.centers()
        data.update({f"x{k + 1}": pts[:, k] for k in range(self.dim)})
        data["value"] = self.values.ravel()
        return pd.DataFrame(data)

    def to_csv(self, path):
        self.to_frame().to_csv(path, index=False, float_format="%.17g")

    @classmethod
    def from_csv(cls, path):
        df = pd.read_csv(path)
        icols = sorted([c for c in df.columns if c.startswith("i") and c[1:].isdigit()], key=lambda c: int(c[1:]))
        d = len(icols)
        if d == 0:
            raise InvalidParameterError("path", "grid CSV needs cell index columns i1..id")
        resolution = tuple(int(df[c].max()) + 1 for c in icols)
        if any(n < 2 for n in resolution):
            raise InvalidParameterError("path", "grid CSV needs >= 2 cells per axis")
        df = df.sort_values(icols, kind="mergesort")
        lower, upper = [], []
        for k in range(d):
            xs = np.unique(df[f"x{k + 1}"].to_numpy(dtype=float))
            h = (xs[-1] - xs[0]) / (resolution[k] - 1)
            lower.append(xs[0] - 0.5 * h)
            upper.append(xs[-1] + 0.5 * h)
        values = df["value"].to_numpy(dtype=float).reshape(resolution)
        return cls.from_values(Box(tuple(lower), tuple(upper)), values)


@dataclass(frozen=True, eq=False)
class EmpiricalMeasure(Measure):
    """重み付き点群 (重みの和は 1e-12 以内で 1)"""

    points: np.ndarray
    weights: np.ndarray

    kind = "empirical"

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if len(pts) < 1 or len(pts) != len(w):
            raise InvalidParameterError("points", "need N >= 1 points with one weight each")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise InvalidParameterError("weights", f"weights must be >= 0 and sum to 1 (sum={w.sum():.15g})")
        pts.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return cls(pts, np.full(len(pts), 1.0 / len(pts)))

    @property
    def dim(self):
        return self.points.shape[1]

    def support_box(self):
        return Box(tuple(self.points.min(axis=0)), tuple(self.points.max(axis=0)))

    def integrate(self, f):
        values = as_integrand(f).evaluate(self.points)
        value, _ = _weighted_sum(values, self.weights)
        return QuadratureResult(value)

    def nodes(self, box, level=0):
        keep = box.contains(self.points)
        return self.points[keep], self.weights[keep]

    def mean(self):
        return self.weights @ self.points

    def covariance(self):
        centered = self.points - self.mean()
        return (centered * self.weights[:, None]).T @ centered

    def to_config(self):
        return {"kind": "empirical", "size": int(len(self.points)), "dim": self.dim}

    def _fingerprint_arrays(self):
        return [self.points, self.weights]

    def to_csv(self, path):
        data = {f"x{k + 1}": self.points[:, k] for k in range(self.dim)}
        data["weight"] = self.weights
        pd.DataFrame(data).to_csv(path, index=False, float_format="%.17g")

    @classmethod
    def from_csv(cls, path):
        df = pd.read_csv(path)
        xcols = sorted([c for c in df.columns if c.startswith("x") and c[1:].isdigit()], key=lambda c: int(c[1:]))
        if not xcols or "weight" not in df.columns:
            raise InvalidParameterError("path", "empirical CSV needs x1..xd and weight columns")
        w = df["weight"].to_numpy(dtype=float)
        # CSV の丸めで和がずれる分だけ正規化し直す
        return cls(df[xcols].to_numpy(dtype=float), w / w.sum())


@dataclass(frozen=True, eq=False)
class DiracMeasure(Measure):
    atom: np.ndarray

    kind = "dirac"

    def __post_init__(self):
        atom = np.asarray(self.atom, dtype=float).reshape(-1)
        if not np.isfinite(atom).all():
            raise InvalidParameterError("atom", "Dirac atom must be finite")
        atom.setflags(write=False)
        object.__setattr__(self, "atom", atom)

    @property
    def dim(self):
        return self.atom.size

    def support_box(self):
        return Box(tuple(self.atom), tuple(self.atom))

    def integrate(self, f):
        value = as_integrand(f).evaluate(self.atom.reshape(1, -1))[0]
        return QuadratureResult(float(value))

    def nodes(self, box, level=0):
        pts = self.atom.reshape(1, -1)
        keep = box.contains(pts)
        return pts[keep], np.ones(int(keep.sum()))

    def to_config(self):
        return {"kind": "dirac", "atom": self.atom.tolist()}


# ==========================================
# 📐 解析密度 (Gauss, 冪乗則場の動径密度)
# ==========================================


def _gl_unit(n):
    # [0, 1] 上の Gauss-Legendre
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def _sphere_directions(d, m):
    """単位球面上の方向と重み (d=2: 台形則, d=3: cosθ の GL × φ の台形則)"""
    if d == 2:
        phi = 2.0 * np.pi * np.arange(m) / m
        return np.stack([np.cos(phi), np.sin(phi)], axis=1), np.full(m, 2.0 * np.pi / m)
    if d == 3:
        u, wu = np.polynomial.legendre.leggauss(m)
        k = 2 * m
        phi = 2.0 * np.pi * np.arange(k) / k
        s = np.sqrt(1.0 - u**2)
        dirs = np.stack(
            [np.outer(s, np.cos(phi)).ravel(), np.outer(s, np.sin(phi)).ravel(), np.repeat(u, k)], axis=1
        )
        return dirs, np.repeat(wu, k) * (2.0 * np.pi / k)
    raise UnsupportedDimensionError(f"spherical rule implemented for d in (2, 3), got {d}")


@dataclass(frozen=True, eq=False)
class AnalyticDensity(Measure):
    """
    解析的な確率密度。
    kind = "gaussian": mean, covariance
    kind = "example1_radial": C|x|^{-2} e^{-|x|²/2} (d=3)
    """

    kind: str
    d: int
    mean: Optional[np.ndarray] = None
    covariance: Optional[np.ndarray] = None
    normalizer: float = 1.0

    discrete = False

    def __post_init__(self):
        if self.kind not in ("gaussian", "example1_radial"):
            raise InvalidParameterError("kind", f"unknown analytic density {self.kind!r}")
        if self.kind == "gaussian":
            mean = np.asarray(self.mean, dtype=float).reshape(self.d)
            cov = np.atleast_2d(np.asarray(self.covariance, dtype=float)).reshape(self.d, self.d)
            if not np.allclose(cov, cov.T, rtol=0, atol=1e-12):
                raise InvalidParameterError("covariance", "covariance must be symmetric")
            try:
                chol = np.linalg.cholesky(cov)
            except np.linalg.LinAlgError:
                raise InvalidParameterError("covariance", "covariance must be positive definite")
            object.__setattr__(self, "mean", mean)
            object.__setattr__(self, "covariance", cov)
            object.__setattr__(self, "_chol", chol)
            log_det = 2.0 * float(np.sum(np.log(np.diag(chol))))
            norm = math.exp(-0.5 * (self.d * math.log(2.0 * math.pi) + log_det))
            object.__setattr__(self, "normalizer", norm)

    @property
    def dim(self):
        return self.d

    @property
    def singular_point(self):
        return np.zeros(self.d) if self.kind == "example1_radial" else None

    def density(self, pts):
        pts = np.atleast_2d(pts)
        if self.kind == "gaussian":
            z = np.linalg.solve(self._chol, (pts - self.mean).T)
            return self.normalizer * np.exp(-0.5 * np.sum(z * z, axis=0))
        r2 = np.sum(pts * pts, axis=1)
        with np.errstate(divide="ignore"):
            return self.normalizer * np.exp(-0.5 * r2) / r2

    def scale(self):
        """密度の広がりの目安 (求積区間の打ち切りに使う)"""
        if self.kind == "gaussian":
            return float(np.sqrt(np.max(np.diag(self.covariance))))
        return 1.0

    def effective_box(self, tail=40.0):
        if self.kind == "gaussian":
            return Box.cube(self.mean, tail * self.scale())
        return Box.symmetric(self.d, tail)

    # ---- 求積 ----

    def integrate(self, f):
        integrand = as_integrand(f)
        if self.d == 1:
            return self._integrate_1d(integrand)
        if integrand.ball is not None and self.d in (2, 3):
            return self._refine(lambda level: self._ball_rule(integrand, level))
        return self._refine(lambda level: self._box_rule(integrand, level))

    def _integrate_1d(self, integrand):
        box = integrand.box
        if integrand.ball is not None:
            center, radius = integrand.ball
            c = float(np.asarray(center).reshape(-1)[0])
            box = box.intersect(Box((c - radius,), (c + radius,)))
        if box is not None:
            box = box.intersect(self.effective_box())
        if box is None or box.widths[0] == 0:
            return QuadratureResult(0.0)
        a, b = box.lower[0], box.upper[0]

        def g(t):
            x = np.array([[t]])
            value = integrand.evaluate(x)[0]
            return 0.0 if value == 0.0 else value * float(self.density(x)[0])

        rtol = get_setting("quadrature_rtol")
        atol = get_setting("quadrature_atol")
        abs_value, _ = sp_integrate.quad(lambda t: abs(g(t)), a, b, limit=400, epsrel=rtol)
        value, err = sp_integrate.quad(g, a, b, limit=400, epsrel=rtol, epsabs=atol * abs_value)
        if err > max(rtol * abs(value), atol * abs_value, 1e-14):
            raise ToleranceError("1D adaptive quadrature did not converge", estimate=value, error=err)
        return QuadratureResult(float(value), float(err), 0)

    def _refine(self, rule):
        base_max = get_setting("quadrature_max_level")
        prev = None
        value = 0.0
        for level in range(base_max + 1):
            value, abs_value = rule(level)
            if prev is not None and _converged(value, prev, abs_value):
                return QuadratureResult(value, abs(value - prev), level)
            prev = value
        raise ToleranceError("adaptive quadrature did not converge", estimate=value, error=abs(value - prev))

    def _ball_rule(self, integrand, level):
        """
        台の球上の極座標求積。
        特異点が球の内部にあれば特異点を極に、そうでなければ球の中心を極にとる。
        各方向の半径は球面との交点まで (方向について滑らか)。
        """
        n = get_setting("quadrature_base_nodes") * 2**level
        center, radius = integrand.ball
        center = np.asarray(center, dtype=float).reshape(-1)
        pole = center
        sing = self.singular_point
        if sing is not None and np.linalg.norm(sing - center) < radius:
            pole = sing
        dirs, dir_w = _sphere_directions(self.d, n)
        offset = center - pole
        s = dirs @ offset
        disc = s * s - offset @ offset + radius * radius
        r_hi = s + np.sqrt(np.clip(disc, 0.0, None))
        t, tw = _gl_unit(n)
        r = np.outer(r_hi, t)  # (dirs, radial)
        w = np.outer(dir_w * r_hi, tw) * r ** (self.d - 1)
        pts = pole + r[..., None] * dirs[:, None, :]
        pts = pts.reshape(-1, self.d)
        values = integrand.evaluate(pts)
        weights = w.ravel() * self.density(pts)
        return _weighted_sum(values, weights)

    def _box_rule(self, integrand, level):
        box = integrand.box.intersect(self.effective_box())
        if box is None:
            return 0.0, 0.0
        pts, w = _tensor_gl(box, get_setting("quadrature_base_nodes") * 2**level)
        values = integrand.evaluate(pts)
        return _weighted_sum(values, w * self.density(pts))

    def nodes(self, box, level=0):
        box = box.intersect(self.effective_box())
        if box is None:
            return np.zeros((0, self.d)), np.zeros(0)
        pts, w = _tensor_gl(box, 2 * get_setting("quadrature_base_nodes") * 2**level)
        return pts, w * self.density(pts)

    def to_config(self):
        if self.kind == "gaussian":
            return {"kind": "gaussian", "mean": self.mean.tolist(), "covariance": self.covariance.tolist()}
        return {"kind": "example1_radial", "d": self.d}


def _tensor_gl(box, n):
    x, w = _gl_unit(n)
    axes = [box.lo[k] + box.widths[k] * x for k in range(box.dim)]
    weights = [box.widths[k] * w for k in range(box.dim)]
    grids = np.meshgrid(*axes, indexing="ij")
    wgrids = np.meshgrid(*weights, indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    wt = np.prod(np.stack([g.ravel() for g in wgrids], axis=1), axis=1)
    return pts, wt


def gaussian(mean, covariance) -> AnalyticDensity:
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    return AnalyticDensity("gaussian", mean.size, mean=mean, covariance=covariance)


def example1_density(d: int = 3) -> AnalyticDensity:
    """
    【冪乗則場 (d=3, α=2) の定常密度】 C|x|^{-2} e^{-|x|²/2}
    4πC ∫₀^∞ e^{-r²/2} dr = 1 から C を動径求積で求める。
    """
    if d != 3:
        raise UnsupportedDimensionError(f"example1_radial is only defined for d=3, got d={d}")
    radial, _ = sp_integrate.quad(lambda r: math.exp(-0.5 * r * r), 0.0, math.inf, epsabs=1e-14, epsrel=1e-13)
    normalizer = 1.0 / (4.0 * math.pi * radial)
    return AnalyticDensity("example1_radial", 3, normalizer=normalizer)


def integrate(measure, f) -> float:
    """∫ f dμ (求積が収束しなければ ToleranceError)"""
    return measure.integrate(f).value


# ==========================================
# 🔗 カップリング (ℝ^d × ℝ^d 上の測度)
# ==========================================


@dataclass(frozen=True, eq=False)
class CouplingMeasure(Measure):
    """
    kind = "product": first ⊗ second
    kind = "diagonal": x ↦ (x, x) による first の押し出し
    kind = "grid2d": ℝ^{2d} 上の格子密度
    """

    kind: str
    first: Optional[Measure] = None
    second: Optional[Measure] = None
    grid: Optional[GridDensity] = None

    def __post_init__(self):
        if self.kind == "product":
            if self.first is None or self.second is None or self.first.dim != self.second.dim:
                raise InvalidParameterError("coupling", "product coupling needs two factors of equal dimension")
        elif self.kind == "diagonal":
            if self.first is None:
                raise InvalidParameterError("coupling", "diagonal coupling needs one measure")
        elif self.kind == "grid2d":
            if self.grid is None or self.grid.dim % 2:
                raise InvalidParameterError("coupling", "grid2d coupling needs a grid of even dimension")
        else:
            raise InvalidParameterError("kind", f"unknown coupling kind {self.kind!r}")

    @classmethod
    def product(cls, mu, nu):
        return cls("product", first=mu, second=nu)

    @classmethod
    def diagonal(cls, mu):
        return cls("diagonal", first=mu)

    @classmethod
    def grid2d(cls, grid, first=None, second=None, tol=1e-8):
        coupling = cls("grid2d", grid=grid)
        for axis, declared in (("first", first), ("second", second)):
            if declared is None:
                continue
            marginal = coupling.project(axis)
            defect = float(np.max(np.abs(marginal.values - declared.values)) * declared.cell_volume)
            if defect > tol:
                raise InvalidParameterError(axis, f"projection differs from declared marginal by {defect:.3e}")
        return coupling

    @property
    def factor_dim(self):
        if self.kind == "grid2d":
            return self.grid.dim // 2
        return self.first.dim

    @property
    def dim(self):
        return 2 * self.factor_dim

    @property
    def discrete(self):
        if self.kind == "grid2d":
            return True
        parts = [self.first] + ([self.second] if self.kind == "product" else [])
        return all(p.discrete for p in parts)

    def project(self, axis):
        if axis not in ("first", "second"):
            raise InvalidParameterError("axis", "expected 'first' or 'second'")
        if self.kind == "product":
            return self.first if axis == "first" else self.second
        if self.kind == "diagonal":
            return self.first
        d = self.factor_dim
        keep = range(0, d) if axis == "first" else range(d, 2 * d)
        return self.grid.marginal(keep)

    def integrate(self, f):
        integrand = as_integrand(f)
        if self.kind == "grid2d":
            return self.grid.integrate(integrand)
        if self.kind == "diagonal":
            return self.first.integrate(self._diagonal_integrand(integrand))
        return self._integrate_product(integrand)

    def _diagonal_integrand(self, integrand):
        d = self.factor_dim
        bx, by = integrand.box.split(d)
        box = bx.intersect(by)
        if box is None:
            box = Box(bx.lower, bx.lower)

        def g(pts):
            return integrand.evaluate(np.concatenate([pts, pts], axis=1))

        return Integrand(g, box)

    def _integrate_product(self, integrand):
        d = self.factor_dim
        bx, by = integrand.box.split(d)
        max_level = 0 if self.discrete else get_setting("quadrature_max_level")
        prev = None
        value = 0.0
        for level in range(max_level + 1):
            px, wx = self.first.nodes(bx, level)
            py, wy = self.second.nodes(by, level)
            value, abs_value = 0.0, 0.0
            rows = max(1, get_setting("quadrature_chunk") // max(1, len(py)))
            for start in range(0, len(px), rows):
                xs = px[start : start + rows]
                z = np.concatenate([np.repeat(xs, len(py), axis=0), np.tile(py, (len(xs), 1))], axis=1)
                w = np.outer(wx[start : start + rows], wy).ravel()
                v, a = _weighted_sum(integrand.evaluate(z), w)
                value += v
                abs_value += a
            if self.discrete:
                return QuadratureResult(value)
            if prev is not None and _converged(value, prev, abs_value):
                return QuadratureResult(value, abs(value - prev), level)
            prev = value
        raise ToleranceError("product quadrature did not converge", estimate=value, error=abs(value - prev))

    def to_config(self):
        if self.kind == "grid2d":
            return {"kind": "grid2d", "grid": self.grid.to_config()}
        out = {"kind": self.kind, "first": self.first.to_config()}
        if self.second is not None:
            out["second"] = self.second.to_config()
        return out


def project(coupling: CouplingMeasure, axis: str) -> Measure:
    return coupling.project(axis)


# ==========================================
# ⚙️ 設定からの構築
# ==========================================


def measure_from_config(spec: dict, base_dir: Optional[Path] = None) -> Measure:
    """{"kind": "gaussian", ...} 形式の設定から測度を作る"""
    kind = spec.get("kind")
    if kind == "gaussian":
        mean = np.atleast_1d(np.asarray(spec.get("mean", [0.0]), dtype=float))
        cov = spec.get("covariance")
        if cov is None:
            var = float(spec.get("variance", 1.0))
            cov = var * np.eye(mean.size)
        return gaussian(mean, cov)
    if kind == "example1_radial":
        return example1_density(int(spec.get("d", 3)))
    if kind == "dirac":
        return DiracMeasure(np.asarray(spec["atom"], dtype=float))
    if kind in ("grid", "empirical"):
        path = Path(spec["path"])
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        if not path.exists():
            raise InvalidParameterError("path", f"file not found: {path}")
        return GridDensity.from_csv(path) if kind == "grid" else EmpiricalMeasure.from_csv(path)
    if kind in ("product", "diagonal"):
        first = measure_from_config(spec["first"], base_dir)
        if kind == "diagonal":
            return CouplingMeasure.diagonal(first)
        return CouplingMeasure.product(first, measure_from_config(spec["second"], base_dir))
    raise InvalidParameterError("kind", f"unknown measure kind {kind!r}")
