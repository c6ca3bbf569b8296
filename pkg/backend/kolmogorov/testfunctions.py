"""
弱形式で使う試験関数。値・勾配・ヘッセ行列を解析的に返す。
コンパクト台を持つものは support_box() (と support_ball()) を宣言する。
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .exceptions import InvalidParameterError
from .measures import Box, Integrand

# e^(2j) - 1 が倍精度に収まる log_arg カットオフの上限
LOG_ARG_MAX_J = 0.5 * float(np.log(np.finfo(float).max))


def _pts(x, dim):
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    if pts.shape[1] != dim:
        raise InvalidParameterError("x", f"expected points of dimension {dim}, got {pts.shape}")
    return pts


class TestFunction:
    """試験関数の基底。サブクラスは _value/_gradient/_hessian を (n, dim) で実装する。"""

    kind = "test_function"
    dim: int = 1

    def value(self, x):
        return self._value(_pts(x, self.dim))

    def gradient(self, x):
        return self._gradient(_pts(x, self.dim))

    def hessian(self, x):
        return self._hessian(_pts(x, self.dim))

    def support_box(self) -> Optional[Box]:
        return None

    def support_ball(self):
        return None

    def as_integrand(self) -> Integrand:
        box = self.support_box()
        if box is None:
            raise InvalidParameterError("f", f"{self.kind} has no compact support; wrap it with a taper")
        return Integrand(self.value, box, self.support_ball())

    def c2_scale(self, samples=4096):
        """max(sup|f|, sup|∇f|, sup‖D²f‖) の見積り (台の箱の固定標本上)"""
        box = self.support_box()
        if box is None:
            return 1.0
        rng = np.random.default_rng(0)
        pts = box.lo + box.widths * rng.random((samples, self.dim))
        pts = np.vstack([pts, box.center[None, :]])
        v = np.abs(self.value(pts)).max()
        g = np.linalg.norm(self.gradient(pts), axis=1).max()
        h = np.linalg.norm(self.hessian(pts), ord=2, axis=(1, 2)).max()
        return float(max(v, g, h, 1e-300))

    def describe(self):
        return {"kind": self.kind}


# ==========================================
# 🫧 多項式バンプ (1 - |x-c|²/R²)³
# ==========================================


@dataclass(frozen=True, eq=False)
class PolyBump(TestFunction):
    """
    【poly_bump】 f(x) = (1 - |x-c|²/R²)³ (|x-c| < R), 0 (それ以外)。
    指数 3 は台の境界で C² になる最小の次数。
    weight_axis を指定すると x_k · f (一次モーメントに感度を持つ変種)。
    """

    center: np.ndarray
    radius: float
    weight_axis: Optional[int] = None
    exponent: int = 3

    kind = "poly_bump"

    def __post_init__(self):
        c = np.asarray(self.center, dtype=float).reshape(-1)
        if not self.radius > 0:
            raise InvalidParameterError("radius", "bump radius must be positive")
        if self.exponent < 3:
            raise InvalidParameterError("exponent", "exponent >= 3 is needed for a C² bump")
        object.__setattr__(self, "center", c)
        if self.weight_axis is not None and not 0 <= self.weight_axis < c.size:
            raise InvalidParameterError("weight_axis", f"axis {self.weight_axis} out of range")

    @property
    def dim(self):
        return self.center.size

    def _parts(self, pts):
        dx = pts - self.center
        s = np.sum(dx * dx, axis=1) / self.radius**2
        u = np.clip(1.0 - s, 0.0, None)
        return dx, u

    def _plain(self, pts):
        m = self.exponent
        r2 = self.radius**2
        dx, u = self._parts(pts)
        f = u**m
        g = (-2.0 * m / r2) * (u ** (m - 1))[:, None] * dx
        eye = np.eye(self.dim)
        h = (-2.0 * m / r2) * (u ** (m - 1))[:, None, None] * eye + (
            4.0 * m * (m - 1) / r2**2
        ) * (u ** (m - 2))[:, None, None] * (dx[:, :, None] * dx[:, None, :])
        return f, g, h

    def _value(self, pts):
        f, _, _ = self._plain(pts)
        if self.weight_axis is None:
            return f
        return pts[:, self.weight_axis] * f

    def _gradient(self, pts):
        f, g, _ = self._plain(pts)
        if self.weight_axis is None:
            return g
        k = self.weight_axis
        out = pts[:, k, None] * g
        out[:, k] += f
        return out

    def _hessian(self, pts):
        f, g, h = self._plain(pts)
        if self.weight_axis is None:
            return h
        k = self.weight_axis
        out = pts[:, k, None, None] * h
        out[:, k, :] += g
        out[:, :, k] += g
        return out

    def support_box(self):
        return Box.cube(self.center, self.radius)

    def support_ball(self):
        return (self.center, self.radius)

    def describe(self):
        out = {"kind": self.kind, "center": self.center.tolist(), "radius": self.radius}
        if self.weight_axis is not None:
            out["weight_axis"] = self.weight_axis
        return out


@dataclass(frozen=True, eq=False)
class GaussianBump(TestFunction):
    """exp(-|x-c|²/(2s²))。台は c ± truncation·s と宣言する (裾は 1e-14 以下)。"""

    center: np.ndarray
    scale: float
    truncation: float = 8.0

    kind = "gaussian_bump"

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float).reshape(-1))
        if not self.scale > 0:
            raise InvalidParameterError("scale", "must be positive")

    @property
    def dim(self):
        return self.center.size

    def _value(self, pts):
        dx = pts - self.center
        return np.exp(-0.5 * np.sum(dx * dx, axis=1) / self.scale**2)

    def _gradient(self, pts):
        dx = pts - self.center
        return -(self._value(pts) / self.scale**2)[:, None] * dx

    def _hessian(self, pts):
        dx = pts - self.center
        s2 = self.scale**2
        f = self._value(pts)[:, None, None]
        return f * (dx[:, :, None] * dx[:, None, :] / s2**2 - np.eye(self.dim) / s2)

    def support_box(self):
        return Box.cube(self.center, self.truncation * self.scale)

    def support_ball(self):
        return (self.center, self.truncation * self.scale)

    def describe(self):
        return {"kind": self.kind, "center": self.center.tolist(), "scale": self.scale}


# ==========================================
# ✂️ カットオフ ψ_j = F(V/j) / F(ln(1+V)/j)
# ==========================================


def smoothstep_profile(t):
    """
    F(t) = 1 (|t| <= 1), S(2-|t|) (1 < |t| < 2), 0 (|t| >= 2)
    S(u) = 6u⁵ - 15u⁴ + 10u³ (quintic smoothstep, C²)
    戻り値: (F, F', F'')
    """
    t = np.asarray(t, dtype=float)
    u = np.clip(2.0 - np.abs(t), 0.0, 1.0)
    f = u**3 * (10.0 - 15.0 * u + 6.0 * u * u)
    ds = 30.0 * u * u * (1.0 - u) ** 2
    d2s = 60.0 * u * (1.0 - u) * (1.0 - 2.0 * u)
    sign = np.sign(t)
    # dF/dt = -S'(u)·sign(t), d²F/dt² = S''(u)
    return f, -ds * sign, d2s


@dataclass(frozen=True, eq=False)
class SquaredNorm(TestFunction):
    """V(z) = |z - c|² (カットオフの引数)"""

    center: np.ndarray

    kind = "squared_norm"

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float).reshape(-1))

    @property
    def dim(self):
        return self.center.size

    def _value(self, pts):
        dz = pts - self.center
        return np.sum(dz * dz, axis=1)

    def _gradient(self, pts):
        return 2.0 * (pts - self.center)

    def _hessian(self, pts):
        return np.broadcast_to(2.0 * np.eye(self.dim), (len(pts), self.dim, self.dim)).copy()


@dataclass(frozen=True, eq=False)
class Cutoff(TestFunction):
    """
    【cutoff】 mode="quadratic_arg": ψ_j(z) = F(V(z)/j)
              mode="log_arg":       ψ_j(z) = F(ln(1+V(z))/j)
    内側 (引数 < 1) で 1、外側 (引数 > 2) で 0。V の既定は |z|²。
    """

    j: float
    mode: str = "quadratic_arg"
    dim: int = 1
    potential: Optional[SquaredNorm] = None

    kind = "cutoff"

    def __post_init__(self):
        if not self.j > 0:
            raise InvalidParameterError("j", "cutoff index must be positive")
        if self.mode not in ("quadratic_arg", "log_arg"):
            raise InvalidParameterError("mode", f"unknown cutoff mode {self.mode!r}")
        if self.mode == "log_arg" and not self.j < LOG_ARG_MAX_J:
            raise InvalidParameterError("j", f"log_arg cutoff needs j < {LOG_ARG_MAX_J:.2f} so that e^(2j) - 1 stays finite")
        if self.potential is None:
            object.__setattr__(self, "potential", SquaredNorm(np.zeros(self.dim)))
        elif self.potential.dim != self.dim:
            raise InvalidParameterError("potential", "potential dimension mismatch")

    def _argument(self, pts):
        v = self.potential._value(pts)
        dv = self.potential._gradient(pts)
        d2v = self.potential._hessian(pts)
        if self.mode == "quadratic_arg":
            return v / self.j, dv / self.j, d2v / self.j
        one_v = 1.0 + v
        t = np.log1p(v) / self.j
        dt = dv / (self.j * one_v[:, None])
        d2t = (d2v / one_v[:, None, None] - dv[:, :, None] * dv[:, None, :] / (one_v**2)[:, None, None]) / self.j
        return t, dt, d2t

    def _value(self, pts):
        t, _, _ = self._argument(pts)
        return smoothstep_profile(t)[0]

    def _gradient(self, pts):
        t, dt, _ = self._argument(pts)
        _, f1, _ = smoothstep_profile(t)
        return f1[:, None] * dt

    def _hessian(self, pts):
        t, dt, d2t = self._argument(pts)
        _, f1, f2 = smoothstep_profile(t)
        return f2[:, None, None] * (dt[:, :, None] * dt[:, None, :]) + f1[:, None, None] * d2t

    @property
    def inner_level(self):
        """V の値でみた内側 (ψ = 1) の境界"""
        return self.j if self.mode == "quadratic_arg" else float(np.expm1(self.j))

    @property
    def outer_level(self):
        return 2.0 * self.j if self.mode == "quadratic_arg" else float(np.expm1(2.0 * self.j))

    def annulus(self, pts):
        """E_j = {inner <= V <= outer} の指示関数"""
        v = self.potential.value(pts)
        return (v >= self.inner_level) & (v <= self.outer_level)

    def support_box(self):
        return Box.cube(self.potential.center, float(np.sqrt(self.outer_level)))

    def support_ball(self):
        return (self.potential.center, float(np.sqrt(self.outer_level)))

    def describe(self):
        return {"kind": self.kind, "j": self.j, "mode": self.mode, "dim": self.dim}


# ==========================================
# 🔢 多項式・積
# ==========================================


@dataclass(frozen=True, eq=False)
class Monomial(TestFunction):
    """Π x_k^{e_k} (コンパクト台なし。テーパーとの積で使う)"""

    exponents: tuple

    kind = "monomial"

    def __post_init__(self):
        e = tuple(int(v) for v in self.exponents)
        if any(v < 0 for v in e):
            raise InvalidParameterError("exponents", "must be nonnegative")
        object.__setattr__(self, "exponents", e)

    @property
    def dim(self):
        return len(self.exponents)

    @staticmethod
    def _pow(x, e):
        # e < 0 は 0 (微分で消えた項)
        return np.where(e >= 0, np.power(x, np.clip(e, 0, None)), 0.0)

    def _value(self, pts):
        e = np.asarray(self.exponents)
        return np.prod(self._pow(pts, e), axis=1)

    def _gradient(self, pts):
        e = np.asarray(self.exponents)
        out = np.zeros_like(pts)
        for k in range(self.dim):
            ek = e.copy()
            ek[k] -= 1
            out[:, k] = e[k] * np.prod(self._pow(pts, ek), axis=1)
        return out

    def _hessian(self, pts):
        e = np.asarray(self.exponents)
        out = np.zeros((len(pts), self.dim, self.dim))
        for k in range(self.dim):
            for m in range(self.dim):
                ek = e.copy()
                if k == m:
                    coef = e[k] * (e[k] - 1)
                    ek[k] -= 2
                else:
                    coef = e[k] * e[m]
                    ek[k] -= 1
                    ek[m] -= 1
                if coef:
                    out[:, k, m] = coef * np.prod(self._pow(pts, ek), axis=1)
        return out

    def describe(self):
        return {"kind": self.kind, "exponents": list(self.exponents)}


@dataclass(frozen=True, eq=False)
class HalfSquaredDistance(TestFunction):
    """ψ(x, y) = |x - y|²/2 on ℝ^{2d} (𝕃ψ = q)"""

    d: int

    kind = "half_squared_distance"

    @property
    def dim(self):
        return 2 * self.d

    def _value(self, pts):
        diff = pts[:, : self.d] - pts[:, self.d :]
        return 0.5 * np.sum(diff * diff, axis=1)

    def _gradient(self, pts):
        diff = pts[:, : self.d] - pts[:, self.d :]
        return np.concatenate([diff, -diff], axis=1)

    def _hessian(self, pts):
        eye = np.eye(self.d)
        block = np.block([[eye, -eye], [-eye, eye]])
        return np.broadcast_to(block, (len(pts), 2 * self.d, 2 * self.d)).copy()


@dataclass(frozen=True, eq=False)
class Constant(TestFunction):
    level: float
    dim: int = 1

    kind = "constant"

    def _value(self, pts):
        return np.full(len(pts), float(self.level))

    def _gradient(self, pts):
        return np.zeros_like(pts)

    def _hessian(self, pts):
        return np.zeros((len(pts), self.dim, self.dim))


@dataclass(frozen=True, eq=False)
class ProductFunction(TestFunction):
    """f · g (積の微分法則)。台は両者の台の共通部分。"""

    left: TestFunction
    right: TestFunction

    kind = "product"

    def __post_init__(self):
        if self.left.dim != self.right.dim:
            raise InvalidParameterError("right", "factor dimensions differ")

    @property
    def dim(self):
        return self.left.dim

    def _value(self, pts):
        return self.left._value(pts) * self.right._value(pts)

    def _gradient(self, pts):
        f, g = self.left._value(pts), self.right._value(pts)
        return g[:, None] * self.left._gradient(pts) + f[:, None] * self.right._gradient(pts)

    def _hessian(self, pts):
        f, g = self.left._value(pts), self.right._value(pts)
        df, dg = self.left._gradient(pts), self.right._gradient(pts)
        cross = df[:, :, None] * dg[:, None, :]
        return (
            g[:, None, None] * self.left._hessian(pts)
            + f[:, None, None] * self.right._hessian(pts)
            + cross
            + np.swapaxes(cross, 1, 2)
        )

    def support_box(self):
        boxes = [b for b in (self.left.support_box(), self.right.support_box()) if b is not None]
        if not boxes:
            return None
        box = boxes[0]
        for other in boxes[1:]:
            box = box.intersect(other)
            if box is None:
                box = Box(other.lower, other.lower)
        return box

    def support_ball(self):
        balls = [b for b in (self.left.support_ball(), self.right.support_ball()) if b is not None]
        if len(balls) == 1:
            return balls[0]
        if len(balls) == 2:
            # 半径の小さい方 (共通部分を含む球)
            return min(balls, key=lambda b: b[1])
        return None

    def describe(self):
        return {"kind": self.kind, "left": self.left.describe(), "right": self.right.describe()}


def taper(dim, half_width, center=None):
    """半径 half_width の球上で 1、半径 √2·half_width の外で 0 の滑らかなテーパー"""
    center = np.zeros(dim) if center is None else np.asarray(center, dtype=float)
    return Cutoff(half_width**2, "quadratic_arg", dim, SquaredNorm(center))


def tapered(f: TestFunction, half_width, center=None) -> ProductFunction:
    return ProductFunction(f, taper(f.dim, half_width, center))


def function_from_config(spec: dict, dim: int) -> TestFunction:
    kind = spec.get("kind", "poly_bump")
    if kind == "poly_bump":
        center = np.asarray(spec.get("center", np.zeros(dim)), dtype=float)
        return PolyBump(center, float(spec.get("radius", 1.0)), spec.get("weight_axis"))
    if kind == "gaussian_bump":
        center = np.asarray(spec.get("center", np.zeros(dim)), dtype=float)
        return GaussianBump(center, float(spec.get("scale", 1.0)))
    if kind == "cutoff":
        return Cutoff(float(spec["j"]), spec.get("mode", "quadratic_arg"), dim)
    if kind == "monomial":
        f = Monomial(tuple(spec["exponents"]))
        if "taper" in spec:
            return tapered(f, float(spec["taper"]))
        return f
    raise InvalidParameterError("kind", f"unknown test function kind {kind!r}")
