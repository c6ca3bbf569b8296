"""
二重化作用素 𝕃 と点対 (x, y) 上の量。

    𝔸(x, y) = [[A(x), Σ(x)Σ(y)ᵗ], [Σ(y)Σ(x)ᵗ, A(y)]],  𝔹(x, y) = (b(x), b(y))
    𝕃ψ = trace(𝔸 D²ψ) + ⟨𝔹, ∇ψ⟩
    q(x, y) = ⟨x-y, b(x)-b(y)⟩ + ‖Σ(x)-Σ(y)‖²_F   (= 𝕃 |x-y|²/2)
    r(x, y) = |(Σ(x)-Σ(y))ᵗ (x-y)/|x-y||²
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .coeff import CoefficientField, as_points
from .conf import get_setting
from .exceptions import ContractViolationError, DiagonalUndefinedError, InvalidParameterError


@dataclass(frozen=True)
class DoubledEval:
    x: np.ndarray
    y: np.ndarray
    A_block: np.ndarray
    B_stack: np.ndarray
    q: float
    r: Optional[float]

    def to_dict(self):
        return {
            "x": self.x.tolist(),
            "y": self.y.tolist(),
            "A_block": self.A_block.tolist(),
            "B_stack": self.B_stack.tolist(),
            "q": self.q,
            "r": self.r,
        }


def _pair(field, x, y):
    px, sx = as_points(x, field.d)
    py, sy = as_points(y, field.d)
    if len(px) != len(py):
        raise InvalidParameterError("y", "x and y batches must have the same length")
    return px, py, sx and sy


# ==========================================
# q と r
# ==========================================


def q_values(field: CoefficientField, X, Y) -> np.ndarray:
    X, Y, _ = _pair(field, X, Y)
    dx = X - Y
    db = field.drift(X) - field.drift(Y)
    ds = field.sigma(X) - field.sigma(Y)
    # trace 項は差の Frobenius ノルムの二乗として計算する
    return np.sum(dx * db, axis=1) + np.sum(ds * ds, axis=(1, 2))


def q_value(field: CoefficientField, x, y) -> float:
    return float(q_values(field, np.atleast_2d(x), np.atleast_2d(y))[0])


def diagonal_mask(X, Y):
    tol = get_setting("diagonal_tolerance")
    gap = np.linalg.norm(X - Y, axis=1)
    scale = 1.0 + np.linalg.norm(X, axis=1) + np.linalg.norm(Y, axis=1)
    return gap <= tol * scale


def r_values(field: CoefficientField, X, Y) -> np.ndarray:
    """対角上の対は nan (r は x != y でのみ定義)"""
    X, Y, _ = _pair(field, X, Y)
    on_diag = diagonal_mask(X, Y)
    dx = X - Y
    gap = np.linalg.norm(dx, axis=1)
    unit = np.divide(dx, gap[:, None], out=np.zeros_like(dx), where=~on_diag[:, None])
    ds = field.sigma(X) - field.sigma(Y)
    proj = np.einsum("nij,ni->nj", ds, unit)
    out = np.sum(proj * proj, axis=1)
    out[on_diag] = np.nan
    return out


def r_value(field: CoefficientField, x, y) -> float:
    X, Y, _ = _pair(field, np.atleast_2d(x), np.atleast_2d(y))
    if diagonal_mask(X, Y)[0]:
        raise DiagonalUndefinedError(f"r(x, y) is undefined on the diagonal (x={X[0].tolist()})")
    return float(r_values(field, X, Y)[0])


# ==========================================
# 𝔸, 𝔹 と 𝕃ψ
# ==========================================


def doubled_matrices(field: CoefficientField, X, Y, field_y: Optional[CoefficientField] = None):
    """
    (n, 2d, 2d) の 𝔸 と (n, 2d) の 𝔹。
    field_y を渡すと y 側の係数を別の場から取る (正則化系の 𝔸_ε 用)。
    """
    field_y = field if field_y is None else field_y
    X, Y, _ = _pair(field, X, Y)
    d = field.d
    sx, sy = field.sigma(X), field_y.sigma(Y)
    cross = sx @ np.swapaxes(sy, 1, 2)
    a = np.empty((len(X), 2 * d, 2 * d))
    a[:, :d, :d] = field.diffusion(X)
    a[:, d:, d:] = field_y.diffusion(Y)
    a[:, :d, d:] = cross
    a[:, d:, :d] = np.swapaxes(cross, 1, 2)
    b = np.concatenate([field.drift(X), field_y.drift(Y)], axis=1)
    return a, b


def doubled_blocks(field: CoefficientField, x, y) -> DoubledEval:
    X, Y, _ = _pair(field, np.atleast_2d(x), np.atleast_2d(y))
    a, b = doubled_matrices(field, X, Y)
    r = None if diagonal_mask(X, Y)[0] else float(r_values(field, X, Y)[0])
    return DoubledEval(X[0], Y[0], a[0], b[0], float(q_values(field, X, Y)[0]), r)


def generator_value(field: CoefficientField, f, pts) -> np.ndarray:
    """Lf(x) = trace(A(x)D²f(x)) + ⟨b(x), ∇f(x)⟩"""
    pts = np.atleast_2d(pts)
    if len(pts) == 0:
        return np.zeros(0)
    a = field.diffusion(pts)
    return np.einsum("nij,nij->n", a, f.hessian(pts)) + np.einsum("ni,ni->n", field.drift(pts), f.gradient(pts))


def doubled_generator_value(field: CoefficientField, psi, Z, field_y=None) -> np.ndarray:
    """𝕃ψ(z), z = (x, y) ∈ ℝ^{2d}"""
    Z = np.atleast_2d(Z)
    if len(Z) == 0:
        return np.zeros(0)
    d = field.d
    a, b = doubled_matrices(field, Z[:, :d], Z[:, d:], field_y)
    return np.einsum("nij,nij->n", a, psi.hessian(Z)) + np.einsum("ni,ni->n", b, psi.gradient(Z))


def apply_doubled(field: CoefficientField, psi, x, y) -> float:
    z = np.concatenate([np.asarray(x, dtype=float).reshape(-1), np.asarray(y, dtype=float).reshape(-1)])
    return float(doubled_generator_value(field, psi, z[None, :])[0])


# ==========================================
# 正定値性
# ==========================================


def _check_symmetric(a):
    scale = 1.0 + np.max(np.abs(a), axis=(-2, -1))
    asym = np.max(np.abs(a - np.swapaxes(a, -1, -2)), axis=(-2, -1))
    if np.any(asym > 1e-12 * scale):
        raise ContractViolationError(f"matrix is not symmetric (max asymmetry {float(np.max(asym)):.3e})")
    limit = 2 * get_setting("max_doubled_dimension")
    if a.shape[-1] > limit:
        raise InvalidParameterError("A_block", f"size {a.shape[-1]} exceeds {limit}")


def psd_margins(a_blocks) -> np.ndarray:
    a = np.asarray(a_blocks, dtype=float)
    _check_symmetric(a)
    return np.linalg.eigvalsh(a)[..., 0]


def psd_margin(a_block) -> float:
    """最小固有値 (対称行列のみ)"""
    return float(psd_margins(np.asarray(a_block, dtype=float)[None, ...])[0])
