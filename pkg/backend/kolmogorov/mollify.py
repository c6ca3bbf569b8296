"""
正則化 (mollification):

    μ_ε(x)       = εγ(x) + (1-ε)(ω_ε * μ)(x)
    a_{ε,μ}(x)   = [(1-ε)∫a(y)ω_ε(x-y)μ(dy) + εγ(x)I] / μ_ε(x)
    σ_{ε,μ}(x)   = (1-ε)∫σ(y)ω_ε(x-y)μ(dy) / μ_ε(x)
    b_{ε,μ}(x)   = [(1-ε)∫b(y)ω_ε(x-y)μ(dy) - εγ(x)x] / μ_ε(x)

格子上で計算し、係数は多重線形補間の CoefficientField として返す。
A_{ε,μ} は Σ_{ε,μ}Σ_{ε,μ}ᵗ と一致しないので、場は自前の拡散評価を持つ。
d ∈ {1, 2} のみ。
"""

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd
from scipy import integrate as sp_integrate
from scipy import sparse
from scipy.stats import chi

from .coeff import CoefficientField, grid_field
from .conf import get_setting
from .doubling import doubled_matrices, psd_margins
from .exceptions import (
    DomainTruncationError,
    InvalidParameterError,
    ResolutionError,
    UnsupportedDimensionError,
)
from .fpk import ResidualReport, lyapunov_check, weak_residual
from .measures import AnalyticDensity, Box, CouplingMeasure, DiracMeasure, EmpiricalMeasure, GridDensity

logger = logging.getLogger(__name__)


# ==========================================
# 🫧 軟化子 ω_ε
# ==========================================


def _bump(r2):
    out = np.zeros_like(r2, dtype=float)
    inside = r2 < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - r2[inside]))
    return out


@lru_cache(maxsize=None)
def bump_normalizer(d: int) -> float:
    """c_d: ∫ c_d exp(-1/(1-|x|²)) dx = 1 (c_1 ≈ 2.25228)"""
    surface = 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)
    radial, _ = sp_integrate.quad(
        lambda r: r ** (d - 1) * math.exp(-1.0 / (1.0 - r * r)) if r < 1.0 else 0.0,
        0.0,
        1.0,
        epsabs=1e-14,
        epsrel=1e-12,
        limit=200,
    )
    # d = 1 の「球面積」は 2 (±1 の 2 点)
    return 1.0 / (surface * radial)


@dataclass(frozen=True)
class MollifierKernel:
    """ω_ε(z) = ε^{-d} c_d exp(-1/(1-|z/ε|²)) (|z| < ε)、外側は 0"""

    eps: float
    d: int

    def __post_init__(self):
        if not 0.0 < self.eps < 1.0:
            raise InvalidParameterError("eps", f"need 0 < eps < 1, got {self.eps}")
        if self.d < 1:
            raise InvalidParameterError("d", "dimension must be positive")

    @property
    def normalizer(self):
        return bump_normalizer(self.d)

    def __call__(self, z):
        z = np.atleast_2d(z) / self.eps
        return self.normalizer * _bump(np.sum(z * z, axis=1)) / self.eps**self.d


# ==========================================
# 🗺️ 格子
# ==========================================


@dataclass(frozen=True)
class GridSpec:
    box: Box
    resolution: tuple

    def __post_init__(self):
        res = tuple(int(n) for n in self.resolution)
        if len(res) != self.box.dim or any(n < 2 for n in res):
            raise InvalidParameterError("resolution", "need >= 2 cells per axis, one entry per axis")
        object.__setattr__(self, "resolution", res)

    @property
    def dim(self):
        return self.box.dim

    @property
    def spacing(self):
        return self.box.widths / np.asarray(self.resolution)

    @property
    def cell_volume(self):
        return float(np.prod(self.spacing))

    @property
    def axes(self):
        h = self.spacing
        return [self.box.lo[k] + (np.arange(n) + 0.5) * h[k] for k, n in enumerate(self.resolution)]

    def centers(self):
        grids = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)

    def to_dict(self):
        return {"box": self.box.to_dict(), "resolution": list(self.resolution)}

    @classmethod
    def covering(cls, measure, eps, spacing=None):
        """
        supp μ を ε だけ膨らませた箱と、標準 Gauss 分布の質量 1e-10 半径の立方体の包。
        spacing の既定は ε/8。
        """
        d = measure.dim
        spacing = float(spacing) if spacing is not None else eps / 8.0
        tail = float(chi.isf(get_setting("gaussian_tail_mass"), d))
        if isinstance(measure, AnalyticDensity):
            if measure.kind != "gaussian":
                raise InvalidParameterError("measure", "only Gaussian analytic measures can be mollified")
            support = Box.cube(measure.mean, tail * measure.scale())
        else:
            support = measure.support_box()
        box = support.dilate(eps).hull(Box.symmetric(d, tail))
        n = np.maximum(np.ceil(box.widths / spacing - 1e-9).astype(int), 2)
        box = Box(tuple(box.lo), tuple(box.lo + n * spacing))
        return cls(box, tuple(n.tolist()))


def _check_resolution(grid: GridSpec, eps):
    limit = get_setting("mollifier_resolution_ratio") * eps
    if float(np.max(grid.spacing)) > limit * (1.0 + 1e-12):
        raise ResolutionError(f"grid cell {float(np.max(grid.spacing)):.4g} exceeds eps/4 = {limit:.4g}")


def _atoms(measure, grid: GridSpec):
    """
    μ を重み付き点に置き換える。
    解析密度 (Gauss 分布) は格子セル中心の中点則で、格子を細かくすると原子も細かくなる。
    """
    if isinstance(measure, DiracMeasure):
        return measure.atom.reshape(1, -1), np.ones(1)
    if isinstance(measure, EmpiricalMeasure):
        return measure.points, measure.weights
    if isinstance(measure, GridDensity):
        return measure.centers(), measure.values.ravel() * measure.cell_volume
    if isinstance(measure, AnalyticDensity):
        pts = grid.centers()
        w = measure.density(pts) * grid.cell_volume
        return pts, w / w.sum()
    if isinstance(measure, CouplingMeasure):
        raise InvalidParameterError("measure", "couplings cannot be mollified; mollify each marginal")
    raise InvalidParameterError("measure", f"unsupported measure {type(measure).__name__}")


def kernel_matrix(kernel: MollifierKernel, grid: GridSpec, atoms, chunk=4096):
    """
    (セル数, 原子数) の疎行列 K。K[i, j] = ω_ε(x_i - y_j) を、
    各列の離散質量 Σ_i K[i, j]·|cell| が 1 になるよう正規化する。
    """
    d = grid.dim
    h = grid.spacing
    res = np.asarray(grid.resolution)
    reach = np.ceil(kernel.eps / h).astype(int) + 1
    offsets = np.stack(
        [g.ravel() for g in np.meshgrid(*[np.arange(-r, r + 1) for r in reach], indexing="ij")], axis=1
    )
    rows, cols, vals = [], [], []
    for start in range(0, len(atoms), chunk):
        y = atoms[start : start + chunk]
        base = np.floor((y - grid.box.lo) / h).astype(int)
        idx = base[:, None, :] + offsets[None, :, :]
        ok = np.all((idx >= 0) & (idx < res), axis=2)
        centers = grid.box.lo + (idx + 0.5) * h
        z = (centers - y[:, None, :]).reshape(-1, d)
        w = kernel(z).reshape(len(y), -1)
        keep = ok & (w > 0)
        atom_idx = np.broadcast_to(np.arange(start, start + len(y))[:, None], keep.shape)
        flat = np.ravel_multi_index(tuple(idx[keep].T), tuple(res))
        rows.append(flat)
        cols.append(atom_idx[keep])
        vals.append(w[keep])
    rows, cols, vals = np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)
    mass = np.bincount(cols, weights=vals, minlength=len(atoms)) * grid.cell_volume
    if np.any(mass <= 0):
        raise DomainTruncationError("some atoms have no kernel mass on the grid; enlarge the grid")
    vals = vals / mass[cols]
    return sparse.csr_matrix((vals, (rows, cols)), shape=(int(np.prod(res)), len(atoms)))


# ==========================================
# 🧩 正則化系
# ==========================================


@dataclass(frozen=True, eq=False)
class MollifiedSystem:
    eps: float
    grid: GridSpec
    mu_eps: GridDensity
    gamma: np.ndarray
    smoothed: np.ndarray
    source_fingerprint: str
    regularized_field: Optional[CoefficientField] = None
    coefficients: dict = field(default_factory=dict)

    @property
    def dim(self):
        return self.grid.dim

    def describe(self):
        return {
            "eps": self.eps,
            "grid": self.grid.to_dict(),
            "source_measure_sha256": self.source_fingerprint,
            "field": self.regularized_field.describe() if self.regularized_field is not None else None,
            "kernel_normalizer": bump_normalizer(self.dim),
        }


def _prepare(measure, eps, grid: Optional[GridSpec]):
    d = measure.dim
    if d not in (1, 2):
        raise UnsupportedDimensionError(f"mollification is implemented for d in (1, 2), got d={d}")
    kernel = MollifierKernel(float(eps), d)
    grid = grid or GridSpec.covering(measure, eps)
    if grid.dim != d:
        raise InvalidParameterError("grid", "grid dimension differs from the measure")
    _check_resolution(grid, eps)
    atoms, weights = _atoms(measure, grid)
    K = kernel_matrix(kernel, grid, atoms)
    x = grid.centers()
    gamma = np.exp(-0.5 * np.sum(x * x, axis=1)) / (2.0 * math.pi) ** (d / 2.0)
    gamma_mass = float(gamma.sum() * grid.cell_volume)
    # 格子上で質量 1 になるよう正規化 (γ_h >= γ)
    gamma = gamma / gamma_mass
    smoothed = K @ weights
    mu = eps * gamma + (1.0 - eps) * smoothed
    underflow = get_setting("density_underflow")
    if np.any(mu < underflow):
        i = int(np.argmin(mu))
        raise DomainTruncationError(f"mu_eps underflows at {x[i].tolist()}")
    return kernel, grid, atoms, weights, K, x, gamma, smoothed, mu, gamma_mass


def mollify_measure(measure, eps, grid: Optional[GridSpec] = None) -> MollifiedSystem:
    """μ_ε の格子値 (係数なし)"""
    _, grid, _, _, _, _, gamma, smoothed, mu, gamma_mass = _prepare(measure, eps, grid)
    mu_eps = GridDensity(
        grid.box,
        mu.reshape(grid.resolution) / float(mu.sum() * grid.cell_volume),
        (f"eps={eps:g}", f"gaussian mass on grid before normalization {gamma_mass:.12g}"),
    )
    return MollifiedSystem(float(eps), grid, mu_eps, gamma, smoothed, measure.fingerprint())


def regularize_coefficients(field_: CoefficientField, measure, eps, grid: Optional[GridSpec] = None) -> MollifiedSystem:
    """μ_ε と a_{ε,μ}, σ_{ε,μ}, b_{ε,μ} (同じ核行列で計算)"""
    if field_.d != measure.dim:
        raise InvalidParameterError("field", "field and measure dimensions differ")
    _, grid, atoms, weights, K, x, gamma, smoothed, mu, gamma_mass = _prepare(measure, eps, grid)
    d, d1 = field_.d, field_.d1
    n_atoms = len(atoms)
    a_at = field_.diffusion(atoms).reshape(n_atoms, d * d)
    s_at = field_.sigma(atoms).reshape(n_atoms, d * d1)
    b_at = field_.drift(atoms).reshape(n_atoms, d)

    a_num = (1.0 - eps) * (K @ (weights[:, None] * a_at)) + (eps * gamma)[:, None] * np.eye(d).ravel()
    s_num = (1.0 - eps) * (K @ (weights[:, None] * s_at))
    b_num = (1.0 - eps) * (K @ (weights[:, None] * b_at)) - (eps * gamma)[:, None] * x

    shape = grid.resolution
    a_grid = (a_num / mu[:, None]).reshape(shape + (d, d))
    s_grid = (s_num / mu[:, None]).reshape(shape + (d, d1))
    b_grid = (b_num / mu[:, None]).reshape(shape + (d,))
    label = f"regularized[{field_.label}, eps={eps:g}]"
    reg_field = grid_field(grid.axes, s_grid, b_grid, label, diffusion_grid=a_grid)
    mu_eps = GridDensity(
        grid.box,
        mu.reshape(shape) / float(mu.sum() * grid.cell_volume),
        (f"eps={eps:g}", f"gaussian mass on grid before normalization {gamma_mass:.12g}"),
    )
    logger.info("regularized %s on grid %s", field_.label, shape)
    return MollifiedSystem(
        float(eps),
        grid,
        mu_eps,
        gamma,
        smoothed,
        measure.fingerprint(),
        reg_field,
        {"a": a_grid, "sigma": s_grid, "b": b_grid},
    )


def regularized_residual(system: MollifiedSystem, battery, threads=None) -> ResidualReport:
    """∫ L_{ε,μ} f · μ_ε dx (L*_{ε,μ}μ_ε = 0 の確認)"""
    if system.regularized_field is None:
        raise InvalidParameterError("system", "system has no regularized coefficients")
    return weak_residual(system.regularized_field, system.mu_eps, battery, threads=threads)


def _sample_in_box(rng, box, n):
    return box.lo + box.widths * rng.random((n, box.dim))


def doubled_regularized_psd(system_mu: MollifiedSystem, system_nu: MollifiedSystem, pairs=10_000, seed=0) -> float:
    """
    𝔸_ε(x, y) = [[A_{ε,μ}(x), Σ_{ε,μ}(x)Σ_{ε,ν}(y)ᵗ], [.., A_{ε,ν}(y)]] の最小固有値の最小。
    pairs は点対の数 (各系の格子の箱から一様に取る) か (X, Y)。
    """
    if system_mu.regularized_field is None or system_nu.regularized_field is None:
        raise InvalidParameterError("system", "both systems need regularized coefficients")
    if system_mu.eps != system_nu.eps:
        raise InvalidParameterError("eps", "both systems must share eps")
    if isinstance(pairs, tuple):
        X, Y = (np.atleast_2d(np.asarray(p, dtype=float)) for p in pairs)
    else:
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed)])))
        X = _sample_in_box(rng, system_mu.grid.box, int(pairs))
        Y = _sample_in_box(rng, system_nu.grid.box, int(pairs))
    A, _ = doubled_matrices(system_mu.regularized_field, X, Y, field_y=system_nu.regularized_field)
    margin = float(np.min(psd_margins(A)))
    logger.info("doubled regularized PSD margin over %d pairs: %.3e", len(X), margin)
    return margin


# ==========================================
# 🔬 付随するチェック
# ==========================================


def weak_convergence_profile(measure, eps_list, battery, spacing=None):
    """ε ↓ 0 で ∫f dμ_ε → ∫f dμ となるかをバッテリー上で見る"""
    reference = np.array([measure.integrate(f).value for f in battery])
    rows = []
    for eps in sorted(eps_list, reverse=True):
        grid = GridSpec.covering(measure, eps, None if spacing is None else spacing * eps)
        system = mollify_measure(measure, eps, grid)
        values = np.array([system.mu_eps.integrate(f).value for f in battery])
        errors = np.abs(values - reference)
        rows.append({"eps": float(eps), "max_abs_error": float(errors.max()), "errors": errors.tolist()})
    errs = [r["max_abs_error"] for r in rows]
    monotone = all(b <= a for a, b in zip(errs, errs[1:]))
    return {"rows": rows, "monotone": monotone}


def regularized_lyapunov(system: MollifiedSystem, powers=(2.0,), target=1.0, points=200):
    """格子の内側に収まる半径で L_{ε,μ}|x|^p を調べる"""
    if system.regularized_field is None:
        raise InvalidParameterError("system", "system has no regularized coefficients")
    box = system.grid.box
    r_max = 0.95 * float(min(np.min(np.abs(box.lo)), np.min(np.abs(box.hi))))
    radii = np.linspace(0.0, r_max, points)
    return lyapunov_check(system.regularized_field, powers, radii, target)


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def export_system(system: MollifiedSystem, directory):
    """格子値の CSV と JSON マニフェスト (ε, 格子, 元の測度の SHA-256)"""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    frame = system.mu_eps.to_frame().rename(columns={"value": "mu_eps"})
    frame["gamma"] = system.gamma
    frame["smoothed"] = system.smoothed
    n = len(frame)
    for name, grid in system.coefficients.items():
        flat = grid.reshape(n, -1)
        if name == "b":
            for i in range(flat.shape[1]):
                frame[f"b_{i + 1}"] = flat[:, i]
            continue
        cols = grid.shape[-1]
        for k in range(flat.shape[1]):
            frame[f"{name}_{k // cols + 1}_{k % cols + 1}"] = flat[:, k]
    csv_path = directory / "mollified_system.csv"
    frame.to_csv(csv_path, index=False, float_format="%.17g")
    manifest = system.describe()
    manifest["csv"] = csv_path.name
    manifest["csv_sha256"] = _sha256(csv_path)
    manifest_path = directory / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return csv_path, manifest_path
