"""
扭曲函数模块

把基函数 w_i 映射为保端点的严格单调扭曲 h_i，在扭曲时间点上插值求 X_i∘h_i，
并提供基函数先验密度与事后均值扭曲中心化。

端点约束通过规范化实现：w 减去常数 c = log(Σ Δ e^{w_k} / (t_p − t_1))，
使 h(t_p) = t_p 精确成立。等间距网格下 c = logsumexp(w) − log(p−1)。
"""

from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np
from scipy.interpolate import PchipInterpolator, make_interp_spline
from scipy.special import logsumexp, softmax

from ..config import get_logger
from ..models import BaseFunction, Interpolation, PenaltySet, TimeGrid, Warp
from ..utils.exceptions import WarpError
from .fda_grid import sigma_f

logger = get_logger("warp_engine")

MAX_ABS_BASE = 30.0
# 推断中基函数的工作范围：e^{±15} 量级的增量在累加后仍可由双精度分辨
WORKING_ABS_BASE = 15.0
_CLAMP_MARGIN = 1e-3

ArrayOrBase = Union[np.ndarray, BaseFunction]
ArrayOrWarp = Union[np.ndarray, Warp]


def _values(obj) -> np.ndarray:
    return np.asarray(getattr(obj, "values", obj), dtype=float)


def canonical_shift(w: ArrayOrBase) -> float:
    """使 h(t_p) = t_p 的平移常数 c"""
    values = _values(w)
    return float(logsumexp(values) - np.log(values.size))


def canonicalize_base(w: ArrayOrBase) -> np.ndarray:
    """返回规范代表元 w − c"""
    values = _values(w)
    return values - canonical_shift(values)


def warp_values(w: ArrayOrBase, grid: TimeGrid) -> np.ndarray:
    """
    由基函数计算扭曲取值（不做范围检查的快速版本）

    常数基函数直接返回网格本身，即恒等扭曲。
    """
    values = _values(w)
    if values.size != grid.p - 1:
        raise WarpError("基函数长度必须为 p−1", {"expected": grid.p - 1, "actual": values.size})
    if np.ptp(values) == 0:
        return np.array(grid.points, dtype=float)

    increments = np.exp(values - values.max())
    cumulative = np.concatenate([[0.0], np.cumsum(increments)])
    h = grid.start + grid.span * cumulative / cumulative[-1]
    h[0] = grid.start
    h[-1] = grid.end
    return _strictly_increasing(h)


def _strictly_increasing(h: np.ndarray) -> np.ndarray:
    """被舍入吞掉的极小增量补成相邻可表示浮点数，端点不动"""
    if np.all(np.diff(h) > 0):
        return h
    for k in range(1, h.size - 1):
        h[k] = max(h[k], np.nextafter(h[k - 1], np.inf))
    for k in range(h.size - 2, 0, -1):
        h[k] = min(h[k], np.nextafter(h[k + 1], -np.inf))
    return h


def warp_from_base(w: ArrayOrBase, grid: TimeGrid) -> Warp:
    """
    由基函数构造扭曲函数

    Raises:
        WarpError: 基函数含非有限值或 |w| > 30
    """
    values = _values(w)
    if not np.all(np.isfinite(values)):
        raise WarpError("基函数必须为有限值")
    if np.max(np.abs(values)) > MAX_ABS_BASE:
        raise WarpError("基函数幅度超过上限", {"max_abs": float(np.max(np.abs(values)))})
    return Warp(values=warp_values(values, grid), grid=grid)


def warp_jacobian(w: ArrayOrBase, grid: TimeGrid) -> Tuple[np.ndarray, np.ndarray]:
    """
    扭曲取值及其对 w 的雅可比矩阵

    Returns:
        Tuple[np.ndarray, np.ndarray]: h (p,) 与 ∂h/∂w (p×(p−1))
    """
    values = _values(w)
    p = grid.p
    increments = np.exp(values - values.max())
    total = increments.sum()
    cumulative = np.concatenate([[0.0], np.cumsum(increments)])
    lower = np.tril(np.ones((p, p - 1)), k=-1)
    jac = (grid.span / total) * (lower - (cumulative / total)[:, None]) * increments[None, :]
    return warp_values(values, grid), jac


def clamp_base(w: np.ndarray) -> np.ndarray:
    """规范化后截断到工作范围，再规范化一次；结果满足 |w| ≤ 15"""
    # 再规范化的平移不超过 log(1 + e^{-15})，小于留出的余量
    bound = WORKING_ABS_BASE - _CLAMP_MARGIN
    clipped = np.clip(canonicalize_base(w), -bound, bound)
    return canonicalize_base(clipped)


def base_from_warp(h: ArrayOrWarp, grid: TimeGrid) -> np.ndarray:
    """由扭曲取值反求规范基函数"""
    values = _values(h)
    steps = np.diff(values)
    if np.any(steps <= 0):
        raise WarpError("扭曲函数必须严格递增")
    return canonicalize_base(np.log(steps / grid.spacing))


class CurveInterpolant:
    """单条观测曲线的插值器，可在任意扭曲时间点求值及求导"""

    def __init__(self, x: np.ndarray, grid: TimeGrid,
                 interpolation: Interpolation = Interpolation.MONOTONE_CUBIC):
        self.x = np.asarray(x, dtype=float)
        self.grid = grid
        self.interpolation = Interpolation(interpolation)
        if self.interpolation is Interpolation.MONOTONE_CUBIC:
            self._interp = PchipInterpolator(grid.points, self.x, extrapolate=True)
        else:
            self._interp = make_interp_spline(grid.points, self.x, k=1)
        self._deriv = self._interp.derivative()

    def __call__(self, h: np.ndarray) -> np.ndarray:
        """在 h 上求值；落在网格点上的取值原样返回"""
        h = np.clip(np.asarray(h, dtype=float), self.grid.start, self.grid.end)
        out = np.asarray(self._interp(h), dtype=float)
        if h.shape == self.grid.points.shape:
            exact = h == self.grid.points
            out[exact] = self.x[exact]
        return out

    def slope(self, h: np.ndarray) -> np.ndarray:
        """插值函数在 h 上的导数"""
        h = np.clip(np.asarray(h, dtype=float), self.grid.start, self.grid.end)
        return np.asarray(self._deriv(h), dtype=float)


def apply_warp(x: np.ndarray, h: ArrayOrWarp, grid: TimeGrid,
               interpolation: Interpolation = Interpolation.MONOTONE_CUBIC) -> np.ndarray:
    """求 X(h(t_j))：对观测值插值后在扭曲时间点上取值"""
    return CurveInterpolant(x, grid, interpolation)(_values(h))


@dataclass(frozen=True, eq=False)
class BasePriorTerms:
    """基函数先验 N_{p−1}(0, γ_w⁻¹Σ + λ_w⁻¹P2) 的预计算量"""
    precision: np.ndarray
    log_norm: float
    cov_cholesky: np.ndarray


def base_prior_terms(pen_reduced: PenaltySet, gamma_w: float, lambda_w: float) -> BasePriorTerms:
    """预计算基函数先验的精度矩阵和对数归一化常数"""
    # γ_w⁻¹(P1+P2) + λ_w⁻¹P2 = γ_w⁻¹P1 + (γ_w⁻¹+λ_w⁻¹)P2
    curvature = 1.0 / (1.0 / gamma_w + 1.0 / lambda_w)
    covariance, precision = sigma_f(pen_reduced, gamma_w, curvature)
    sign, log_det = np.linalg.slogdet(precision)
    assert sign > 0, "基函数先验精度必须正定"
    dim = precision.shape[0]
    return BasePriorTerms(
        precision=precision,
        log_norm=float(-0.5 * dim * np.log(2 * np.pi) + 0.5 * log_det),
        cov_cholesky=np.linalg.cholesky(covariance),
    )


def log_base_prior(w: ArrayOrBase, pen_reduced: PenaltySet, gamma_w: float, lambda_w: float,
                   terms: BasePriorTerms = None) -> float:
    """基函数先验对数密度，在规范代表元上求值"""
    terms = terms or base_prior_terms(pen_reduced, gamma_w, lambda_w)
    canonical = canonicalize_base(w)
    return float(terms.log_norm - 0.5 * canonical @ terms.precision @ canonical)


def log_base_prior_grad(w: np.ndarray, terms: BasePriorTerms) -> Tuple[float, np.ndarray]:
    """先验对数密度及其对未规范化 w 的梯度"""
    canonical = canonicalize_base(w)
    grad_canonical = -(terms.precision @ canonical)
    value = terms.log_norm + 0.5 * canonical @ grad_canonical
    # ∂c/∂w = softmax(w)
    grad = grad_canonical - softmax(w) * grad_canonical.sum()
    return float(value), grad


def invert_warp(h: ArrayOrWarp, grid: TimeGrid) -> np.ndarray:
    """扭曲函数在网格上的分段线性逆"""
    inverse = np.interp(grid.points, _values(h), grid.points)
    inverse[0] = grid.start
    inverse[-1] = grid.end
    return inverse


@dataclass
class CenteredWarps:
    """均值扭曲中心化的结果"""
    warps: np.ndarray          # N×p
    bases: np.ndarray          # N×(p−1)
    mean_inverse: np.ndarray   # 平均扭曲的逆，用于把因子映射到中心化时间轴


def mean_warp_center(warps: np.ndarray, bases: np.ndarray, grid: TimeGrid) -> CenteredWarps:
    """
    事后中心化：使各网格点上扭曲的样本均值等于 t_j

    以 h̃_i = h_i ∘ h̄⁻¹ 替换每个扭曲，h̄ 为样本平均扭曲；分段线性插值下
    平均扭曲在其分段线性逆上的取值正好回到网格点。
    """
    warps = np.asarray(warps, dtype=float)
    bases = np.asarray(bases, dtype=float)
    mean_warp = warps.mean(axis=0)
    if np.array_equal(mean_warp, grid.points):
        return CenteredWarps(warps=warps.copy(), bases=bases.copy(), mean_inverse=mean_warp)
    mean_inverse = invert_warp(mean_warp, grid)

    centered = np.empty_like(warps)
    for i, h in enumerate(warps):
        adjusted = np.interp(mean_inverse, grid.points, h)
        adjusted[0] = grid.start
        adjusted[-1] = grid.end
        centered[i] = _strictly_increasing(adjusted)

    centered_bases = np.vstack([base_from_warp(h, grid) for h in centered])
    logger.debug("均值扭曲中心化完成",
                 max_shift=float(np.max(np.abs(mean_warp - grid.points))),
                 n_functions=int(warps.shape[0]))
    return CenteredWarps(warps=centered, bases=centered_bases, mean_inverse=mean_inverse)
