"""
网格与惩罚矩阵模块

构造公共时间网格，以及所有其他模块使用的惩罚/协方差矩阵。
P2 取曲率惩罚 K = DᵀD 的伪逆（D为按 Δt⁻² 缩放的二阶差分算子），
P1 = BBᵀ 为 span{1, t} 上的正交投影；两者值域正交，Σ⁻¹ = P1⁻ + P2⁻ 精确成立。
"""

from typing import Tuple

import numpy as np

from ..config import get_logger
from ..models import PenaltySet, TimeGrid
from ..utils.exceptions import GridError, PenaltyConstructionError
from ..utils.validation import Validator

logger = get_logger("fda_grid")

PINV_RCOND = 1e-10
INVERSE_CHECK_TOL = 1e-6


def build_time_grid(t_start: float, t_end: float, p: int) -> TimeGrid:
    """
    构造等间距网格

    Args:
        t_start: 起点
        t_end: 终点
        p: 点数，至少为4

    Returns:
        TimeGrid: 首尾分别为 t_start 与 t_end 的网格

    Raises:
        GridError: p < 4 或 t_end ≤ t_start
    """
    if int(p) != p or p < 4:
        raise GridError("网格点数至少为4", {"p": p})
    if not np.isfinite(t_start) or not np.isfinite(t_end) or not t_end > t_start:
        raise GridError("网格终点必须大于起点", {"t_start": t_start, "t_end": t_end})
    points = np.linspace(float(t_start), float(t_end), int(p))
    return TimeGrid(points=points, spacing=(float(t_end) - float(t_start)) / (int(p) - 1))


def second_difference_matrix(grid: TimeGrid) -> np.ndarray:
    """(p−2)×p 二阶差分算子，按 Δt⁻² 缩放"""
    p = grid.p
    D = np.zeros((p - 2, p))
    rows = np.arange(p - 2)
    D[rows, rows] = 1.0
    D[rows, rows + 1] = -2.0
    D[rows, rows + 2] = 1.0
    return D / grid.spacing ** 2


def linear_basis(grid: TimeGrid) -> np.ndarray:
    """span{1, t} 的 p×2 正交基"""
    t = grid.points
    design = np.column_stack([np.ones_like(t), t - t.mean()])
    Q, _ = np.linalg.qr(design)
    return Q


def pinv_symmetric(matrix: np.ndarray, rcond: float = PINV_RCOND) -> Tuple[np.ndarray, int]:
    """
    对称矩阵的伪逆（特征分解，相对截断）

    Returns:
        Tuple[np.ndarray, int]: 伪逆与数值秩
    """
    eigvals, eigvecs = np.linalg.eigh(matrix)
    cutoff = rcond * np.max(np.abs(eigvals))
    keep = eigvals > cutoff
    inv = (eigvecs[:, keep] / eigvals[keep]) @ eigvecs[:, keep].T
    return 0.5 * (inv + inv.T), int(np.count_nonzero(keep))


def build_penalty_set(grid: TimeGrid) -> PenaltySet:
    """
    在给定网格上构造惩罚矩阵集合

    Raises:
        PenaltyConstructionError: 伪逆秩不对或 Σ⁻¹Σ 偏离单位阵（网格病态）
    """
    p = grid.p
    D = second_difference_matrix(grid)
    K = D.T @ D
    P2, rank = pinv_symmetric(K)
    if rank != p - 2:
        raise PenaltyConstructionError("曲率惩罚的伪逆秩不正确", {"rank": rank, "expected": p - 2})

    B = linear_basis(grid)
    P1 = B @ B.T
    sigma = P1 + P2
    sigma_inv = P1 + K

    residual = np.max(np.abs(sigma_inv @ sigma - np.eye(p)))
    if not np.isfinite(residual) or residual > INVERSE_CHECK_TOL:
        raise PenaltyConstructionError("Σ的逆不准确，网格可能病态", {"residual": float(residual)})

    sign, log_det = np.linalg.slogdet(sigma_inv)
    if sign <= 0:
        raise PenaltyConstructionError("Σ⁻¹不正定")

    logger.debug("惩罚矩阵构造完成", p=p, spacing=grid.spacing, inverse_residual=float(residual))
    return PenaltySet(
        grid=grid,
        p1=P1,
        p2=P2,
        sigma=sigma,
        p1_pinv=P1,
        p2_pinv=K,
        sigma_inv=sigma_inv,
        log_det_sigma_inv=float(log_det),
        basis=B,
    )


def build_penalty_pair(grid: TimeGrid) -> Tuple[PenaltySet, PenaltySet]:
    """完整网格与截断 (p−1) 网格上的两套惩罚矩阵"""
    return build_penalty_set(grid), build_penalty_set(grid.reduced())


def sigma_f(pen: PenaltySet, eta: float, lam: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    因子先验协方差 Σ_f = η⁻¹P1 + λ⁻¹P2 及其精度 ηP1⁻ + λP2⁻

    Raises:
        ValidationError: eta 或 lam 非正
    """
    eta = Validator.validate_positive(eta, "eta")
    lam = Validator.validate_positive(lam, "lambda")
    covariance = pen.p1 / eta + pen.p2 / lam
    precision = eta * pen.p1_pinv + lam * pen.p2_pinv
    return covariance, precision
