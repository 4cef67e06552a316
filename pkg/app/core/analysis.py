"""
结果分析模块

配准质量（sls：配准后与配准前一阶导数截面方差积分之比，越小越好）、
按权重分组以及因子恢复程度评分。
"""

from typing import Dict, Sequence, Tuple, Union

import numpy as np
from scipy.integrate import trapezoid
from scipy.linalg import subspace_angles

from ..config import get_logger
from ..models import ChainSamples, GroupAssignment, GroupingMode, LatentState, TimeGrid
from ..utils.exceptions import DegenerateDataError, ShapeMismatchError
from ..utils.validation import ValidationError, Validator

logger = get_logger("analysis")

DEFAULT_Z2_LOW = -0.1
DEFAULT_Z2_HIGH = 0.1
# 截面方差积分相对导数平方积分低于该比例即视为零
DEGENERATE_RTOL = 1e-12

N_GROUPS = {
    GroupingMode.QUADRANT_CENTERED_BOTH: 4,
    GroupingMode.QUADRANT_CENTERED_Z1_ONLY: 4,
    GroupingMode.Z2_THRESHOLD: 3,
    GroupingMode.Z2_SIGN: 2,
}


def _derivatives(values: np.ndarray, grid: TimeGrid) -> np.ndarray:
    return np.gradient(values, grid.spacing, axis=0, edge_order=1)


def _derivative_variance_integral(derivatives: np.ndarray, grid: TimeGrid) -> float:
    return float(trapezoid(np.var(derivatives, axis=1), grid.points))


def sls(original: np.ndarray, registered: np.ndarray, grid: TimeGrid) -> float:
    """
    配准后与配准前一阶导数截面方差积分之比

    导数用中心差分（端点单侧），积分用梯形公式。

    Args:
        original: p×N 原始函数
        registered: p×N 配准后函数
        grid: 公共网格

    Raises:
        ShapeMismatchError: 两个矩阵形状不同或行数不等于网格点数
        DegenerateDataError: 原始函数导数完全相同（分母为零）
    """
    original = Validator.validate_finite(original, "original")
    registered = Validator.validate_finite(registered, "registered")
    if original.shape != registered.shape or original.shape[0] != grid.p:
        raise ShapeMismatchError("原始与配准矩阵形状不一致",
                                 {"original": original.shape, "registered": registered.shape, "p": grid.p})

    original_derivatives = _derivatives(original, grid)
    denominator = _derivative_variance_integral(original_derivatives, grid)
    scale = float(trapezoid(np.mean(original_derivatives ** 2, axis=1), grid.points))
    if denominator <= DEGENERATE_RTOL * scale:
        raise DegenerateDataError("原始函数的导数没有截面方差，sls无定义",
                                  {"variance_integral": denominator, "scale": scale})
    return _derivative_variance_integral(_derivatives(registered, grid), grid) / denominator


def sls_grouped(original: np.ndarray, registered: np.ndarray, groups: GroupAssignment,
                grid: TimeGrid) -> float:
    """
    各组 sls 之和

    少于两个成员的组没有截面方差，记录警告后跳过。

    Raises:
        DegenerateDataError: 没有可用的组
    """
    original = np.asarray(original, dtype=float)
    registered = np.asarray(registered, dtype=float)
    if groups.n_functions != original.shape[1]:
        raise ShapeMismatchError("分组数量与函数数量不一致",
                                 {"groups": groups.n_functions, "functions": original.shape[1]})

    total, used = 0.0, 0
    for label, members in groups.members().items():
        if len(members) < 2:
            logger.warning("组成员少于2个，已排除", label=label, size=len(members))
            continue
        total += sls(original[:, members], registered[:, members], grid)
        used += 1
    if used == 0:
        raise DegenerateDataError("没有成员数至少为2的组")
    return total


def _quadrant_labels(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    # 0 同时算作正负号，取编号最小的象限
    return np.select(
        [(u >= 0) & (v >= 0), (u <= 0) & (v >= 0), (u <= 0) & (v <= 0)],
        [1, 2, 3],
        default=4,
    )


def group_by_weights(z1, z2, mode: Union[GroupingMode, str] = GroupingMode.QUADRANT_CENTERED_BOTH,
                     z2_low: float = DEFAULT_Z2_LOW, z2_high: float = DEFAULT_Z2_HIGH) -> GroupAssignment:
    """
    按权重分组

    象限模式：1 (+,+)、2 (−,+)、3 (−,−)、4 (+,−)，中心化即减去样本均值；
    阈值模式：1 为 [z2_low, z2_high] 内，2 为低于下界，3 为高于上界；
    符号模式：1 为 z2 ≥ 0，2 为 z2 < 0。
    """
    mode = GroupingMode(mode)
    z1 = Validator.validate_finite(z1, "z1").ravel()
    z2 = Validator.validate_finite(z2, "z2").ravel()
    if z1.size != z2.size:
        raise ShapeMismatchError("z1 与 z2 长度不同", {"z1": z1.size, "z2": z2.size})

    rule: Dict = {"mode": mode.value}
    if mode in (GroupingMode.QUADRANT_CENTERED_BOTH, GroupingMode.QUADRANT_CENTERED_Z1_ONLY):
        center_z2 = mode is GroupingMode.QUADRANT_CENTERED_BOTH
        z1_center = float(z1.mean())
        z2_center = float(z2.mean()) if center_z2 else 0.0
        labels = _quadrant_labels(z1 - z1_center, z2 - z2_center)
        rule.update(centered_z1=True, centered_z2=center_z2, z1_center=z1_center, z2_center=z2_center)
    elif mode is GroupingMode.Z2_THRESHOLD:
        if not z2_low <= z2_high:
            raise ValidationError("z2_low 必须不大于 z2_high", "z2_low", z2_low)
        labels = np.where(z2 < z2_low, 2, np.where(z2 > z2_high, 3, 1))
        rule.update(centered_z1=False, centered_z2=False, z2_low=float(z2_low), z2_high=float(z2_high))
    else:
        labels = np.where(z2 >= 0, 1, 2)
        rule.update(centered_z1=False, centered_z2=False)
    return GroupAssignment(labels=labels.astype(int), rule=rule)


def group_membership_probabilities(chain: Union[ChainSamples, Sequence[LatentState]],
                                   mode: Union[GroupingMode, str] = GroupingMode.QUADRANT_CENTERED_BOTH,
                                   z2_low: float = DEFAULT_Z2_LOW, z2_high: float = DEFAULT_Z2_HIGH) -> np.ndarray:
    """
    每个函数落入各组的后验频率

    Returns:
        np.ndarray: N×G，第 k 列对应标签 k+1，每行和为1
    """
    draws = chain.draws if isinstance(chain, ChainSamples) else list(chain)
    if not draws:
        raise DegenerateDataError("没有样本可统计分组频率")
    mode = GroupingMode(mode)
    counts = np.zeros((draws[0].n_functions, N_GROUPS[mode]))
    rows = np.arange(counts.shape[0])
    for draw in draws:
        labels = group_by_weights(draw.z1, draw.z2, mode, z2_low, z2_high).labels
        counts[rows, labels - 1] += 1
    return counts / len(draws)


def factor_recovery_score(est_f1, est_f2, true_basis, rank_tol: float = 1e-10) -> Tuple[np.ndarray, bool]:
    """
    估计因子张成空间与真实空间的典型相关（主角余弦，降序）

    Args:
        est_f1, est_f2: 估计的两个因子
        true_basis: p×2 真实因子
        rank_tol: 判断秩亏的相对奇异值阈值

    Returns:
        Tuple[np.ndarray, bool]: 两个相关系数；估计秩亏时第二个记为0并返回True

    Raises:
        DegenerateDataError: 真实因子秩不为2
    """
    estimate = np.column_stack([np.asarray(est_f1, dtype=float), np.asarray(est_f2, dtype=float)])
    truth = np.asarray(true_basis, dtype=float)
    if truth.shape != estimate.shape:
        raise ShapeMismatchError("真实因子形状不一致", {"truth": truth.shape, "estimate": estimate.shape})
    if np.linalg.matrix_rank(truth) < 2:
        raise DegenerateDataError("真实因子秩不为2")

    u, s, _ = np.linalg.svd(estimate, full_matrices=False)
    rank = int(np.sum(s > rank_tol * max(s[0], np.finfo(float).tiny)))
    if rank == 2:
        correlations = np.sort(np.cos(subspace_angles(estimate, truth)))[::-1]
        return np.clip(correlations, 0.0, 1.0), False

    logger.warning("估计因子秩亏", rank=rank)
    if rank == 0:
        return np.zeros(2), True
    first = float(np.cos(subspace_angles(u[:, :1], truth)[0]))
    return np.array([np.clip(first, 0.0, 1.0), 0.0]), True
