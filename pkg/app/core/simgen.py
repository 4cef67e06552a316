"""
模拟数据生成模块

两个带完整真值的模拟数据集：
- 第一集：21个两个高斯凸起的随机组合，经参数 a_i 在 [−1, 1] 等间距的指数型扭曲；
- 第二集：双因子线性组合，z2 正负各半，扭曲参数随机。

观测值由解析的配准函数在扭曲时间点上直接求值，真值中没有插值误差。
true_warps 是把观测函数配准回去的扭曲（生成扭曲的逆）。
"""

from typing import Optional

import numpy as np

from ..config import get_logger
from ..models import Dataset, FactorSpec, SimDataset
from ..utils.validation import ValidationError
from .fda_grid import build_time_grid

logger = get_logger("simgen")

SET1_FUNCTIONS = 21
SET1_WEIGHT_MEAN = 1.0
SET1_WEIGHT_SD = 0.25
SET1_CENTERS = (1.5, -1.5)


def kr_warp(a: float, t, t_start: float = -3.0, t_end: float = 3.0):
    """
    指数型扭曲 h(t) = t_start + L·(e^{a(t−t_start)/L} − 1)/(e^a − 1)，L = t_end − t_start

    a = 0 时为恒等映射；两个端点精确保持。
    """
    t = np.asarray(t, dtype=float)
    if a == 0:
        return t.copy() if t.ndim else float(t)
    span = t_end - t_start
    h = t_start + span * np.expm1(a * (t - t_start) / span) / np.expm1(a)
    h = np.where(t == t_start, t_start, np.where(t == t_end, t_end, h))
    return h if h.ndim else float(h)


def kr_warp_inverse(a: float, u, t_start: float = -3.0, t_end: float = 3.0):
    """kr_warp 的解析逆"""
    u = np.asarray(u, dtype=float)
    if a == 0:
        return u.copy() if u.ndim else float(u)
    span = t_end - t_start
    t = t_start + (span / a) * np.log1p((u - t_start) * np.expm1(a) / span)
    t = np.where(u == t_start, t_start, np.where(u == t_end, t_end, t))
    return t if t.ndim else float(t)


def _set1_bumps(t: np.ndarray) -> np.ndarray:
    return np.column_stack([np.exp(-0.5 * (t - center) ** 2) for center in SET1_CENTERS])


def simulate_set1(p: int = 61, seed: int = 0, n: int = SET1_FUNCTIONS) -> SimDataset:
    """
    第一模拟集

    配准函数 c1·e^{−(t−1.5)²/2} + c2·e^{−(t+1.5)²/2}，c ~ N(1, 0.25²)；
    a_i 在 [−1, 1] 上等间距，n 为奇数时中间的函数不扭曲。
    """
    if n < 2:
        raise ValidationError("函数个数至少为2", "n", n)
    grid = build_time_grid(-3.0, 3.0, p)
    t = grid.points
    rng = np.random.default_rng(seed)

    a = (2.0 * np.arange(n) - (n - 1)) / (n - 1)
    weights = rng.normal(SET1_WEIGHT_MEAN, SET1_WEIGHT_SD, size=(n, 2))
    bumps = _set1_bumps(t)

    registered = np.column_stack([bumps @ c for c in weights])
    observed = np.column_stack([_set1_bumps(kr_warp(a_i, t)) @ c for a_i, c in zip(a, weights)])
    true_warps = np.vstack([kr_warp_inverse(a_i, t) for a_i in a])

    logger.debug("第一模拟集生成完成", n=n, p=p, seed=seed)
    return SimDataset(
        dataset=Dataset(values=observed, grid=grid),
        set_id=1,
        seed=seed,
        true_registered=registered,
        true_warps=true_warps,
        true_weights=weights,
        weight_names=("c1", "c2"),
        warp_params=a,
        true_factors=bumps,
    )


def simulate_set2(p: int = 61, n: int = 20, seed: int = 0,
                  factor_spec: Optional[FactorSpec] = None) -> SimDataset:
    """
    第二模拟集

    配准函数 z1·f1 + z2·f2，z1 ~ N(z1_mean, z1_sd²)，z2 = s·|N(z2_mean, z2_sd²)|，
    s = ±1 各占一半并随机排列；扭曲参数 a_i ~ U(−1, 1)。组标签 1 为 z2 > 0，2 为 z2 < 0。

    Raises:
        ValidationError: n 不是正偶数
    """
    if n < 2 or n % 2:
        raise ValidationError("第二模拟集的函数个数必须为正偶数", "n", n)
    spec = factor_spec or FactorSpec()
    grid = build_time_grid(spec.t_start, spec.t_end, p)
    t = grid.points
    rng = np.random.default_rng(seed)

    signs = rng.permutation(np.repeat([1.0, -1.0], n // 2))
    z1 = rng.normal(spec.z1_mean, spec.z1_sd, size=n)
    z2 = signs * np.abs(rng.normal(spec.z2_mean, spec.z2_sd, size=n))
    a = rng.uniform(-1.0, 1.0, size=n)

    factors = spec.factors(t)
    weights = np.column_stack([z1, z2])
    registered = np.column_stack([factors @ w for w in weights])
    observed = np.column_stack([
        spec.factors(kr_warp(a_i, t, spec.t_start, spec.t_end)) @ w for a_i, w in zip(a, weights)
    ])
    true_warps = np.vstack([kr_warp_inverse(a_i, t, spec.t_start, spec.t_end) for a_i in a])

    logger.debug("第二模拟集生成完成", n=n, p=p, seed=seed)
    return SimDataset(
        dataset=Dataset(values=observed, grid=grid),
        set_id=2,
        seed=seed,
        true_registered=registered,
        true_warps=true_warps,
        true_weights=weights,
        weight_names=("z1", "z2"),
        warp_params=a,
        true_factors=factors,
        group_labels=np.where(signs > 0, 1, 2),
    )
