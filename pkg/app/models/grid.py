"""
网格与惩罚矩阵数据模型模块

定义公共观测网格、惩罚矩阵集合、基函数与扭曲函数。构造后不可变，可跨线程只读共享。
"""

from dataclasses import dataclass, field

import numpy as np

from ..utils.exceptions import GridError, WarpError

# 构造函数 build_time_grid 对外要求 p ≥ 4；基函数先验所用的截断网格为 p−1 点
MIN_GRID_POINTS = 3
WARP_ENDPOINT_TOL = 1e-10


def _readonly(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=float)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """等间距观测网格 t_1..t_p"""

    points: np.ndarray
    spacing: float

    def __post_init__(self):
        points = _readonly(self.points)
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "spacing", float(self.spacing))

        if points.ndim != 1 or points.size < MIN_GRID_POINTS:
            raise GridError(f"网格至少需要{MIN_GRID_POINTS}个点", {"p": int(points.size)})
        if not np.all(np.isfinite(points)):
            raise GridError("网格点必须为有限值")
        steps = np.diff(points)
        if np.any(steps <= 0):
            raise GridError("网格点必须严格递增")
        tol = 1e-12 * max(1.0, float(np.max(np.abs(points))))
        if np.max(np.abs(steps - self.spacing)) >= tol:
            raise GridError("网格必须等间距", {"spacing": self.spacing})

    @property
    def p(self) -> int:
        """网格点数"""
        return int(self.points.size)

    @property
    def start(self) -> float:
        return float(self.points[0])

    @property
    def end(self) -> float:
        return float(self.points[-1])

    @property
    def span(self) -> float:
        """t_p − t_1"""
        return float(self.points[-1] - self.points[0])

    def reduced(self) -> "TimeGrid":
        """截去最后一点的 (p−1) 点网格，供基函数先验使用"""
        return TimeGrid(points=self.points[:-1], spacing=self.spacing)


@dataclass(frozen=True, eq=False)
class PenaltySet:
    """
    某一网格上的惩罚矩阵集合

    p1 惩罚常数和线性方向上偏离均值的变化，p2 惩罚曲率方向；
    sigma = p1 + p2，*_pinv 为对应的精度部分。
    """

    grid: TimeGrid
    p1: np.ndarray
    p2: np.ndarray
    sigma: np.ndarray
    p1_pinv: np.ndarray
    p2_pinv: np.ndarray
    sigma_inv: np.ndarray
    log_det_sigma_inv: float = 0.0
    basis: np.ndarray = field(default=None)   # span{1, t} 的正交基 B (p×2)

    def __post_init__(self):
        for name in ("p1", "p2", "sigma", "p1_pinv", "p2_pinv", "sigma_inv", "basis"):
            value = getattr(self, name)
            if value is not None:
                object.__setattr__(self, name, _readonly(value))

    @property
    def p(self) -> int:
        return self.grid.p


@dataclass(frozen=True, eq=False)
class BaseFunction:
    """基函数 w_i 在 t_1..t_{p−1} 上的取值"""

    values: np.ndarray

    def __post_init__(self):
        values = _readonly(self.values)
        if values.ndim != 1:
            raise WarpError("基函数必须是一维向量")
        if not np.all(np.isfinite(values)):
            raise WarpError("基函数必须全部为有限值")
        object.__setattr__(self, "values", values)


@dataclass(frozen=True, eq=False)
class Warp:
    """扭曲函数 h 在网格上的取值：端点固定、严格递增"""

    values: np.ndarray
    grid: TimeGrid

    def __post_init__(self):
        values = _readonly(self.values)
        object.__setattr__(self, "values", values)
        validate_warp_values(values, self.grid)


def validate_warp_values(values: np.ndarray, grid: TimeGrid) -> None:
    """
    验证扭曲函数取值

    Raises:
        WarpError: 长度不符、端点偏离或不严格递增
    """
    if values.shape != (grid.p,):
        raise WarpError("扭曲函数长度必须与网格一致", {"expected": grid.p, "actual": values.shape})
    if abs(values[0] - grid.start) > WARP_ENDPOINT_TOL or abs(values[-1] - grid.end) > WARP_ENDPOINT_TOL:
        raise WarpError("扭曲函数必须保持端点不变")
    if np.any(np.diff(values) <= 0):
        raise WarpError("扭曲函数必须严格递增")
