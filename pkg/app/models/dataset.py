"""
数据集与分组数据模型模块

定义观测数据集、带真值的模拟数据集、第二模拟集的因子设定和分组结果。
"""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field

from .grid import TimeGrid
from ..utils.validation import ValidationError, Validator


@dataclass(frozen=True, eq=False)
class Dataset:
    """公共网格上的p×N观测矩阵，每列一个函数"""

    values: np.ndarray
    grid: TimeGrid
    names: Tuple[str, ...] = ()

    def __post_init__(self):
        values = Validator.validate_finite(self.values, "values")
        Validator.validate_shape(values, (self.grid.p, None), "values")
        if values.shape[1] < 2:
            raise ValidationError("至少需要两个函数", "values", values.shape)
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        names = tuple(self.names) or tuple(f"f{i + 1}" for i in range(values.shape[1]))
        if len(names) != values.shape[1]:
            raise ValidationError("函数名数量与列数不一致", "names", len(names))
        object.__setattr__(self, "names", names)

    @property
    def n_functions(self) -> int:
        return int(self.values.shape[1])

    @property
    def p(self) -> int:
        return self.grid.p

    @property
    def curves(self) -> np.ndarray:
        """N×p视图，每行一个函数"""
        return self.values.T

    def subset(self, indices) -> "Dataset":
        """按列下标取子样本"""
        idx = list(indices)
        return Dataset(values=self.values[:, idx], grid=self.grid, names=tuple(self.names[i] for i in idx))


class FactorSpec(BaseModel):
    """第二模拟集的因子形状与权重分布（高斯型凸起）"""

    t_start: float = Field(default=-3.0, description="定义域起点")
    t_end: float = Field(default=3.0, description="定义域终点")
    f1_center: float = Field(default=-1.0, description="第一因子凸起中心")
    f1_width: float = Field(default=0.9, gt=0, description="第一因子凸起宽度")
    f1_height: float = Field(default=1.0, description="第一因子凸起高度")
    f2_center: float = Field(default=1.5, description="第二因子凸起中心（较晚）")
    f2_width: float = Field(default=0.5, gt=0, description="第二因子凸起宽度")
    f2_height: float = Field(default=1.0, description="第二因子凸起高度")
    z1_mean: float = Field(default=1.0, description="z1均值")
    z1_sd: float = Field(default=0.1, ge=0, description="z1标准差")
    z2_mean: float = Field(default=0.5, description="|z2|所取正态的均值")
    z2_sd: float = Field(default=0.1, ge=0, description="|z2|所取正态的标准差")

    def factors(self, t: np.ndarray) -> np.ndarray:
        """在t上求两个因子，返回 len(t)×2"""
        f1 = self.f1_height * np.exp(-0.5 * ((t - self.f1_center) / self.f1_width) ** 2)
        f2 = self.f2_height * np.exp(-0.5 * ((t - self.f2_center) / self.f2_width) ** 2)
        return np.column_stack([f1, f2])


@dataclass
class SimDataset:
    """模拟数据集及其真值"""
    dataset: Dataset
    set_id: int
    seed: int
    true_registered: np.ndarray               # p×N
    true_warps: np.ndarray                    # N×p
    true_weights: np.ndarray                  # N×2
    weight_names: Tuple[str, str]             # ("c1","c2") 或 ("z1","z2")
    warp_params: np.ndarray                   # 每个函数的 a_i
    true_factors: Optional[np.ndarray] = None  # p×2
    group_labels: Optional[np.ndarray] = None

    @property
    def observed(self) -> np.ndarray:
        return self.dataset.values

    def truth_dict(self) -> Dict[str, Any]:
        """真值侧车JSON内容"""
        truth: Dict[str, Any] = {
            "set_id": self.set_id,
            "seed": self.seed,
            "grid": {"t_start": self.dataset.grid.start, "t_end": self.dataset.grid.end, "p": self.dataset.p},
            "names": list(self.dataset.names),
            "warp_params": self.warp_params.tolist(),
            "true_warps": self.true_warps.tolist(),
            "true_registered": self.true_registered.tolist(),
            "weight_names": list(self.weight_names),
            "true_weights": self.true_weights.tolist(),
        }
        if self.true_factors is not None:
            truth["true_factors"] = self.true_factors.tolist()
        if self.group_labels is not None:
            truth["group_labels"] = self.group_labels.astype(int).tolist()
        return truth


@dataclass
class GroupAssignment:
    """按权重得到的分组结果，rule足以由权重重新导出标签"""
    labels: np.ndarray
    rule: Dict[str, Any] = field(default_factory=dict)

    @property
    def n_functions(self) -> int:
        return int(self.labels.size)

    def members(self) -> Dict[int, List[int]]:
        """标签到函数下标列表的映射（按标签排序）"""
        return {int(label): np.flatnonzero(self.labels == label).tolist() for label in np.unique(self.labels)}
