"""
数据模型模块

导出所有数据模型和枚举类型，提供统一的数据结构定义。
"""

# 枚举类型
from .enums import (
    Interpolation, Engine, AnnealMode, ProposalKind, GroupingMode, RunStatus
)

# 网格与扭曲
from .grid import TimeGrid, PenaltySet, BaseFunction, Warp, validate_warp_values

# 推断状态
from .state import (
    LatentState, QState, AvbDiagnostics, AvbResult, ChainSamples, ChainSummary
)

# 数据集
from .dataset import Dataset, SimDataset, FactorSpec, GroupAssignment

# 运行清单
from .manifest import RunManifest, RunMetrics

__all__ = [
    # 枚举类型
    "Interpolation", "Engine", "AnnealMode", "ProposalKind", "GroupingMode", "RunStatus",

    # 网格与扭曲
    "TimeGrid", "PenaltySet", "BaseFunction", "Warp", "validate_warp_values",

    # 推断状态
    "LatentState", "QState", "AvbDiagnostics", "AvbResult", "ChainSamples", "ChainSummary",

    # 数据集
    "Dataset", "SimDataset", "FactorSpec", "GroupAssignment",

    # 运行清单
    "RunManifest", "RunMetrics"
]
