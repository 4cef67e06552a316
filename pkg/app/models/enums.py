"""
枚举类型定义模块

定义系统中使用的各种枚举类型，包括插值方式、推断引擎、分组规则等。
"""

from enum import Enum


class Interpolation(str, Enum):
    """观测函数在扭曲时间点上的插值方式"""
    MONOTONE_CUBIC = "monotone_cubic"   # 保单调分段三次（PCHIP）
    LINEAR = "linear"                   # 分段线性


class Engine(str, Enum):
    """推断引擎"""
    AVB = "avb"                  # 改进变分贝叶斯
    MCMC = "mcmc"                # Metropolis-within-Gibbs
    AVB_MCMC = "avb+mcmc"        # 先AVB，再用其结果初始化链


class AnnealMode(str, Enum):
    """γ_w退火方式"""
    ADAPTIVE = "adaptive"        # 准则停滞时减半
    SCHEDULE = "schedule"        # 显式 (倍数, 迭代阈值) 列表
    NONE = "none"                # 不退火


class ProposalKind(str, Enum):
    """w的随机游走提议分布"""
    SPHERICAL = "spherical"          # 各向同性高斯
    PRIOR_SHAPED = "prior_shaped"    # 按基函数先验协方差整形


class GroupingMode(str, Enum):
    """按权重分组的规则"""
    QUADRANT_CENTERED_BOTH = "quadrant_centered_both"          # z1、z2都中心化后按象限
    QUADRANT_CENTERED_Z1_ONLY = "quadrant_centered_z1_only"    # 仅z1中心化
    Z2_THRESHOLD = "z2_threshold"                              # z2落在[lo, hi]内外三组
    Z2_SIGN = "z2_sign"                                        # z2正负两组


class RunStatus(str, Enum):
    """命令运行状态"""
    RUNNING = "running"
    COMPLETED = "completed"
    FAILED = "failed"
