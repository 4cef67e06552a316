"""
推断状态数据模型模块

定义潜变量状态（MCMC的一次配置）、变分后验状态、链样本以及两种引擎的结果结构。
"""

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from ..utils.validation import ValidationError


def _as_float_array(value, ndim: int, name: str) -> np.ndarray:
    array = np.asarray(value, dtype=float)
    if array.ndim != ndim:
        raise ValidationError(f"{name} 维数应为{ndim}", name, array.shape)
    return array


@dataclass(frozen=True, eq=False)
class LatentState:
    """
    模型参数的一次完整取值

    z0只保存前N−1个自由分量，最后一个分量由和为零约束导出。
    bases为N×(p−1)矩阵，每行一个基函数。
    """

    f1: np.ndarray
    f2: np.ndarray
    z0_free: np.ndarray
    z1: np.ndarray
    z2: np.ndarray
    var_z0: float
    var_z1: float
    var_z2: float
    eta_f: float
    lambda_f: float
    bases: np.ndarray

    def __post_init__(self):
        for name in ("f1", "f2", "z0_free", "z1", "z2"):
            object.__setattr__(self, name, _as_float_array(getattr(self, name), 1, name))
        object.__setattr__(self, "bases", _as_float_array(self.bases, 2, "bases"))

        n = self.z1.size
        p = self.f1.size
        if n < 2:
            raise ValidationError("至少需要两个函数", "z1", n)
        if self.z2.size != n or self.z0_free.size != n - 1:
            raise ValidationError("权重向量长度不一致", "z0_free", self.z0_free.size)
        if self.f2.size != p or self.bases.shape != (n, p - 1):
            raise ValidationError("因子或基函数形状不一致", "bases", self.bases.shape)
        for name in ("var_z0", "var_z1", "var_z2", "eta_f", "lambda_f"):
            value = float(getattr(self, name))
            if not np.isfinite(value) or value <= 0:
                raise ValidationError(f"{name} 必须为正数", name, value)
            object.__setattr__(self, name, value)

    @property
    def n_functions(self) -> int:
        return int(self.z1.size)

    @property
    def p(self) -> int:
        return int(self.f1.size)

    @property
    def z0(self) -> np.ndarray:
        """完整的N维z0，末项为 −Σ 自由分量"""
        return np.append(self.z0_free, -np.sum(self.z0_free))


@dataclass(frozen=True, eq=False)
class QState:
    """
    变分后验参数

    形状参数在初始化后固定，只有速率参数更新。registered 缓存了
    当前基函数下的配准曲线（N×p），随 bases 一起替换。
    """

    mu_f1: np.ndarray
    mu_f2: np.ndarray
    cov_f1: np.ndarray
    cov_f2: np.ndarray
    mu_z0: np.ndarray
    var_z0q: np.ndarray
    mu_z1: np.ndarray
    var_z1q: np.ndarray
    mu_z2: np.ndarray
    var_z2q: np.ndarray
    ig_z0: Tuple[float, float]
    ig_z1: Tuple[float, float]
    ig_z2: Tuple[float, float]
    g_eta: Tuple[float, float]
    g_lambda: Tuple[float, float]
    bases: np.ndarray
    registered: np.ndarray
    criterion_trace: Tuple[float, ...] = ()

    @property
    def n_functions(self) -> int:
        return int(self.mu_z1.size)

    @property
    def p(self) -> int:
        return int(self.mu_f1.size)

    @property
    def mu_z0_full(self) -> np.ndarray:
        """E[z0]，末项为 −Σ µ"""
        return np.append(self.mu_z0, -np.sum(self.mu_z0))

    @property
    def second_moment_z0_full(self) -> np.ndarray:
        """E[z0²]；末项方差为各自由分量方差之和"""
        last = np.sum(self.var_z0q) + np.sum(self.mu_z0) ** 2
        return np.append(self.var_z0q + self.mu_z0 ** 2, last)

    def check_invariants(self) -> None:
        """
        检查协方差对称正定、方差与形状速率参数为正

        Raises:
            ValidationError: 任一不变量不成立
        """
        for name in ("cov_f1", "cov_f2"):
            cov = getattr(self, name)
            if not np.allclose(cov, cov.T, rtol=0, atol=1e-10 * max(1.0, np.max(np.abs(cov)))):
                raise ValidationError(f"{name} 不对称", name)
            if np.linalg.eigvalsh(cov).min() <= 0:
                raise ValidationError(f"{name} 不正定", name)
        for name in ("var_z0q", "var_z1q", "var_z2q"):
            if np.any(getattr(self, name) <= 0):
                raise ValidationError(f"{name} 必须全部为正", name)
        for name in ("ig_z0", "ig_z1", "ig_z2", "g_eta", "g_lambda"):
            shape, rate = getattr(self, name)
            if shape <= 0 or rate <= 0:
                raise ValidationError(f"{name} 的形状与速率必须为正", name, (shape, rate))


@dataclass
class AvbDiagnostics:
    """AVB运行诊断信息"""
    criterion_trace: List[float] = field(default_factory=list)   # 每次完整迭代后的准则值
    gamma_w_trace: List[float] = field(default_factory=list)     # 每次迭代使用的γ_w
    max_dw_trace: List[float] = field(default_factory=list)      # 每次迭代基函数最大变化
    converged: bool = False
    iterations: int = 0
    monotone_violations: int = 0      # 同一γ_w下准则下降的次数
    init_fallback: bool = False       # 初始化时第二因子是否退回平滑方向
    wstep_failures: int = 0           # w步未改进而保留原值的次数


@dataclass
class AvbResult:
    """AVB结果：拟合状态及均值扭曲中心化后的扭曲、配准曲线与因子"""
    q: QState
    warps: np.ndarray          # N×p
    bases: np.ndarray          # N×(p−1)
    registered: np.ndarray     # N×p
    factors: np.ndarray        # p×2
    diagnostics: AvbDiagnostics


@dataclass
class ChainSamples:
    """MCMC链的稀疏存储样本"""
    draws: List[LatentState]
    acceptance_rates: np.ndarray
    rng_seed: int
    log_joint_trace: np.ndarray = field(default_factory=lambda: np.empty(0))
    steps: np.ndarray = field(default_factory=lambda: np.empty(0))
    stored_iterations: List[int] = field(default_factory=list)
    n_adapt: int = 0

    def after_adaptation(self) -> List[LatentState]:
        """去掉自适应阶段的样本"""
        return [draw for it, draw in zip(self.stored_iterations, self.draws) if it >= self.n_adapt]


@dataclass
class ChainSummary:
    """后验汇总"""
    n_draws: int
    weight_means: np.ndarray       # N×3 (z0, z1, z2)
    weight_sds: np.ndarray         # N×3
    factor_means: np.ndarray       # p×2
    factor_lower: np.ndarray       # p×2，2.5%分位
    factor_upper: np.ndarray       # p×2，97.5%分位
    warps: np.ndarray              # N×p 后验均值扭曲
    bases: np.ndarray              # N×(p−1)
    scalar_means: Optional[dict] = None
