"""
模型配置模块

定义配准+双因子模型的超参数与推断引擎参数，支持JSON/YAML文件读写。
配置文件的键与字段名一一对应（扁平结构）。
"""

import json
from pathlib import Path
from typing import Any, Dict, Tuple, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from ..models.enums import AnnealMode, Interpolation, ProposalKind
from ..utils.exceptions import ConfigError


class ModelConfig(BaseModel):
    """模型与引擎配置"""

    model_config = ConfigDict(frozen=True, extra="forbid", use_enum_values=False)

    # 配准与扭曲惩罚
    gamma1: float = Field(default=100.0, gt=0, description="第一因子配准精度γ1")
    gamma2: float = Field(default=10.0, gt=0, description="第二因子配准精度γ2，须小于γ1")
    gamma_w: float = Field(default=1.0, gt=0, description="基函数先验的整体精度γ_w")
    lambda_w: float = Field(default=1.0, gt=0, description="基函数先验的曲率精度λ_w")

    # 超参数
    a: float = Field(default=0.001, gt=0, description="逆伽马形状参数")
    b: float = Field(default=0.001, gt=0, description="逆伽马尺度参数")
    c: float = Field(default=0.001, gt=0, description="伽马形状参数")
    d: float = Field(default=0.001, gt=0, description="伽马速率参数")
    z1_prior_mean: float = Field(default=1.0, description="z1先验均值")

    interpolation: Interpolation = Field(default=Interpolation.MONOTONE_CUBIC, description="插值方式")

    # 退火
    anneal_mode: AnnealMode = Field(default=AnnealMode.ADAPTIVE, description="γ_w退火方式")
    anneal_schedule: Tuple[Tuple[float, int], ...] = Field(
        default=(), description="显式退火表：(γ_w倍数, 起始迭代)"
    )
    anneal_start_multiplier: float = Field(default=10.0, ge=1, description="自适应退火初始倍数")
    anneal_factor: float = Field(default=0.5, gt=0, lt=1, description="每次退火的倍数衰减")
    anneal_window: int = Field(default=10, ge=1, description="判断停滞的迭代窗口")
    anneal_tol: float = Field(default=1e-4, gt=0, description="窗口内相对提升阈值")

    # AVB
    max_iters: int = Field(default=500, ge=1, description="AVB最大迭代次数")
    tol: float = Field(default=1e-6, gt=0, description="准则相对变化收敛阈值")

    # MCMC
    mcmc_step: float = Field(default=0.05, gt=0, description="w随机游走初始步长")
    mcmc_target_accept: float = Field(default=0.3, gt=0, lt=1, description="自适应目标接受率")
    mcmc_adapt_fraction: float = Field(default=0.2, ge=0, le=1, description="自适应阶段占总迭代比例")
    mcmc_proposal: ProposalKind = Field(default=ProposalKind.SPHERICAL, description="w提议分布")

    @model_validator(mode="after")
    def validate_gamma_order(self):
        """验证γ1 > γ2"""
        if not self.gamma1 > self.gamma2:
            raise ValueError("γ1必须大于γ2")
        return self

    @field_validator("anneal_schedule")
    def validate_schedule(cls, v):
        """验证退火表：倍数为正、阈值非负且严格递增"""
        thresholds = [int(t) for _, t in v]
        if any(m <= 0 for m, _ in v):
            raise ValueError("退火倍数必须为正")
        if any(t < 0 for t in thresholds) or thresholds != sorted(set(thresholds)):
            raise ValueError("退火阈值必须非负且严格递增")
        return v

    @property
    def registration_precision(self) -> float:
        """γ1+γ2"""
        return self.gamma1 + self.gamma2

    @property
    def factor_ratio(self) -> float:
        """γ2/(γ1+γ2)，第二因子在配准均值中的系数"""
        return self.gamma2 / (self.gamma1 + self.gamma2)

    def with_gamma_w(self, gamma_w: float) -> "ModelConfig":
        """返回γ_w替换后的副本"""
        return self.model_copy(update={"gamma_w": float(gamma_w)})

    def to_dict(self) -> Dict[str, Any]:
        """转换为可JSON序列化的字典"""
        return self.model_dump(mode="json")

    def to_json(self) -> str:
        """转换为JSON字符串"""
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False)

    def save(self, path: Union[str, Path]) -> None:
        """按后缀写为JSON或YAML"""
        target = Path(path)
        if target.suffix.lower() in (".yaml", ".yml"):
            target.write_text(yaml.safe_dump(self.to_dict(), allow_unicode=True), encoding="utf-8")
        else:
            target.write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ModelConfig":
        """
        从字典创建配置

        Raises:
            ConfigError: 未知键或取值不合法
        """
        try:
            return cls(**data)
        except ValidationError as e:
            raise ConfigError(f"模型配置不合法: {e}") from e

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "ModelConfig":
        """
        从JSON或YAML文件读取配置

        Raises:
            ConfigError: 文件无法解析或内容不合法
        """
        source = Path(path)
        try:
            text = source.read_text(encoding="utf-8")
            if source.suffix.lower() in (".yaml", ".yml"):
                data = yaml.safe_load(text) or {}
            else:
                data = json.loads(text)
        except (OSError, json.JSONDecodeError, yaml.YAMLError) as e:
            raise ConfigError(f"无法读取配置文件 {source}: {e}") from e
        if not isinstance(data, dict):
            raise ConfigError("配置文件顶层必须是键值对象")
        return cls.from_dict(data)
