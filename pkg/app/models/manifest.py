"""
运行清单与指标数据模型模块

定义每次命令运行写出的 manifest.json 与 metrics.json 结构。
"""

import json
import platform
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from pydantic import BaseModel, Field

from .enums import RunStatus


class RunManifest(BaseModel):
    """运行清单：足以在同一构建下逐位复现一次运行"""

    command: str = Field(..., description="子命令名")
    argv: List[str] = Field(default_factory=list, description="完整命令行参数")
    status: RunStatus = Field(default=RunStatus.RUNNING, description="运行状态")
    config: Dict[str, Any] = Field(default_factory=dict, description="模型配置快照")
    input_hashes: Dict[str, str] = Field(default_factory=dict, description="输入文件SHA-256")
    seed: Optional[int] = Field(None, description="随机种子")
    engine: Optional[str] = Field(None, description="推断引擎")
    versions: Dict[str, str] = Field(default_factory=dict, description="软件版本")
    started_at: datetime = Field(default_factory=datetime.now, description="开始时间")
    wall_time_s: float = Field(default=0.0, description="墙钟耗时（秒）")
    outputs: List[str] = Field(default_factory=list, description="写出的文件")
    error_code: Optional[str] = Field(None, description="错误代码")
    error_message: Optional[str] = Field(None, description="错误消息")

    def mark_completed(self, wall_time_s: float) -> None:
        """标记成功"""
        self.status = RunStatus.COMPLETED
        self.wall_time_s = wall_time_s

    def mark_failed(self, error_code: str, error_message: str, wall_time_s: float) -> None:
        """标记失败"""
        self.status = RunStatus.FAILED
        self.error_code = error_code
        self.error_message = error_message
        self.wall_time_s = wall_time_s

    def write(self, path: Union[str, Path]) -> None:
        """写出JSON"""
        Path(path).write_text(self.model_dump_json(indent=2), encoding="utf-8")

    @staticmethod
    def collect_versions() -> Dict[str, str]:
        """收集运行环境的关键版本"""
        import numpy
        import pandas
        import scipy

        from .. import __version__

        return {
            "python": platform.python_version(),
            "numpy": numpy.__version__,
            "scipy": scipy.__version__,
            "pandas": pandas.__version__,
            "app": __version__,
        }


class RunMetrics(BaseModel):
    """指标文件内容，未计算的项不写出"""

    sls: Optional[float] = Field(None, description="配准后/前的一阶导数截面方差比")
    sls_grouped: Optional[float] = Field(None, description="各组sls之和")
    canonical_correlations: Optional[List[float]] = Field(None, description="估计与真实因子张成空间的典型相关")
    rank_deficient: Optional[bool] = Field(None, description="估计因子是否秩亏")
    criterion_trace: List[float] = Field(default_factory=list, description="AVB准则轨迹")
    converged: Optional[bool] = Field(None, description="AVB是否收敛")
    monotone_violations: Optional[int] = Field(None, description="同一γ_w下准则下降次数")
    acceptance_rates: Optional[List[float]] = Field(None, description="各函数w步接受率")
    log_joint_trend: Optional[Dict[str, float]] = Field(None, description="对数联合密度轨迹的Mann-Kendall检验 (tau, p_value)")
    group_sizes: Optional[Dict[str, int]] = Field(None, description="各组函数数")

    def to_json(self) -> str:
        """以完整精度写出"""
        return json.dumps(self.model_dump(exclude_none=True), indent=2, ensure_ascii=False)

    def write(self, path: Union[str, Path]) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")
