"""
工具函数模块

提供异常定义、并行计时和数据验证等工具函数。
"""

from .exceptions import (
    RegistrationError, GridError, PenaltyConstructionError, WarpError,
    ConfigError, DegenerateDataError, ShapeMismatchError, EngineError,
    DataFormatError
)
from .parallel_utils import map_with_concurrency, Timer
from .validation import ValidationError, Validator

__all__ = [
    # 异常
    "RegistrationError", "GridError", "PenaltyConstructionError", "WarpError",
    "ConfigError", "DegenerateDataError", "ShapeMismatchError", "EngineError",
    "DataFormatError",

    # 并行与计时
    "map_with_concurrency", "Timer",

    # 验证工具
    "ValidationError", "Validator"
]
