"""
配置管理模块

提供运行时配置、模型配置和日志系统配置。
"""

from .settings import Settings, settings, get_settings
from .logging import setup_logging, get_logger, bind_run_context, StructuredLogger
from .model_config import ModelConfig

__all__ = [
    "Settings",
    "settings",
    "get_settings",
    "setup_logging",
    "get_logger",
    "bind_run_context",
    "StructuredLogger",
    "ModelConfig"
]
