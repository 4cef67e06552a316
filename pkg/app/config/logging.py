"""
日志配置模块

结构化日志写到stderr（stdout留给命令输出），支持JSON/控制台两种格式和可选的轮转文件。
每次命令运行可绑定 run_id、command、seed 等上下文，之后所有日志自动携带。
"""

import logging
import logging.handlers
import sys
from pathlib import Path
from typing import Any, Dict, List

import structlog
from structlog.contextvars import bind_contextvars, clear_contextvars, merge_contextvars

from .settings import Settings, get_settings

SERVICE_NAME = "fa-registration"

_SIZE_UNITS = {"KB": 1024, "MB": 1024 ** 2, "GB": 1024 ** 3}


def setup_logging(settings: Settings = None) -> None:
    """设置日志系统，可重复调用"""
    settings = settings or get_settings()
    level = getattr(logging, settings.log_level.upper())

    root_logger = logging.getLogger()
    root_logger.setLevel(level)
    for handler in root_logger.handlers[:]:
        root_logger.removeHandler(handler)

    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setLevel(level)
    console_handler.setFormatter(logging.Formatter("%(message)s"))
    root_logger.addHandler(console_handler)

    if settings.log_format == "json":
        renderer = structlog.processors.JSONRenderer(ensure_ascii=False)
        timestamper = structlog.processors.TimeStamper(fmt="iso")
    else:
        renderer = structlog.dev.ConsoleRenderer(colors=False)
        timestamper = structlog.processors.TimeStamper(fmt="%Y-%m-%d %H:%M:%S")

    structlog.configure(
        processors=_processors(timestamper) + [renderer],
        context_class=dict,
        logger_factory=structlog.stdlib.LoggerFactory(),
        wrapper_class=structlog.stdlib.BoundLogger,
        cache_logger_on_first_use=True,
    )

    if settings.log_file_path:
        setup_file_handler(settings, level)


def _processors(timestamper) -> List[Any]:
    return [
        merge_contextvars,
        structlog.stdlib.filter_by_level,
        structlog.stdlib.add_logger_name,
        structlog.stdlib.add_log_level,
        structlog.stdlib.PositionalArgumentsFormatter(),
        timestamper,
        structlog.processors.StackInfoRenderer(),
        structlog.processors.format_exc_info,
        structlog.processors.UnicodeDecoder(),
        add_custom_fields,
    ]


def setup_file_handler(settings: Settings, level: int) -> None:
    """设置轮转文件日志处理器"""
    path = Path(settings.log_file_path)
    path.parent.mkdir(parents=True, exist_ok=True)

    file_handler = logging.handlers.RotatingFileHandler(
        filename=path,
        maxBytes=parse_size(settings.log_max_size),
        backupCount=settings.log_backup_count,
        encoding="utf-8",
    )
    file_handler.setFormatter(logging.Formatter("%(message)s"))
    file_handler.setLevel(level)
    logging.getLogger().addHandler(file_handler)


def parse_size(size_str: str) -> int:
    """解析 '10MB' 形式的文件大小"""
    text = size_str.strip().upper()
    for unit, factor in _SIZE_UNITS.items():
        if text.endswith(unit):
            return int(float(text[:-len(unit)]) * factor)
    return int(text)


def add_custom_fields(logger, method_name, event_dict):
    """添加服务名和版本"""
    from .. import __version__

    event_dict["service"] = SERVICE_NAME
    event_dict["version"] = __version__
    return event_dict


def bind_run_context(**context: Any) -> None:
    """绑定本次运行的上下文（如 run_id、command、seed）"""
    clear_contextvars()
    bind_contextvars(**context)


class StructuredLogger:
    """结构化日志器包装类"""

    def __init__(self, name: str):
        self.logger = structlog.get_logger(name)

    def debug(self, message: str, **kwargs):
        self.logger.debug(message, **kwargs)

    def info(self, message: str, **kwargs):
        self.logger.info(message, **kwargs)

    def warning(self, message: str, **kwargs):
        self.logger.warning(message, **kwargs)

    def error(self, message: str, **kwargs):
        self.logger.error(message, **kwargs)

    def log_iteration(self, engine: str, iteration: int, **metrics):
        """记录推断引擎的单次迭代（debug级别）"""
        self.debug("迭代完成", engine=engine, iteration=iteration, **metrics)

    def log_error_with_context(self, error: Exception, context: Dict[str, Any]):
        """记录带上下文的错误日志"""
        self.error(
            "运行错误",
            error_type=type(error).__name__,
            error_message=str(error),
            **context
        )


def get_logger(name: str) -> StructuredLogger:
    """获取结构化日志器"""
    return StructuredLogger(name)
