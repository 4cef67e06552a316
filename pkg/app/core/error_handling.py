"""
错误处理模块

把命令执行中的异常统一记录、映射为错误代码和退出码，
保证每个命令失败时都有可诊断的日志且不会以未处理异常退出。
"""

import traceback
import uuid
from functools import wraps
from typing import Any, Callable, Dict, Optional, Tuple

from ..config import get_logger
from ..utils.exceptions import (
    ConfigError, DataFormatError, DegenerateDataError, EngineError, GridError,
    PenaltyConstructionError, RegistrationError, ShapeMismatchError, WarpError
)
from ..utils.validation import ValidationError

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


class ErrorHandler:
    """错误处理器"""

    error_code_mapping = {
        "ValueError": "VALIDATION_ERROR",
        "KeyError": "MISSING_KEY_ERROR",
        "TypeError": "TYPE_ERROR",
        "FloatingPointError": "NUMERIC_ERROR",
        "LinAlgError": "NUMERIC_ERROR",
        "MemoryError": "MEMORY_ERROR",
        "FileNotFoundError": "FILE_NOT_FOUND_ERROR",
        "PermissionError": "PERMISSION_ERROR",
        "OSError": "IO_ERROR",
    }

    def __init__(self, command: str):
        self.command = command
        self.logger = get_logger(f"ErrorHandler-{command}")

    def handle_error(self, error: Exception, context: Optional[Dict[str, Any]] = None) -> Tuple[str, int]:
        """
        记录错误并返回 (错误代码, 退出码)

        Args:
            error: 捕获的异常
            context: 附加上下文

        Returns:
            Tuple[str, int]: 错误代码与退出码
        """
        error_id = str(uuid.uuid4())
        error_code = self._determine_error_code(error)
        details = dict(getattr(error, "context", {}) or {})
        details.update(context or {})

        self.logger.log_error_with_context(
            error,
            {
                "error_id": error_id,
                "command": self.command,
                "error_code": error_code,
                "context": details,
                "traceback": traceback.format_exc(),
            }
        )
        return error_code, self.exit_code(error)

    def _determine_error_code(self, error: Exception) -> str:
        """确定错误代码：项目异常取自身代码，其余查表"""
        if isinstance(error, RegistrationError):
            return error.error_code
        return self.error_code_mapping.get(type(error).__name__, "UNKNOWN_ERROR")

    @staticmethod
    def exit_code(error: BaseException) -> int:
        """用法错误为2，其余失败为1"""
        if isinstance(error, SystemExit):
            return int(error.code) if isinstance(error.code, int) else EXIT_USAGE
        return EXIT_FAILURE


def robust_command(func: Callable[..., int]) -> Callable[..., int]:
    """
    命令函数包装器

    异常被记录后转为退出码1；argparse 的 SystemExit 原样抛出，保持退出码2。
    """
    @wraps(func)
    def wrapper(*args, **kwargs) -> int:
        handler = ErrorHandler(func.__name__)
        try:
            return func(*args, **kwargs)
        except SystemExit:
            raise
        except Exception as e:
            _, code = handler.handle_error(e, {"function": func.__name__})
            return code

    return wrapper


__all__ = [
    "ErrorHandler", "robust_command", "EXIT_OK", "EXIT_FAILURE", "EXIT_USAGE",
    "RegistrationError", "GridError", "PenaltyConstructionError", "WarpError", "ConfigError",
    "DataFormatError", "DegenerateDataError", "ShapeMismatchError", "EngineError", "ValidationError",
]
