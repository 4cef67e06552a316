"""
数据验证工具模块

提供数组、标量和路径的验证函数。
"""

from pathlib import Path
from typing import Any, Optional, Sequence, Union

import numpy as np

from .exceptions import RegistrationError


class ValidationError(RegistrationError):
    """验证错误异常"""

    error_code = "VALIDATION_ERROR"

    def __init__(self, message: str, field: Optional[str] = None, value: Any = None):
        """
        初始化验证错误

        Args:
            message: 错误消息
            field: 字段名
            value: 字段值
        """
        self.field = field
        self.value = value
        super().__init__(message, {"field": field})


class Validator:
    """数据验证器"""

    @staticmethod
    def validate_finite(array: Any, field: str) -> np.ndarray:
        """
        验证数组全部为有限值

        Args:
            array: 待验证数组
            field: 字段名

        Returns:
            np.ndarray: 转换为float的数组

        Raises:
            ValidationError: 含NaN或无穷
        """
        values = np.asarray(array, dtype=float)
        if not np.all(np.isfinite(values)):
            bad = np.argwhere(~np.isfinite(values))[0]
            raise ValidationError(f"{field} 含有非有限值，位置 {tuple(int(k) for k in bad)}", field, None)
        return values

    @staticmethod
    def validate_shape(array: np.ndarray, shape: Sequence[Optional[int]], field: str) -> np.ndarray:
        """
        验证数组形状，shape中的None表示该维不限

        Raises:
            ValidationError: 维数或长度不符
        """
        if array.ndim != len(shape):
            raise ValidationError(f"{field} 维数应为{len(shape)}，实际为{array.ndim}", field, array.shape)
        for axis, (actual, expected) in enumerate(zip(array.shape, shape)):
            if expected is not None and actual != expected:
                raise ValidationError(
                    f"{field} 第{axis}维长度应为{expected}，实际为{actual}", field, array.shape
                )
        return array

    @staticmethod
    def validate_positive(value: float, field: str) -> float:
        """验证标量严格为正"""
        if not np.isfinite(value) or value <= 0:
            raise ValidationError(f"{field} 必须为正数", field, value)
        return float(value)

    @staticmethod
    def validate_output_dir(path: Union[str, Path]) -> Path:
        """
        验证并创建输出目录

        Raises:
            ValidationError: 路径存在但不是目录
        """
        out = Path(path)
        if out.exists() and not out.is_dir():
            raise ValidationError("输出路径已存在且不是目录", "out_dir", str(out))
        out.mkdir(parents=True, exist_ok=True)
        return out

    @staticmethod
    def validate_input_file(path: Union[str, Path], field: str) -> Path:
        """验证输入文件存在"""
        candidate = Path(path)
        if not candidate.is_file():
            raise ValidationError(f"找不到输入文件: {candidate}", field, str(candidate))
        return candidate
