"""
异常定义模块

项目内所有可预期错误的异常层次。每个异常带错误代码和上下文，
由 core.error_handling.ErrorHandler 统一记录并映射为退出码。
"""

from typing import Any, Dict, Optional


class RegistrationError(Exception):
    """项目异常基类"""

    error_code = "REGISTRATION_ERROR"

    def __init__(self, message: str, context: Optional[Dict[str, Any]] = None):
        self.message = message
        self.context = context or {}
        super().__init__(message)


class GridError(RegistrationError):
    """时间网格不合法"""
    error_code = "GRID_ERROR"


class PenaltyConstructionError(RegistrationError):
    """惩罚矩阵构造失败（网格病态）"""
    error_code = "PENALTY_ERROR"


class WarpError(RegistrationError):
    """基函数或扭曲函数不合法"""
    error_code = "WARP_ERROR"


class ConfigError(RegistrationError):
    """模型配置不合法"""
    error_code = "CONFIG_ERROR"


class DegenerateDataError(RegistrationError):
    """样本退化（如所有函数相同）"""
    error_code = "DEGENERATE_DATA_ERROR"


class ShapeMismatchError(RegistrationError):
    """矩阵形状不一致"""
    error_code = "SHAPE_MISMATCH_ERROR"


class EngineError(RegistrationError):
    """推断引擎运行失败"""
    error_code = "ENGINE_ERROR"


class DataFormatError(RegistrationError):
    """数据文件格式错误，尽量指明出错的行和列"""

    error_code = "DATA_FORMAT_ERROR"

    def __init__(self, message: str, row: Optional[int] = None, column: Optional[str] = None):
        self.row = row
        self.column = column
        location = []
        if row is not None:
            location.append(f"第{row}行")
        if column is not None:
            location.append(f"列 {column}")
        if location:
            message = f"{message}（{'，'.join(location)}）"
        super().__init__(message, {"row": row, "column": column})
