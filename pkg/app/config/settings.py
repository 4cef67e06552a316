"""
配置管理模块

使用Pydantic Settings管理运行时配置，支持环境变量和.env配置文件。
模型超参数不在这里，见 model_config.py。
"""

from pydantic import Field, field_validator
from pydantic_settings import BaseSettings


class Settings(BaseSettings):
    """运行时配置类"""

    # 日志配置
    log_level: str = Field(default="info", description="日志级别")
    log_format: str = Field(default="console", description="日志格式 json/console")
    log_file_path: str = Field(default="", description="日志文件路径，为空时不写文件")
    log_max_size: str = Field(default="10MB", description="日志文件最大大小")
    log_backup_count: int = Field(default=3, description="日志文件备份数量")

    # 计算配置
    max_workers: int = Field(default=1, description="w步并行线程数")
    default_seed: int = Field(default=0, description="默认随机种子")

    # 输出配置
    float_digits: int = Field(default=17, description="浮点输出有效数字位数")
    diagnostics_filename: str = Field(default="diagnostics.csv", description="逐迭代诊断文件名")

    @field_validator("log_level")
    def validate_log_level(cls, v):
        """验证日志级别"""
        valid_levels = ["debug", "info", "warning", "error", "critical"]
        if v.lower() not in valid_levels:
            raise ValueError(f"日志级别必须是以下之一: {valid_levels}")
        return v.lower()

    @field_validator("log_format")
    def validate_log_format(cls, v):
        """验证日志格式"""
        if v.lower() not in ("json", "console"):
            raise ValueError("日志格式必须是 json 或 console")
        return v.lower()

    @field_validator("max_workers")
    def validate_max_workers(cls, v):
        """验证线程数"""
        if v < 1:
            raise ValueError("线程数必须至少为1")
        return v

    @field_validator("float_digits")
    def validate_float_digits(cls, v):
        """验证输出精度"""
        if not 1 <= v <= 17:
            raise ValueError("有效数字位数必须在1到17之间")
        return v

    def float_format(self) -> str:
        """CSV浮点格式串"""
        return f"%.{self.float_digits}g"

    model_config = {
        "env_prefix": "FAREG_",
        "env_file": ".env",
        "env_file_encoding": "utf-8",
        "case_sensitive": False,
        "extra": "ignore"
    }


# 创建全局配置实例
settings = Settings()


def get_settings() -> Settings:
    """获取配置实例"""
    return settings
