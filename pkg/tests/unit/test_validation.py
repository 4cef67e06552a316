"""
工具函数单元测试

测试验证器、异常和并行计时工具。
"""

import time

import numpy as np
import pytest

from app.utils import DataFormatError, RegistrationError, Timer, ValidationError, Validator, map_with_concurrency


class TestValidator:
    """Validator测试"""

    def test_validate_finite(self):
        """测试有限值验证"""
        values = Validator.validate_finite([1, 2, 3], "x")

        assert values.dtype == float
        with pytest.raises(ValidationError) as exc_info:
            Validator.validate_finite([[1.0, np.inf]], "x")
        assert exc_info.value.field == "x"
        assert "(0, 1)" in exc_info.value.message

    def test_validate_shape(self):
        """测试形状验证"""
        array = np.zeros((4, 3))

        assert Validator.validate_shape(array, (4, None), "m") is array
        with pytest.raises(ValidationError):
            Validator.validate_shape(array, (5, None), "m")
        with pytest.raises(ValidationError):
            Validator.validate_shape(array, (4,), "m")

    def test_validate_positive(self):
        """测试正数验证"""
        assert Validator.validate_positive(2, "eta") == 2.0
        for bad in (0.0, -1.0, np.nan):
            with pytest.raises(ValidationError):
                Validator.validate_positive(bad, "eta")

    def test_validate_output_dir(self, tmp_path):
        """测试输出目录创建"""
        out = Validator.validate_output_dir(tmp_path / "a" / "b")

        assert out.is_dir()
        file_path = tmp_path / "file.txt"
        file_path.write_text("x", encoding="utf-8")
        with pytest.raises(ValidationError):
            Validator.validate_output_dir(file_path)

    def test_validate_input_file(self, tmp_path):
        """测试输入文件验证"""
        with pytest.raises(ValidationError):
            Validator.validate_input_file(tmp_path / "missing.csv", "input")


class TestExceptions:
    """异常测试"""

    def test_data_format_location(self):
        """测试格式错误信息含行列位置"""
        error = DataFormatError("缺失值", row=3, column="f2")

        assert "第3行" in str(error)
        assert "列 f2" in str(error)
        assert error.error_code == "DATA_FORMAT_ERROR"
        assert error.context == {"row": 3, "column": "f2"}

    def test_hierarchy(self):
        """测试异常层次"""
        assert issubclass(ValidationError, RegistrationError)
        assert issubclass(DataFormatError, RegistrationError)


class TestParallelUtils:
    """并行与计时测试"""

    def test_map_preserves_order(self):
        """测试结果顺序与输入一致"""
        def slow_square(x):
            time.sleep(0.001 * (5 - x))
            return x * x

        assert map_with_concurrency(slow_square, range(5), max_workers=3) == [0, 1, 4, 9, 16]
        assert map_with_concurrency(slow_square, range(5), max_workers=1) == [0, 1, 4, 9, 16]

    def test_timer(self):
        """测试计时器"""
        with Timer("test") as timer:
            time.sleep(0.01)

        assert timer.elapsed >= 0.005
        assert Timer().elapsed == 0.0
