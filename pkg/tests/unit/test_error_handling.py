"""
错误处理单元测试
"""

import numpy as np
import pytest

from app.core.error_handling import EXIT_FAILURE, EXIT_OK, EXIT_USAGE, ErrorHandler, robust_command
from app.utils.exceptions import ConfigError, DataFormatError
from app.utils.validation import ValidationError


class TestErrorHandler:
    """ErrorHandler测试"""

    @pytest.fixture
    def handler(self):
        return ErrorHandler("test")

    @pytest.mark.parametrize("error,code", [
        (DataFormatError("bad", row=3), "DATA_FORMAT_ERROR"),
        (ConfigError("bad"), "CONFIG_ERROR"),
        (ValidationError("bad", "x"), "VALIDATION_ERROR"),
        (ValueError("bad"), "VALIDATION_ERROR"),
        (np.linalg.LinAlgError("singular"), "NUMERIC_ERROR"),
        (RuntimeError("boom"), "UNKNOWN_ERROR"),
    ])
    def test_error_codes(self, handler, error, code):
        """测试错误代码映射"""
        assert handler._determine_error_code(error) == code

    def test_handle_error(self, handler):
        """测试处理错误返回代码与退出码"""
        assert handler.handle_error(ConfigError("bad", {"key": "gamma3"})) == ("CONFIG_ERROR", EXIT_FAILURE)

    def test_exit_codes(self):
        """测试退出码"""
        assert ErrorHandler.exit_code(RuntimeError()) == EXIT_FAILURE
        assert ErrorHandler.exit_code(SystemExit(2)) == EXIT_USAGE
        assert ErrorHandler.exit_code(SystemExit(0)) == EXIT_OK
        assert ErrorHandler.exit_code(SystemExit("message")) == EXIT_USAGE


class TestRobustCommand:
    """robust_command测试"""

    def test_success(self):
        """测试正常返回"""
        @robust_command
        def command():
            return EXIT_OK

        assert command() == EXIT_OK

    def test_exception_becomes_exit_code(self):
        """测试异常转为退出码1"""
        @robust_command
        def command():
            raise DataFormatError("bad row", row=4, column="f1")

        assert command() == EXIT_FAILURE

    def test_system_exit_propagates(self):
        """测试SystemExit原样抛出"""
        @robust_command
        def command():
            raise SystemExit(2)

        with pytest.raises(SystemExit):
            command()
