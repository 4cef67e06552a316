"""
命令行主入口

用法：python -m app.main {register,simulate,evaluate} [选项]
"""

import os
import sys
from typing import Optional, Sequence

# 确保UTF-8编码
os.environ.setdefault('PYTHONIOENCODING', 'utf-8')
os.environ.setdefault('LANG', 'C.UTF-8')
os.environ.setdefault('LC_ALL', 'C.UTF-8')

from .config import setup_logging
from .core.error_handling import ErrorHandler
from .cli.commands import COMMANDS, build_parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    解析参数并执行子命令

    Returns:
        int: 退出码（0 成功，1 运行失败，2 用法错误）
    """
    argv = list(sys.argv[1:] if argv is None else argv)
    setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return ErrorHandler.exit_code(e)
    return COMMANDS[args.command](args, argv)


if __name__ == "__main__":
    sys.exit(main())
