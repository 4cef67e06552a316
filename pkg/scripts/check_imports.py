#!/usr/bin/env python3
"""
导入检查脚本

检查依赖包与项目模块能否正常导入。
"""

import importlib
import sys
from typing import List, Tuple


def check_import(module_name: str) -> Tuple[bool, str]:
    """
    检查模块导入

    Returns:
        Tuple[bool, str]: (是否成功, 错误信息)
    """
    try:
        importlib.import_module(module_name)
        return True, ""
    except ImportError as e:
        return False, str(e)
    except Exception as e:
        return False, f"未知错误: {str(e)}"


def main():
    """主函数"""
    print("🔍 检查项目导入...")
    print("=" * 60)

    numeric_packages = [
        ("numpy", "NumPy"),
        ("scipy", "SciPy"),
        ("pandas", "Pandas"),
    ]

    utility_packages = [
        ("pydantic", "Pydantic"),
        ("pydantic_settings", "pydantic-settings"),
        ("structlog", "StructLog"),
        ("yaml", "PyYAML"),
        ("dotenv", "python-dotenv"),
    ]

    optional_packages = [
        ("pytest", "Pytest"),
        ("pytest_cov", "pytest-cov"),
    ]

    all_success = True

    def check_package_group(packages: List[Tuple[str, str]], group_name: str, required: bool = True):
        nonlocal all_success
        print(f"\n📦 {group_name}:")
        for module_name, display_name in packages:
            success, error = check_import(module_name)
            if success:
                print(f"  ✅ {display_name}")
            else:
                print(f"  ❌ {display_name}: {error}")
                if required:
                    all_success = False

    check_package_group(numeric_packages, "数值计算", required=True)
    check_package_group(utility_packages, "配置与日志", required=True)
    check_package_group(optional_packages, "测试工具", required=False)

    print("\n" + "=" * 60)

    print("\n🏗️ 项目模块:")
    project_modules = [
        ("app.config", "配置模块"),
        ("app.models", "数据模型"),
        ("app.core.fda_grid", "网格与惩罚矩阵"),
        ("app.core.warp_engine", "扭曲函数"),
        ("app.core.avb_engine", "AVB引擎"),
        ("app.core.mcmc_engine", "MCMC引擎"),
        ("app.core.pipeline", "配准流水线"),
        ("app.cli.commands", "命令行"),
    ]

    for module_name, display_name in project_modules:
        success, error = check_import(module_name)
        if success:
            print(f"  ✅ {display_name}")
        else:
            print(f"  ❌ {display_name}: {error}")
            all_success = False

    print("\n" + "=" * 60)

    if all_success:
        print("🎉 所有核心导入检查通过！")
        print("\n✨ 项目已准备就绪，可以运行：")
        print("   python -m app.main simulate --set 1 --out-dir runs/sim1")
        return 0
    print("💥 部分导入检查失败！")
    print("\n🔧 解决方案：")
    print("1. 安装依赖: pip install -r requirements.txt")
    print("2. 查看详细安装指南: INSTALL.md")
    return 1


if __name__ == "__main__":
    sys.exit(main())
