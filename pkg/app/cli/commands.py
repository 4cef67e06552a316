"""
命令行子命令

register  拟合配准+双因子模型并写出结果
simulate  生成模拟数据集及真值
evaluate  对已有配准结果计算 sls 与因子恢复评分

退出码：0 成功，1 运行失败，2 用法错误。
"""

import argparse
from pathlib import Path
from typing import Callable, Dict, Sequence

import numpy as np

from ..config import ModelConfig, get_logger, get_settings
from ..core.analysis import DEFAULT_Z2_HIGH, DEFAULT_Z2_LOW
from ..core.error_handling import EXIT_OK, robust_command
from ..core.pipeline import RegistrationPipeline, RunRecorder, evaluate_registration
from ..core.simgen import simulate_set1, simulate_set2
from ..models import Engine, GroupingMode
from ..utils.exceptions import DataFormatError
from ..utils.validation import Validator
from . import io

logger = get_logger("commands")

DATASET_FILENAME = "dataset.csv"
TRUTH_FILENAME = "truth.json"


def build_parser() -> argparse.ArgumentParser:
    """构造命令行解析器"""
    settings = get_settings()
    parser = argparse.ArgumentParser(
        prog="fa-registration",
        description="贝叶斯曲线配准与双因子模型",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    register = subparsers.add_parser("register", help="拟合模型并写出配准结果")
    register.add_argument("--input", required=True, help="函数数据CSV（t,f1..fN）")
    register.add_argument("--config", help="模型配置文件（JSON或YAML）")
    register.add_argument("--engine", choices=[e.value for e in Engine], default=Engine.AVB.value,
                          help="推断引擎")
    register.add_argument("--seed", type=int, default=settings.default_seed, help="随机种子")
    register.add_argument("--out-dir", required=True, help="输出目录")
    register.add_argument("--iters", type=int, default=1000, help="MCMC迭代次数")
    register.add_argument("--thin", type=int, default=1, help="MCMC稀疏间隔")
    register.add_argument("--discard-adapt", action="store_true", help="汇总与样本日志中去掉自适应阶段")
    register.add_argument("--grouping", choices=[m.value for m in GroupingMode],
                          default=GroupingMode.QUADRANT_CENTERED_BOTH.value, help="分组规则")
    register.add_argument("--z2-low", type=float, default=DEFAULT_Z2_LOW, help="z2阈值分组下界")
    register.add_argument("--z2-high", type=float, default=DEFAULT_Z2_HIGH, help="z2阈值分组上界")

    simulate = subparsers.add_parser("simulate", help="生成模拟数据集")
    simulate.add_argument("--set", dest="set_id", type=int, choices=[1, 2], required=True, help="模拟集编号")
    simulate.add_argument("--p", type=int, default=61, help="网格点数")
    simulate.add_argument("--n", type=int, help="函数个数（默认第一集21，第二集20）")
    simulate.add_argument("--seed", type=int, default=settings.default_seed, help="随机种子")
    simulate.add_argument("--out-dir", required=True, help="输出目录")

    evaluate = subparsers.add_parser("evaluate", help="评估配准结果")
    evaluate.add_argument("--original", required=True, help="原始函数CSV")
    evaluate.add_argument("--registered", required=True, help="配准后函数CSV")
    evaluate.add_argument("--groups", help="分组CSV（function_id,label）")
    evaluate.add_argument("--truth", help="模拟数据真值JSON")
    evaluate.add_argument("--factors", help="估计因子CSV，默认取 --registered 同目录的 factors.csv")
    evaluate.add_argument("--out-dir", help="metrics.json 输出目录，默认取 --registered 所在目录")
    return parser


@robust_command
def cmd_register(args: argparse.Namespace, argv: Sequence[str] = ()) -> int:
    """拟合并写出 registered/warps/factors/weights/groups/metrics"""
    out = Validator.validate_output_dir(args.out_dir)
    with RunRecorder("register", argv, out, seed=args.seed, engine=args.engine) as recorder:
        if args.iters < 1 or args.thin < 1:
            raise ValueError("--iters 与 --thin 必须至少为1")
        input_path = Validator.validate_input_file(args.input, "input")
        recorder.add_input(input_path)
        if args.config:
            recorder.add_input(Validator.validate_input_file(args.config, "config"))
            cfg = ModelConfig.from_file(args.config)
        else:
            cfg = ModelConfig()
        recorder.manifest.config = cfg.to_dict()

        data = io.load_functions_csv(input_path)
        pipeline = RegistrationPipeline(cfg)
        _, metrics, written = pipeline.run(
            data, out, engine=args.engine, seed=args.seed, n_iter=args.iters, thin=args.thin,
            discard_adapt=args.discard_adapt, grouping=args.grouping,
            z2_low=args.z2_low, z2_high=args.z2_high,
        )
        recorder.add_outputs(written)

    print(metrics.to_json())
    return EXIT_OK


@robust_command
def cmd_simulate(args: argparse.Namespace, argv: Sequence[str] = ()) -> int:
    """写出 dataset.csv 与 truth.json"""
    out = Validator.validate_output_dir(args.out_dir)
    with RunRecorder("simulate", argv, out, seed=args.seed) as recorder:
        if args.set_id == 1:
            sim = simulate_set1(p=args.p, seed=args.seed, n=args.n or 21)
        else:
            sim = simulate_set2(p=args.p, n=args.n or 20, seed=args.seed)
        written = [
            io.save_dataset_csv(out / DATASET_FILENAME, sim.dataset),
            io.write_truth_json(out / TRUTH_FILENAME, sim),
        ]
        recorder.add_outputs(written)
        logger.info("模拟数据已写出", set_id=args.set_id, n_functions=sim.dataset.n_functions, p=sim.dataset.p)
    return EXIT_OK


def _truth_factors(path: Path, p: int):
    truth = io.load_truth_json(path)
    factors = truth.get("true_factors")
    if factors is None:
        logger.warning("真值文件中没有因子", truth=str(path))
        return None
    factors = np.asarray(factors, dtype=float)
    if factors.shape != (p, 2):
        raise DataFormatError(f"真值因子形状应为 ({p}, 2)，实际为 {factors.shape}")
    return factors


@robust_command
def cmd_evaluate(args: argparse.Namespace, argv: Sequence[str] = ()) -> int:
    """计算 sls、分组 sls 与典型相关并写出 metrics.json"""
    registered_path = Path(args.registered)
    out = Validator.validate_output_dir(args.out_dir or registered_path.parent)
    with RunRecorder("evaluate", argv, out) as recorder:
        for path in (args.original, args.registered, args.groups, args.truth):
            if path:
                recorder.add_input(Validator.validate_input_file(path, "input"))
        original = io.load_functions_csv(args.original)
        registered = io.load_functions_csv(registered_path)
        groups = io.load_groups_csv(args.groups, original.names) if args.groups else None

        truth_factors = factors = None
        if args.truth:
            truth_factors = _truth_factors(Path(args.truth), original.p)
            factors_path = Path(args.factors) if args.factors else registered_path.parent / "factors.csv"
            if truth_factors is not None and factors_path.is_file():
                recorder.add_input(factors_path)
                factors = io.load_factors_csv(factors_path)
            elif truth_factors is not None:
                logger.warning("找不到估计因子文件，跳过因子恢复评分", factors=str(factors_path))

        metrics = evaluate_registration(original, registered, groups, truth_factors, factors)
        metrics.write(out / "metrics.json")
        recorder.add_outputs([out / "metrics.json"])

    print(metrics.to_json())
    return EXIT_OK


COMMANDS: Dict[str, Callable[[argparse.Namespace, Sequence[str]], int]] = {
    "register": cmd_register,
    "simulate": cmd_simulate,
    "evaluate": cmd_evaluate,
}
