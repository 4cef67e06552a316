"""
配准运行编排模块

按所选引擎拟合模型、计算质量指标、写出结果文件，并为每次命令运行记录清单。
命令行的 register / evaluate 子命令都经由这里。
"""

import uuid
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from ..cli import io
from ..config import ModelConfig, Settings, bind_run_context, get_logger, get_settings
from ..models import (
    AvbResult, ChainSamples, ChainSummary, Dataset, Engine, GroupAssignment, GroupingMode, RunManifest, RunMetrics
)
from ..utils.exceptions import DegenerateDataError, ShapeMismatchError
from ..utils.parallel_utils import Timer
from .analysis import (
    DEFAULT_Z2_HIGH, DEFAULT_Z2_LOW, factor_recovery_score, group_by_weights, group_membership_probabilities, sls,
    sls_grouped
)
from .avb_engine import run_avb
from .diagnostics import mann_kendall_trend
from .error_handling import ErrorHandler
from .fda_grid import build_penalty_pair
from .mcmc_engine import run_chain, summarize_chain
from .model_core import registered_curves
from .warp_engine import apply_warp, mean_warp_center


@dataclass
class RegistrationOutcome:
    """一次拟合的结果，扭曲、配准曲线与因子都在中心化后的时间轴上"""
    engine: Engine
    registered: np.ndarray                  # N×p
    warps: np.ndarray                       # N×p
    factors: np.ndarray                     # p×2
    weights: np.ndarray                     # N×3 (z0, z1, z2)
    weight_sds: Optional[np.ndarray] = None
    factor_lower: Optional[np.ndarray] = None
    factor_upper: Optional[np.ndarray] = None
    avb: Optional[AvbResult] = None
    chain: Optional[ChainSamples] = None
    summary: Optional[ChainSummary] = None


class RunRecorder:
    """
    运行清单记录器

    作为上下文管理器使用：退出时无论成功或失败都写出 manifest.json。
    """

    MANIFEST_NAME = "manifest.json"

    def __init__(self, command: str, argv: Sequence[str], out_dir: Union[str, Path],
                 seed: Optional[int] = None, engine: Optional[str] = None,
                 config: Optional[ModelConfig] = None):
        self.out_dir = Path(out_dir)
        self.manifest = RunManifest(
            command=command,
            argv=list(argv),
            seed=seed,
            engine=engine,
            config=config.to_dict() if config is not None else {},
            versions=RunManifest.collect_versions(),
        )
        self.timer = Timer(command)
        self.logger = get_logger("RunRecorder")

    def add_input(self, path: Union[str, Path]) -> None:
        """记录输入文件及其哈希"""
        self.manifest.input_hashes[str(path)] = io.file_sha256(path)

    def add_outputs(self, paths: Sequence[Union[str, Path]]) -> None:
        self.manifest.outputs.extend(Path(p).name for p in paths)

    def __enter__(self) -> "RunRecorder":
        bind_run_context(run_id=uuid.uuid4().hex[:12], command=self.manifest.command, seed=self.manifest.seed)
        self.timer.__enter__()
        self.logger.info("命令开始", command=self.manifest.command)
        return self

    def __exit__(self, exc_type, exc, tb) -> bool:
        self.timer.__exit__(exc_type, exc, tb)
        if exc is None:
            self.manifest.mark_completed(self.timer.elapsed)
            self.logger.info("命令完成", command=self.manifest.command, wall_time_s=self.timer.elapsed)
        else:
            code = ErrorHandler(self.manifest.command)._determine_error_code(exc)
            self.manifest.mark_failed(code, str(exc), self.timer.elapsed)
            self.logger.error("命令失败", command=self.manifest.command, error_code=code)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.manifest.outputs.append(self.MANIFEST_NAME)
        self.manifest.write(self.out_dir / self.MANIFEST_NAME)
        return False


class RegistrationPipeline:
    """配准流水线：引擎选择、结果汇总与输出"""

    def __init__(self, cfg: ModelConfig, settings: Optional[Settings] = None):
        self.cfg = cfg
        self.settings = settings or get_settings()
        self.logger = get_logger("RegistrationPipeline")

    def fit(self, data: Dataset, engine: Union[Engine, str] = Engine.AVB, seed: int = 0,
            n_iter: int = 1000, thin: int = 1, discard_adapt: bool = False,
            diagnostics_path: Optional[Union[str, Path]] = None) -> RegistrationOutcome:
        """
        拟合模型

        avb+mcmc 先运行AVB，再用其变分状态初始化链。
        """
        engine = Engine(engine)
        pen, pen_reduced = build_penalty_pair(data.grid)
        self.logger.info("开始拟合", engine=engine.value, n_functions=data.n_functions, p=data.p, seed=seed)

        avb_result = None
        if engine in (Engine.AVB, Engine.AVB_MCMC):
            avb_result = run_avb(data, self.cfg, pen, pen_reduced, diagnostics_path=diagnostics_path,
                                 max_workers=self.settings.max_workers)
            if engine is Engine.AVB:
                return self._avb_outcome(avb_result)

        init = avb_result.q if avb_result is not None else None
        chain = run_chain(data, self.cfg, init=init, n_iter=n_iter, thin=thin, rng_seed=seed,
                          pen=pen, pen_reduced=pen_reduced)
        return self._chain_outcome(data, engine, chain, avb_result, discard_adapt)

    def _avb_outcome(self, result: AvbResult) -> RegistrationOutcome:
        q = result.q
        return RegistrationOutcome(
            engine=Engine.AVB,
            registered=result.registered,
            warps=result.warps,
            factors=result.factors,
            weights=np.column_stack([q.mu_z0_full, q.mu_z1, q.mu_z2]),
            avb=result,
        )

    def _chain_outcome(self, data: Dataset, engine: Engine, chain: ChainSamples,
                       avb_result: Optional[AvbResult], discard_adapt: bool) -> RegistrationOutcome:
        summary = summarize_chain(chain, data.grid, discard_adapt=discard_adapt)
        centered = mean_warp_center(summary.warps, summary.bases, data.grid)

        def to_centered(matrix: np.ndarray) -> np.ndarray:
            return np.column_stack([
                apply_warp(matrix[:, k], centered.mean_inverse, data.grid, self.cfg.interpolation)
                for k in range(matrix.shape[1])
            ])

        return RegistrationOutcome(
            engine=engine,
            registered=registered_curves(data, centered.warps, self.cfg.interpolation),
            warps=centered.warps,
            factors=to_centered(summary.factor_means),
            weights=summary.weight_means,
            weight_sds=summary.weight_sds,
            factor_lower=to_centered(summary.factor_lower),
            factor_upper=to_centered(summary.factor_upper),
            avb=avb_result,
            chain=chain,
            summary=summary,
        )

    def assess(self, data: Dataset, outcome: RegistrationOutcome,
               grouping: Union[GroupingMode, str] = GroupingMode.QUADRANT_CENTERED_BOTH,
               z2_low: float = DEFAULT_Z2_LOW, z2_high: float = DEFAULT_Z2_HIGH,
               discard_adapt: bool = False) -> Tuple[RunMetrics, GroupAssignment, Optional[np.ndarray]]:
        """
        质量指标、分组与（有链时）后验分组频率
        """
        groups = group_by_weights(outcome.weights[:, 1], outcome.weights[:, 2], grouping, z2_low, z2_high)
        metrics = RunMetrics(group_sizes={str(k): len(v) for k, v in groups.members().items()})

        try:
            metrics.sls = sls(data.values, outcome.registered.T, data.grid)
            metrics.sls_grouped = sls_grouped(data.values, outcome.registered.T, groups, data.grid)
        except DegenerateDataError as e:
            self.logger.warning("sls无法计算", reason=e.message)

        if outcome.avb is not None:
            diagnostics = outcome.avb.diagnostics
            metrics.criterion_trace = list(diagnostics.criterion_trace)
            metrics.converged = diagnostics.converged
            metrics.monotone_violations = diagnostics.monotone_violations

        probabilities = None
        if outcome.chain is not None:
            chain = outcome.chain
            metrics.acceptance_rates = chain.acceptance_rates.tolist()
            tau, p_value = mann_kendall_trend(chain.log_joint_trace)
            metrics.log_joint_trend = {"tau": tau, "p_value": p_value}
            draws = chain.after_adaptation() if discard_adapt else chain.draws
            if draws:
                probabilities = group_membership_probabilities(draws, grouping, z2_low, z2_high)
        return metrics, groups, probabilities

    def write_outputs(self, out_dir: Union[str, Path], data: Dataset, outcome: RegistrationOutcome,
                      metrics: RunMetrics, groups: GroupAssignment,
                      probabilities: Optional[np.ndarray] = None, discard_adapt: bool = False) -> List[Path]:
        """写出全部结果文件，返回文件列表"""
        out = Path(out_dir)
        grid, names = data.grid, data.names
        written = [
            io.save_functions_csv(out / "registered.csv", outcome.registered.T, grid, names),
            io.save_functions_csv(out / "warps.csv", outcome.warps.T, grid, names),
            io.save_functions_csv(out / "factors.csv", outcome.factors, grid, ("f1", "f2")),
            io.save_weights_csv(out / "weights.csv", names, outcome.weights, outcome.weight_sds),
            io.save_groups_csv(out / "groups.csv", names, groups, outcome.weights[:, 1], outcome.weights[:, 2],
                               probabilities),
        ]
        if outcome.factor_lower is not None:
            written.append(io.save_table_csv(out / "factor_bands.csv", {
                "t": grid.points,
                "f1_mean": outcome.factors[:, 0], "f1_lower": outcome.factor_lower[:, 0],
                "f1_upper": outcome.factor_upper[:, 0],
                "f2_mean": outcome.factors[:, 1], "f2_lower": outcome.factor_lower[:, 1],
                "f2_upper": outcome.factor_upper[:, 1],
            }))
        if outcome.chain is not None:
            written.extend(io.write_draw_logs(out, outcome.chain, grid, names, discard_adapt))
        metrics.write(out / "metrics.json")
        written.append(out / "metrics.json")
        self.logger.info("结果已写出", out_dir=str(out), files=len(written))
        return written

    def run(self, data: Dataset, out_dir: Union[str, Path], engine: Union[Engine, str] = Engine.AVB,
            seed: int = 0, n_iter: int = 1000, thin: int = 1, discard_adapt: bool = False,
            grouping: Union[GroupingMode, str] = GroupingMode.QUADRANT_CENTERED_BOTH,
            z2_low: float = DEFAULT_Z2_LOW, z2_high: float = DEFAULT_Z2_HIGH) -> Tuple[RegistrationOutcome, RunMetrics, List[Path]]:
        """拟合、评估并写出结果"""
        out = Path(out_dir)
        diagnostics_path = out / self.settings.diagnostics_filename if Engine(engine) is not Engine.MCMC else None
        outcome = self.fit(data, engine, seed, n_iter, thin, discard_adapt, diagnostics_path)
        metrics, groups, probabilities = self.assess(data, outcome, grouping, z2_low, z2_high, discard_adapt)
        written = self.write_outputs(out, data, outcome, metrics, groups, probabilities, discard_adapt)
        if diagnostics_path is not None:
            written.append(diagnostics_path)
        return outcome, metrics, written


def evaluate_registration(original: Dataset, registered: Dataset, groups: Optional[GroupAssignment] = None,
                          truth_factors: Optional[np.ndarray] = None,
                          factors: Optional[np.ndarray] = None) -> RunMetrics:
    """
    对已有配准结果计算 sls、分组 sls 与因子恢复评分

    Raises:
        ShapeMismatchError: 原始与配准数据的网格或函数数不一致
    """
    if original.values.shape != registered.values.shape or not np.allclose(
            original.grid.points, registered.grid.points, rtol=1e-9, atol=0):
        raise ShapeMismatchError("原始与配准数据的形状或网格不一致",
                                 {"original": original.values.shape, "registered": registered.values.shape})

    metrics = RunMetrics(sls=sls(original.values, registered.values, original.grid))
    if groups is not None:
        metrics.sls_grouped = sls_grouped(original.values, registered.values, groups, original.grid)
        metrics.group_sizes = {str(k): len(v) for k, v in groups.members().items()}
    if truth_factors is not None and factors is not None:
        correlations, deficient = factor_recovery_score(factors[:, 0], factors[:, 1], truth_factors)
        metrics.canonical_correlations = correlations.tolist()
        metrics.rank_deficient = deficient
    return metrics
