"""
文件格式模块

函数数据CSV（表头 `t,f1..fN`，每行一个时间点）、结果矩阵CSV、
分组CSV、真值JSON与MCMC样本日志的读写。浮点数按完整精度写出。
"""

import hashlib
import json
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from ..config import get_logger, get_settings
from ..models import ChainSamples, Dataset, GroupAssignment, SimDataset, TimeGrid
from ..core.fda_grid import build_time_grid
from ..utils.exceptions import DataFormatError, GridError

logger = get_logger("cli_io")

PathLike = Union[str, Path]

SPACING_RTOL = 1e-9


def _float_format() -> str:
    return get_settings().float_format()


def file_sha256(path: PathLike) -> str:
    """文件内容的SHA-256"""
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _read_numeric_csv(path: PathLike) -> pd.DataFrame:
    """
    读取全数值CSV，错误信息指明文件行号（表头为第1行）与列名

    Raises:
        DataFormatError: 无法解析、行长度不一致、含非数值或缺失值
    """
    try:
        frame = pd.read_csv(path, float_precision="round_trip", skipinitialspace=True, index_col=False)
    except pd.errors.ParserError as e:
        raise DataFormatError(f"CSV行长度不一致: {e}") from e
    except (OSError, pd.errors.EmptyDataError) as e:
        raise DataFormatError(f"无法读取CSV文件 {path}: {e}") from e

    if frame.shape[0] == 0:
        raise DataFormatError("CSV文件没有数据行")
    for column in frame.columns:
        values = pd.to_numeric(frame[column], errors="coerce")
        bad = values.isna().to_numpy() | ~np.isfinite(values.to_numpy(dtype=float, na_value=np.nan))
        if bad.any():
            row = int(np.flatnonzero(bad)[0])
            raise DataFormatError("缺失、非数值或非有限值", row=row + 2, column=str(column))
        frame[column] = values.astype(float)
    return frame


def _grid_from_times(times: np.ndarray) -> TimeGrid:
    steps = np.diff(times)
    if steps.size == 0 or np.any(steps <= 0):
        raise DataFormatError("时间列必须严格递增", column="t")
    mean_step = (times[-1] - times[0]) / (times.size - 1)
    deviation = np.abs(steps - mean_step)
    if np.max(deviation) > SPACING_RTOL * abs(mean_step):
        row = int(np.argmax(deviation)) + 3
        raise DataFormatError("时间点不是等间距", row=row, column="t")
    try:
        return build_time_grid(times[0], times[-1], times.size)
    except GridError as e:
        raise DataFormatError(f"时间网格不合法: {e.message}", column="t") from e


def load_functions_csv(path: PathLike) -> Dataset:
    """
    读取函数数据CSV

    第一列为等间距时间网格（相对容差1e-9），其余每列一个函数。

    Raises:
        DataFormatError: 格式错误，信息中含行号和列名
    """
    frame = _read_numeric_csv(path)
    if frame.shape[1] < 3:
        raise DataFormatError("至少需要时间列和两个函数列")
    grid = _grid_from_times(frame.iloc[:, 0].to_numpy())
    names = tuple(str(c) for c in frame.columns[1:])
    logger.debug("读取函数数据", path=str(path), p=grid.p, n_functions=len(names))
    return Dataset(values=frame.iloc[:, 1:].to_numpy(), grid=grid, names=names)


def save_functions_csv(path: PathLike, values: np.ndarray, grid: TimeGrid,
                       names: Sequence[str], time_column: str = "t") -> Path:
    """写出 p×K 矩阵，第一列为网格"""
    frame = pd.DataFrame(np.asarray(values, dtype=float), columns=list(names))
    frame.insert(0, time_column, grid.points)
    frame.to_csv(path, index=False, float_format=_float_format())
    return Path(path)


def save_dataset_csv(path: PathLike, dataset: Dataset) -> Path:
    """按读取格式写出数据集"""
    return save_functions_csv(path, dataset.values, dataset.grid, dataset.names)


def load_factors_csv(path: PathLike) -> np.ndarray:
    """
    读取 factors.csv（t, f1, f2）

    Returns:
        np.ndarray: p×2
    """
    frame = _read_numeric_csv(path)
    if list(frame.columns[1:3]) != ["f1", "f2"]:
        raise DataFormatError("因子文件需要列 t,f1,f2")
    return frame[["f1", "f2"]].to_numpy()


def save_table_csv(path: PathLike, columns: Dict[str, Any]) -> Path:
    """按列字典写出一张表"""
    pd.DataFrame(columns).to_csv(path, index=False, float_format=_float_format())
    return Path(path)


def save_weights_csv(path: PathLike, names: Sequence[str], means: np.ndarray,
                     sds: Optional[np.ndarray] = None) -> Path:
    """weights.csv：function_id, z0, z1, z2（以及后验标准差）"""
    columns: Dict[str, Any] = {"function_id": list(names)}
    for k, label in enumerate(("z0", "z1", "z2")):
        columns[label] = means[:, k]
    if sds is not None:
        for k, label in enumerate(("z0_sd", "z1_sd", "z2_sd")):
            columns[label] = sds[:, k]
    return save_table_csv(path, columns)


def save_groups_csv(path: PathLike, names: Sequence[str], groups: GroupAssignment,
                    z1: np.ndarray, z2: np.ndarray,
                    probabilities: Optional[np.ndarray] = None) -> Path:
    """groups.csv：function_id, label, z1, z2, 中心化标记（以及后验分组频率）"""
    columns: Dict[str, Any] = {
        "function_id": list(names),
        "label": groups.labels,
        "z1": z1,
        "z2": z2,
        "centered_z1": [bool(groups.rule.get("centered_z1", False))] * len(names),
        "centered_z2": [bool(groups.rule.get("centered_z2", False))] * len(names),
    }
    if probabilities is not None:
        for k in range(probabilities.shape[1]):
            columns[f"prob_{k + 1}"] = probabilities[:, k]
    return save_table_csv(path, columns)


def load_groups_csv(path: PathLike, names: Optional[Sequence[str]] = None) -> GroupAssignment:
    """
    读取分组文件（至少包含 function_id 与 label 列）

    给出 names 时按其顺序重排并检查一致性。
    """
    try:
        frame = pd.read_csv(path, float_precision="round_trip")
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise DataFormatError(f"无法读取分组文件 {path}: {e}") from e
    if "label" not in frame.columns:
        raise DataFormatError("分组文件缺少 label 列")
    if names is not None and "function_id" in frame.columns:
        frame = frame.set_index(frame["function_id"].astype(str))
        missing = [n for n in names if n not in frame.index]
        if missing:
            raise DataFormatError(f"分组文件缺少函数 {missing[0]}", column="function_id")
        frame = frame.loc[list(names)]
    labels = pd.to_numeric(frame["label"], errors="coerce")
    if labels.isna().any():
        raise DataFormatError("label 必须为整数", column="label")
    return GroupAssignment(labels=labels.to_numpy(dtype=int), rule={"source": str(path)})


def write_truth_json(path: PathLike, sim: SimDataset) -> Path:
    """真值侧车JSON"""
    Path(path).write_text(json.dumps(sim.truth_dict(), indent=2), encoding="utf-8")
    return Path(path)


def load_truth_json(path: PathLike) -> Dict[str, Any]:
    """读取真值侧车JSON"""
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise DataFormatError(f"无法读取真值文件 {path}: {e}") from e


def write_draw_logs(out_dir: PathLike, chain: ChainSamples, grid: TimeGrid, names: Sequence[str],
                    discard_adapt: bool = False) -> List[Path]:
    """
    MCMC样本日志：每个参数块一个CSV，每行一个保存的样本

    Returns:
        List[Path]: 写出的文件
    """
    out = Path(out_dir)
    pairs = list(zip(chain.stored_iterations, chain.draws, chain.log_joint_trace))
    if discard_adapt:
        pairs = [item for item in pairs if item[0] >= chain.n_adapt]
    if not pairs:
        return []
    iterations = [it for it, _, _ in pairs]
    draws = [d for _, d, _ in pairs]
    time_cols = [f"t{j}" for j in range(grid.p)]
    base_cols = [f"{name}_w{k}" for name in names for k in range(grid.p - 1)]

    blocks = {
        "draws_f1.csv": (np.vstack([d.f1 for d in draws]), time_cols),
        "draws_f2.csv": (np.vstack([d.f2 for d in draws]), time_cols),
        "draws_z0.csv": (np.vstack([d.z0 for d in draws]), list(names)),
        "draws_z1.csv": (np.vstack([d.z1 for d in draws]), list(names)),
        "draws_z2.csv": (np.vstack([d.z2 for d in draws]), list(names)),
        "draws_bases.csv": (np.vstack([d.bases.ravel() for d in draws]), base_cols),
        "draws_scalars.csv": (
            np.column_stack([
                [d.var_z0 for d in draws], [d.var_z1 for d in draws], [d.var_z2 for d in draws],
                [d.eta_f for d in draws], [d.lambda_f for d in draws], [lj for _, _, lj in pairs],
            ]),
            ["var_z0", "var_z1", "var_z2", "eta_f", "lambda_f", "log_joint"],
        ),
    }
    written = []
    for filename, (matrix, columns) in blocks.items():
        frame = pd.DataFrame(matrix, columns=columns)
        frame.insert(0, "iteration", iterations)
        frame.to_csv(out / filename, index=False, float_format=_float_format())
        written.append(out / filename)
    return written
