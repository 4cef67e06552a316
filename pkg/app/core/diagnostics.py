"""
采样诊断模块

Mann–Kendall 趋势检验（链的对数联合密度是否仍在漂移），以及
联合分布检验：边际-条件模拟器与逐次-条件模拟器得到的参数矩应一致。
"""

from typing import Callable, Dict, Optional, Tuple

import numpy as np
from scipy import stats

from ..config import ModelConfig, get_logger
from ..models import LatentState, TimeGrid
from .fda_grid import build_penalty_pair
from .mcmc_engine import draw_prior_state, draw_registered_data, gibbs_sweep

logger = get_logger("diagnostics")

Functional = Callable[[LatentState], float]

DEFAULT_FUNCTIONALS: Dict[str, Functional] = {
    "z1": lambda s: float(s.z1[0]),
    "z2": lambda s: float(s.z2[0]),
    "var_z1": lambda s: s.var_z1,
    "eta_f": lambda s: s.eta_f,
}


def mann_kendall_trend(series) -> Tuple[float, float]:
    """
    序列对其下标的 Kendall τ 及双侧p值

    少于3个点或序列为常数时返回 (0, 1)。
    """
    values = np.asarray(series, dtype=float)
    if values.size < 3 or np.ptp(values) == 0:
        return 0.0, 1.0
    tau, p_value = stats.kendalltau(np.arange(values.size), values)
    return float(tau), float(p_value)


def batch_means_se(series, n_batches: int = 50) -> float:
    """批均值法估计自相关序列均值的标准误"""
    values = np.asarray(series, dtype=float)
    n_batches = max(2, min(n_batches, values.size // 2))
    size = values.size // n_batches
    means = values[: size * n_batches].reshape(n_batches, size).mean(axis=1)
    return float(means.std(ddof=1) / np.sqrt(n_batches))


def geweke_test(cfg: ModelConfig, grid: TimeGrid, n_functions: int, n_draws: int, seed: int = 0,
                functionals: Optional[Dict[str, Functional]] = None,
                n_batches: int = 50) -> Dict[str, float]:
    """
    联合分布检验

    边际-条件模拟器：每次独立从先验抽参数（无需数据）；逐次-条件模拟器：
    交替执行一次Gibbs扫描与按当前参数重新抽数据。两者的平稳分布都是先验，
    因此每个统计量的一阶、二阶矩应一致。基函数固定为恒等扭曲。

    先验必须正常（例如 a, c 远大于1），否则矩不存在。

    Returns:
        Dict[str, float]: 键为 "<名称>" 与 "<名称>^2"，值为两种模拟器矩差的z分数
    """
    functionals = functionals or DEFAULT_FUNCTIONALS
    pen, pen_reduced = build_penalty_pair(grid)
    rng = np.random.default_rng(seed)

    marginal = {name: np.empty(n_draws) for name in functionals}
    for k in range(n_draws):
        state = draw_prior_state(n_functions, cfg, pen, pen_reduced, rng, identity_warps=True)
        for name, fn in functionals.items():
            marginal[name][k] = fn(state)

    successive = {name: np.empty(n_draws) for name in functionals}
    state = draw_prior_state(n_functions, cfg, pen, pen_reduced, rng, identity_warps=True)
    registered = draw_registered_data(state, cfg, pen, rng)
    for k in range(n_draws):
        state, _, _ = gibbs_sweep(state, registered, None, cfg, pen, pen_reduced, rng, update_warps=False)
        registered = draw_registered_data(state, cfg, pen, rng)
        for name, fn in functionals.items():
            successive[name][k] = fn(state)

    scores: Dict[str, float] = {}
    for name in functionals:
        for suffix, power in (("", 1), ("^2", 2)):
            a = marginal[name] ** power
            b = successive[name] ** power
            se = np.sqrt(a.var(ddof=1) / a.size + batch_means_se(b, n_batches) ** 2)
            scores[name + suffix] = float((a.mean() - b.mean()) / se)

    logger.info("联合分布检验完成", n_draws=n_draws, max_abs_z=max(abs(v) for v in scores.values()))
    return scores
