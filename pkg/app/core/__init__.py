"""
核心业务逻辑模块

提供网格与惩罚矩阵、扭曲函数、模型密度、两种推断引擎、采样诊断、
结果分析与模拟数据生成。运行编排在 core.pipeline 中，需显式导入。
"""

from .fda_grid import build_time_grid, build_penalty_set, build_penalty_pair, sigma_f
from .warp_engine import (
    warp_from_base, apply_warp, log_base_prior, canonicalize_base, mean_warp_center, CurveInterpolant
)
from .model_core import data_loglik, log_joint, log_prior_terms, registered_curves
from .avb_engine import (
    avb_init, maximize_w, update_q_f1, update_q_f2, update_q_z, update_q_hyper, elbo, run_avb
)
from .mcmc_engine import (
    sample_f1, sample_f2, sample_z, sample_variances, metropolis_w, run_chain, summarize_chain
)
from .diagnostics import mann_kendall_trend, geweke_test
from .analysis import sls, sls_grouped, group_by_weights, group_membership_probabilities, factor_recovery_score
from .simgen import kr_warp, simulate_set1, simulate_set2
from .error_handling import ErrorHandler, robust_command

__all__ = [
    # 网格与惩罚矩阵
    "build_time_grid", "build_penalty_set", "build_penalty_pair", "sigma_f",

    # 扭曲函数
    "warp_from_base", "apply_warp", "log_base_prior", "canonicalize_base", "mean_warp_center",
    "CurveInterpolant",

    # 模型密度
    "data_loglik", "log_joint", "log_prior_terms", "registered_curves",

    # 改进变分贝叶斯
    "avb_init", "maximize_w", "update_q_f1", "update_q_f2", "update_q_z", "update_q_hyper", "elbo", "run_avb",

    # MCMC
    "sample_f1", "sample_f2", "sample_z", "sample_variances", "metropolis_w", "run_chain", "summarize_chain",

    # 诊断与分析
    "mann_kendall_trend", "geweke_test",
    "sls", "sls_grouped", "group_by_weights", "group_membership_probabilities", "factor_recovery_score",

    # 模拟数据
    "kr_warp", "simulate_set1", "simulate_set2",

    # 错误处理
    "ErrorHandler", "robust_command"
]
