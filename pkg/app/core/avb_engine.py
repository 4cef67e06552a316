"""
改进变分贝叶斯引擎

交替执行两步直到收敛：
1. 对每个函数独立最大化基函数 w_i（点估计，可并行）；
2. 按固定顺序做坐标上升：q(f1), q(f2), q(z0), q(z1), q(z2), η/λ速率, σ²速率。
收敛准则为 E_q[log p(X, w, θ)] − E_q[log q(θ)]，两步都最大化同一目标。
"""

from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from scipy.linalg import cho_factor, cho_solve
from scipy.optimize import minimize
from scipy.special import digamma, gammaln

from ..config import ModelConfig, get_logger, get_settings
from ..models import AnnealMode, AvbDiagnostics, AvbResult, Dataset, PenaltySet, QState
from ..utils.exceptions import DegenerateDataError
from ..utils.parallel_utils import map_with_concurrency
from .fda_grid import build_penalty_pair
from .model_core import LOG_2PI, DataTerms, cached_base_prior_terms, data_terms, warps_from_bases
from .warp_engine import (
    BasePriorTerms, CurveInterpolant, WORKING_ABS_BASE, apply_warp, canonicalize_base, clamp_base,
    log_base_prior, log_base_prior_grad, mean_warp_center, warp_jacobian, warp_values
)

logger = get_logger("avb_engine")

INITIAL_Z_VARIANCE = 1e-2
MONOTONE_SLACK = 1e-8


def _inverse_spd(precision: np.ndarray) -> np.ndarray:
    factor = cho_factor(precision, lower=True)
    cov = cho_solve(factor, np.eye(precision.shape[0]))
    return 0.5 * (cov + cov.T)


def _ratio(pair: Tuple[float, float]) -> float:
    shape, rate = pair
    return shape / rate


def _expected_log_ig(pair: Tuple[float, float]) -> float:
    """逆伽马下的 E[log σ²]"""
    shape, rate = pair
    return float(np.log(rate) - digamma(shape))


def _expected_log_gamma(pair: Tuple[float, float]) -> float:
    """伽马（速率参数化）下的 E[log η]"""
    shape, rate = pair
    return float(digamma(shape) - np.log(rate))


# ---------------------------------------------------------------- 初始化

def avb_init(data: Dataset, cfg: ModelConfig, pen: Optional[PenaltySet] = None) -> Tuple[QState, bool]:
    """
    初始化变分状态

    mu_f1 取截面均值曲线，mu_f2 取中心化数据的首个主方向（Σ⁻¹范数为1），
    z2 初值为在 mu_f2 上的投影得分；速率参数由初始矩做一次超参数更新得到。

    Returns:
        Tuple[QState, bool]: 初始状态；第二因子是否退回到最平滑的 Σ_f 特征方向

    Raises:
        DegenerateDataError: 所有观测值都相同
    """
    pen = pen or build_penalty_pair(data.grid)[0]
    curves = np.asarray(data.curves, dtype=float)
    n, p = curves.shape
    if np.ptp(curves) == 0:
        raise DegenerateDataError("样本为常数，无法初始化", {"n_functions": n})

    g = cfg.factor_ratio
    mean_curve = curves.mean(axis=0)
    residuals = curves - mean_curve
    scale = max(1.0, float(np.max(np.abs(curves))))

    fallback = bool(np.max(np.abs(residuals)) <= 1e-12 * scale)
    if fallback:
        eigvals, eigvecs = np.linalg.eigh(pen.sigma)
        direction = eigvecs[:, -1]
        logger.warning("残差为零，第二因子初值退回到最平滑方向")
    else:
        _, _, vt = np.linalg.svd(residuals, full_matrices=False)
        direction = vt[0]
    direction = direction / np.sqrt(direction @ pen.sigma_inv @ direction)
    if direction[np.argmax(np.abs(direction))] < 0:
        direction = -direction

    mu_z2 = np.zeros(n) if fallback else (residuals @ pen.sigma_inv @ direction) / g

    sigma = np.array(pen.sigma)
    q = QState(
        mu_f1=mean_curve,
        mu_f2=direction,
        cov_f1=sigma.copy(),
        cov_f2=sigma.copy(),
        mu_z0=np.zeros(n - 1),
        var_z0q=np.full(n - 1, INITIAL_Z_VARIANCE),
        mu_z1=np.ones(n),
        var_z1q=np.full(n, INITIAL_Z_VARIANCE),
        mu_z2=mu_z2,
        var_z2q=np.full(n, INITIAL_Z_VARIANCE),
        ig_z0=(cfg.a + (n - 1) / 2, cfg.b),
        ig_z1=(cfg.a + n / 2, cfg.b),
        ig_z2=(cfg.a + n / 2, cfg.b),
        g_eta=(cfg.c + 2, cfg.d),
        g_lambda=(cfg.c + (p - 2), cfg.d),
        bases=np.zeros((n, p - 1)),
        registered=curves.copy(),
    )
    return update_q_hyper(q, cfg, pen), fallback


# ---------------------------------------------------------------- w步

def q_mean(q: QState, i: int, cfg: ModelConfig) -> np.ndarray:
    """变分均值下第 i 个配准函数的均值"""
    return (q.mu_z0_full[i] + q.mu_z1[i] * q.mu_f1
            + cfg.factor_ratio * q.mu_z2[i] * q.mu_f2)


def w_objective(w: np.ndarray, curve: CurveInterpolant, target: np.ndarray,
                terms: DataTerms, prior: BasePriorTerms) -> Tuple[float, np.ndarray]:
    """
    w步目标函数及梯度

    目标为 −½(X(h(w)) − m)ᵀA(X(h(w)) − m) + 基函数先验，
    梯度经增量公式和插值函数导数的链式法则得到。
    """
    h, jac = warp_jacobian(w, curve.grid)
    residual = curve(h) - target
    weighted = terms.precision @ residual
    value = -0.5 * residual @ weighted
    grad = jac.T @ (-weighted * curve.slope(h))
    prior_value, prior_grad = log_base_prior_grad(w, prior)
    return float(value + prior_value), grad + prior_grad


@dataclass
class WStepResult:
    """单个函数w步的结果"""
    w: np.ndarray
    objective_before: float
    objective_after: float
    improved: bool
    used_fallback: bool


def _maximize_w(w0: np.ndarray, curve: CurveInterpolant, target: np.ndarray,
                terms: DataTerms, prior: BasePriorTerms) -> WStepResult:
    def negative(w):
        value, grad = w_objective(w, curve, target, terms, prior)
        return -value, -grad

    start = canonicalize_base(w0)
    before = -negative(start)[0]
    bounds = [(-WORKING_ABS_BASE, WORKING_ABS_BASE)] * start.size

    result = minimize(negative, start, jac=True, method="L-BFGS-B", bounds=bounds,
                      options={"maxiter": 500, "ftol": 1e-14, "gtol": 1e-10})
    candidate = clamp_base(result.x)
    after = -negative(candidate)[0]
    used_fallback = False

    if not after >= before:
        # 拟牛顿失败时退回无梯度的方向集线搜索
        used_fallback = True
        result = minimize(lambda w: negative(w)[0], start, method="Powell", bounds=bounds,
                          options={"maxiter": 20 * start.size, "xtol": 1e-8, "ftol": 1e-12})
        candidate = clamp_base(result.x)
        after = -negative(candidate)[0]

    if not after >= before:
        return WStepResult(w=start, objective_before=before, objective_after=before,
                           improved=False, used_fallback=used_fallback)
    return WStepResult(w=candidate, objective_before=before, objective_after=after,
                       improved=True, used_fallback=used_fallback)


def maximize_w(i: int, q: QState, data: Dataset, cfg: ModelConfig, pen: PenaltySet,
               pen_reduced: PenaltySet) -> np.ndarray:
    """
    在当前变分参数下最大化第 i 个基函数

    Returns:
        np.ndarray: 规范化后的基函数；目标未改进时原样返回
    """
    curve = CurveInterpolant(data.curves[i], data.grid, cfg.interpolation)
    prior = cached_base_prior_terms(pen_reduced, cfg.gamma_w, cfg.lambda_w)
    result = _maximize_w(q.bases[i], curve, q_mean(q, i, cfg), data_terms(cfg, pen), prior)
    if not result.improved:
        logger.info("w步未改进，保留原基函数", function=i)
    return result.w


# ---------------------------------------------------------------- q更新

def update_q_f1(q: QState, data: Dataset, cfg: ModelConfig, pen: PenaltySet) -> QState:
    """q(f1) 的协方差与均值"""
    terms = data_terms(cfg, pen)
    g = terms.ratio
    second_z1 = q.var_z1q + q.mu_z1 ** 2
    precision = (second_z1.sum() * terms.precision
                 + _ratio(q.g_eta) * pen.p1_pinv + _ratio(q.g_lambda) * pen.p2_pinv)
    cov = _inverse_spd(precision)
    residuals = q.registered - q.mu_z0_full[:, None] - g * q.mu_z2[:, None] * q.mu_f2[None, :]
    mean = cov @ (terms.precision @ (q.mu_z1 @ residuals))
    return replace(q, mu_f1=mean, cov_f1=cov)


def update_q_f2(q: QState, data: Dataset, cfg: ModelConfig, pen: PenaltySet) -> QState:
    """q(f2) 的协方差与均值"""
    terms = data_terms(cfg, pen)
    g = terms.ratio
    second_z2 = q.var_z2q + q.mu_z2 ** 2
    precision = (second_z2.sum() * g ** 2 * terms.precision
                 + _ratio(q.g_eta) * pen.p1_pinv + _ratio(q.g_lambda) * pen.p2_pinv)
    cov = _inverse_spd(precision)
    residuals = q.registered - q.mu_z0_full[:, None] - q.mu_z1[:, None] * q.mu_f1[None, :]
    mean = cov @ (g * (terms.precision @ (q.mu_z2 @ residuals)))
    return replace(q, mu_f2=mean, cov_f2=cov)


def update_q_z(q: QState, data: Dataset, cfg: ModelConfig, pen: PenaltySet) -> QState:
    """
    依次更新 q(z0)、q(z1)、q(z2)

    z0 只更新前 N−1 个自由分量，使用与第 N 个函数作差的形式，
    精度中的数据项为 2·1ᵀA1。
    """
    terms = data_terms(cfg, pen)
    A = terms.precision
    g = terms.ratio
    Y = q.registered
    n = q.n_functions
    last = n - 1

    # z0
    var_z0 = 1.0 / (_ratio(q.ig_z0) + 2.0 * terms.ones_quad)
    mu_z0 = q.mu_z0.copy()
    for i in range(n - 1):
        others = mu_z0.sum() - mu_z0[i]
        diff = (Y[i] - Y[last]
                + (q.mu_z1[last] - q.mu_z1[i]) * q.mu_f1
                + g * (q.mu_z2[last] - q.mu_z2[i]) * q.mu_f2
                - others)
        mu_z0[i] = var_z0 * (diff @ terms.ones_precision)
    mu_z0_full = np.append(mu_z0, -mu_z0.sum())

    # z1
    second_f1 = q.cov_f1 + np.outer(q.mu_f1, q.mu_f1)
    e_inv_z1 = _ratio(q.ig_z1)
    var_z1 = 1.0 / (e_inv_z1 + np.sum(A * second_f1))
    residuals = Y - mu_z0_full[:, None] - g * q.mu_z2[:, None] * q.mu_f2[None, :]
    mu_z1 = var_z1 * (e_inv_z1 * cfg.z1_prior_mean + residuals @ (A @ q.mu_f1))

    # z2
    second_f2 = q.cov_f2 + np.outer(q.mu_f2, q.mu_f2)
    var_z2 = 1.0 / (_ratio(q.ig_z2) + g ** 2 * np.sum(A * second_f2))
    residuals = Y - mu_z0_full[:, None] - mu_z1[:, None] * q.mu_f1[None, :]
    mu_z2 = var_z2 * g * (residuals @ (A @ q.mu_f2))

    return replace(
        q,
        mu_z0=mu_z0, var_z0q=np.full(n - 1, var_z0),
        mu_z1=mu_z1, var_z1q=np.full(n, var_z1),
        mu_z2=mu_z2, var_z2q=np.full(n, var_z2),
    )


def update_q_hyper(q: QState, cfg: ModelConfig, pen: PenaltySet) -> QState:
    """η、λ与三个σ²的速率参数；形状参数不变"""
    second_f = (q.cov_f1 + np.outer(q.mu_f1, q.mu_f1)
                + q.cov_f2 + np.outer(q.mu_f2, q.mu_f2))
    rate_eta = cfg.d + 0.5 * np.sum(pen.p1_pinv * second_f)
    rate_lambda = cfg.d + 0.5 * np.sum(pen.p2_pinv * second_f)
    rate_z0 = cfg.b + 0.5 * np.sum(q.var_z0q + q.mu_z0 ** 2)
    rate_z1 = cfg.b + 0.5 * np.sum(q.var_z1q + (q.mu_z1 - cfg.z1_prior_mean) ** 2)
    rate_z2 = cfg.b + 0.5 * np.sum(q.var_z2q + q.mu_z2 ** 2)
    return replace(
        q,
        g_eta=(q.g_eta[0], float(rate_eta)),
        g_lambda=(q.g_lambda[0], float(rate_lambda)),
        ig_z0=(q.ig_z0[0], float(rate_z0)),
        ig_z1=(q.ig_z1[0], float(rate_z1)),
        ig_z2=(q.ig_z2[0], float(rate_z2)),
    )


def coordinate_ascent(q: QState, data: Dataset, cfg: ModelConfig, pen: PenaltySet) -> QState:
    """按固定顺序做一轮全部q更新"""
    q = update_q_f1(q, data, cfg, pen)
    q = update_q_f2(q, data, cfg, pen)
    q = update_q_z(q, data, cfg, pen)
    return update_q_hyper(q, cfg, pen)


# ---------------------------------------------------------------- 收敛准则

def _z_block_terms(mu: np.ndarray, var: np.ndarray, prior_mean: float,
                   pair: Tuple[float, float]) -> float:
    """Σ_i E[log N(z_i; m, σ²)] + 熵"""
    n = mu.size
    expected_log = -0.5 * n * LOG_2PI - 0.5 * n * _expected_log_ig(pair) \
        - 0.5 * _ratio(pair) * np.sum(var + (mu - prior_mean) ** 2)
    entropy = 0.5 * np.sum(1.0 + LOG_2PI + np.log(var))
    return float(expected_log + entropy)


def _inverse_gamma_terms(pair: Tuple[float, float], a: float, b: float) -> float:
    """E[log IG(σ²; a, b)] + q(σ²) 的熵"""
    shape, rate = pair
    expected_log = a * np.log(b) - gammaln(a) - (a + 1) * _expected_log_ig(pair) - b * _ratio(pair)
    entropy = shape + np.log(rate) + gammaln(shape) - (1 + shape) * digamma(shape)
    return float(expected_log + entropy)


def _gamma_terms(pair: Tuple[float, float], c: float, d: float) -> float:
    """E[log G(η; c, d)] + q(η) 的熵"""
    shape, rate = pair
    expected_log = c * np.log(d) - gammaln(c) + (c - 1) * _expected_log_gamma(pair) - d * _ratio(pair)
    entropy = shape - np.log(rate) + gammaln(shape) + (1 - shape) * digamma(shape)
    return float(expected_log + entropy)


def _factor_terms(mu: np.ndarray, cov: np.ndarray, q: QState, pen: PenaltySet) -> float:
    """E[log N(f; 0, Σ_f)] + q(f) 的熵"""
    p = mu.size
    second = cov + np.outer(mu, mu)
    expected_log_det = (2 * _expected_log_gamma(q.g_eta)
                        + (p - 2) * _expected_log_gamma(q.g_lambda) + pen.log_det_sigma_inv)
    quad = _ratio(q.g_eta) * np.sum(pen.p1_pinv * second) + _ratio(q.g_lambda) * np.sum(pen.p2_pinv * second)
    _, log_det_cov = np.linalg.slogdet(cov)
    entropy = 0.5 * p * (1.0 + LOG_2PI) + 0.5 * log_det_cov
    return float(-0.5 * p * LOG_2PI + 0.5 * expected_log_det - 0.5 * quad + entropy)


def expected_data_loglik(q: QState, cfg: ModelConfig, pen: PenaltySet) -> float:
    """E_q[Σ_i log N_p(X_i(h_i); 均值_i, (γ1+γ2)⁻¹Σ)]，z0N 的矩由约束导出"""
    terms = data_terms(cfg, pen)
    A = terms.precision
    g = terms.ratio
    Y = q.registered
    m0, s0 = q.mu_z0_full, q.second_moment_z0_full
    m1, s1 = q.mu_z1, q.var_z1q + q.mu_z1 ** 2
    m2, s2 = q.mu_z2, q.var_z2q + q.mu_z2 ** 2
    second_f1 = q.cov_f1 + np.outer(q.mu_f1, q.mu_f1)
    second_f2 = q.cov_f2 + np.outer(q.mu_f2, q.mu_f2)

    mean = m0[:, None] + m1[:, None] * q.mu_f1[None, :] + g * m2[:, None] * q.mu_f2[None, :]
    y_quad = np.einsum("ij,jk,ik->i", Y, A, Y)
    y_cross = np.einsum("ij,jk,ik->i", Y, A, mean)
    mean_quad = (s0 * terms.ones_quad
                 + s1 * np.sum(A * second_f1)
                 + g ** 2 * s2 * np.sum(A * second_f2)
                 + 2 * m0 * m1 * (terms.ones_precision @ q.mu_f1)
                 + 2 * g * m0 * m2 * (terms.ones_precision @ q.mu_f2)
                 + 2 * g * m1 * m2 * (q.mu_f1 @ A @ q.mu_f2))
    return float(Y.shape[0] * terms.log_norm - 0.5 * np.sum(y_quad - 2 * y_cross + mean_quad))


def elbo_terms(q: QState, data: Dataset, cfg: ModelConfig, pen: PenaltySet,
               pen_reduced: PenaltySet) -> Dict[str, float]:
    """收敛准则的逐项值（每项为期望对数密度加对应熵）"""
    prior_w = cached_base_prior_terms(pen_reduced, cfg.gamma_w, cfg.lambda_w)
    return {
        "data": expected_data_loglik(q, cfg, pen),
        "bases": float(sum(log_base_prior(w, pen_reduced, cfg.gamma_w, cfg.lambda_w, terms=prior_w)
                           for w in q.bases)),
        "f1": _factor_terms(q.mu_f1, q.cov_f1, q, pen),
        "f2": _factor_terms(q.mu_f2, q.cov_f2, q, pen),
        "z0": _z_block_terms(q.mu_z0, q.var_z0q, 0.0, q.ig_z0),
        "z1": _z_block_terms(q.mu_z1, q.var_z1q, cfg.z1_prior_mean, q.ig_z1),
        "z2": _z_block_terms(q.mu_z2, q.var_z2q, 0.0, q.ig_z2),
        "var_z0": _inverse_gamma_terms(q.ig_z0, cfg.a, cfg.b),
        "var_z1": _inverse_gamma_terms(q.ig_z1, cfg.a, cfg.b),
        "var_z2": _inverse_gamma_terms(q.ig_z2, cfg.a, cfg.b),
        "eta_f": _gamma_terms(q.g_eta, cfg.c, cfg.d),
        "lambda_f": _gamma_terms(q.g_lambda, cfg.c, cfg.d),
    }


def elbo(q: QState, data: Dataset, cfg: ModelConfig, pen: PenaltySet, pen_reduced: PenaltySet) -> float:
    """收敛准则 E_q[log p(X, w, θ)] − E_q[log q(θ)]"""
    return float(sum(elbo_terms(q, data, cfg, pen, pen_reduced).values()))


# ---------------------------------------------------------------- 退火

class AnnealController:
    """γ_w 倍数的退火控制"""

    def __init__(self, cfg: ModelConfig):
        self.cfg = cfg
        self.mode = AnnealMode(cfg.anneal_mode)
        self.last_change = 0
        self.iteration = 0
        if self.mode is AnnealMode.ADAPTIVE:
            self.multiplier = float(cfg.anneal_start_multiplier)
        elif self.mode is AnnealMode.SCHEDULE:
            self.multiplier = self._scheduled(0)
        else:
            self.multiplier = 1.0

    def _scheduled(self, iteration: int) -> float:
        multiplier = 1.0
        for value, threshold in self.cfg.anneal_schedule:
            if threshold <= iteration:
                multiplier = float(value)
        return multiplier

    @property
    def at_floor(self) -> bool:
        """退火是否已结束"""
        if self.mode is AnnealMode.ADAPTIVE:
            return self.multiplier <= 1.0
        if self.mode is AnnealMode.SCHEDULE:
            thresholds = [t for _, t in self.cfg.anneal_schedule]
            return not thresholds or self.iteration >= max(thresholds)
        return True

    def gamma_w(self) -> float:
        return self.cfg.gamma_w * self.multiplier

    def before_iteration(self, iteration: int) -> bool:
        """显式退火表在迭代开始前生效；返回倍数是否改变"""
        self.iteration = iteration
        if self.mode is not AnnealMode.SCHEDULE:
            return False
        new = self._scheduled(iteration)
        if new != self.multiplier:
            self.multiplier = new
            self.last_change = iteration
            return True
        return False

    def after_iteration(self, iteration: int, trace: List[float]) -> bool:
        """自适应退火：窗口内相对提升低于阈值时倍数乘以衰减因子；返回是否改变"""
        if self.mode is not AnnealMode.ADAPTIVE or self.multiplier <= 1.0:
            return False
        window = self.cfg.anneal_window
        if iteration - self.last_change <= window or len(trace) <= window:
            return False
        old, new = trace[-window - 1], trace[-1]
        if (new - old) / max(abs(old), 1e-300) < self.cfg.anneal_tol:
            self.multiplier = max(1.0, self.multiplier * self.cfg.anneal_factor)
            self.last_change = iteration
            return True
        return False


# ---------------------------------------------------------------- 主循环

class DiagnosticsWriter:
    """逐迭代诊断CSV：iter, criterion, gamma_w, max_dw"""

    COLUMNS = ["iter", "criterion", "gamma_w", "max_dw"]

    def __init__(self, path: Optional[Union[str, Path]], float_format: str = "%.17g"):
        self.path = Path(path) if path else None
        self.float_format = float_format
        if self.path is not None:
            pd.DataFrame(columns=self.COLUMNS).to_csv(self.path, index=False)

    def write(self, iteration: int, criterion: float, gamma_w: float, max_dw: float) -> None:
        if self.path is None:
            return
        row = pd.DataFrame([[iteration, criterion, gamma_w, max_dw]], columns=self.COLUMNS)
        row.to_csv(self.path, mode="a", header=False, index=False, float_format=self.float_format)


def run_avb(data: Dataset, cfg: ModelConfig, pen: Optional[PenaltySet] = None,
            pen_reduced: Optional[PenaltySet] = None,
            diagnostics_path: Optional[Union[str, Path]] = None,
            max_workers: Optional[int] = None) -> AvbResult:
    """
    运行改进变分贝叶斯直到准则相对变化小于 cfg.tol 或达到 cfg.max_iters

    Args:
        data: 观测数据
        cfg: 模型配置
        pen: 完整网格惩罚矩阵，为None时自动构造
        pen_reduced: 截断网格惩罚矩阵
        diagnostics_path: 逐迭代诊断CSV路径
        max_workers: w步线程数，默认取运行时配置

    Returns:
        AvbResult: 最优变分状态，以及均值扭曲中心化后的扭曲、配准曲线和因子
    """
    settings = get_settings()
    if pen is None or pen_reduced is None:
        pen, pen_reduced = build_penalty_pair(data.grid)
    workers = max_workers or settings.max_workers
    grid = data.grid
    n = data.n_functions

    q, fallback = avb_init(data, cfg, pen)
    curves = [CurveInterpolant(x, grid, cfg.interpolation) for x in data.curves]
    diagnostics = AvbDiagnostics(init_fallback=fallback)
    writer = DiagnosticsWriter(diagnostics_path, settings.float_format())
    anneal = AnnealController(cfg)

    best_q, best_value = q, -np.inf
    previous_value, previous_gamma = None, None
    logger.info("AVB开始", n_functions=n, p=grid.p, gamma_w=anneal.gamma_w(), max_iters=cfg.max_iters)

    for iteration in range(1, cfg.max_iters + 1):
        anneal.before_iteration(iteration)
        gamma_w = anneal.gamma_w()
        cfg_it = cfg.with_gamma_w(gamma_w)
        terms = data_terms(cfg_it, pen)
        prior = cached_base_prior_terms(pen_reduced, cfg_it.gamma_w, cfg_it.lambda_w)

        # 第2步：各函数独立，结果按下标顺序收集
        def step(i: int) -> WStepResult:
            return _maximize_w(q.bases[i], curves[i], q_mean(q, i, cfg_it), terms, prior)

        results = map_with_concurrency(step, range(n), workers)
        bases = np.vstack([r.w for r in results])
        failures = sum(not r.improved for r in results)
        diagnostics.wstep_failures += failures
        if failures:
            logger.debug("部分w步未改进", iteration=iteration, count=failures)
        max_dw = float(np.max(np.abs(bases - q.bases)))
        registered = np.vstack([curves[i](warp_values(bases[i], grid)) for i in range(n)])
        q = replace(q, bases=bases, registered=registered)

        # 第3步
        q = coordinate_ascent(q, data, cfg_it, pen)
        value = elbo(q, data, cfg_it, pen, pen_reduced)
        q = replace(q, criterion_trace=q.criterion_trace + (value,))

        diagnostics.criterion_trace.append(value)
        diagnostics.gamma_w_trace.append(gamma_w)
        diagnostics.max_dw_trace.append(max_dw)
        diagnostics.iterations = iteration
        writer.write(iteration, value, gamma_w, max_dw)
        logger.log_iteration("avb", iteration, criterion=value, gamma_w=gamma_w, max_dw=max_dw)

        same_gamma = previous_gamma == gamma_w
        if same_gamma and value < previous_value - MONOTONE_SLACK * abs(previous_value):
            diagnostics.monotone_violations += 1
            logger.warning("准则下降", iteration=iteration, previous=previous_value, current=value)
        if not same_gamma or value > best_value:
            best_q, best_value = q, value

        rel_change = np.inf if previous_value is None else abs(value - previous_value) / max(abs(previous_value), 1e-300)
        previous_value, previous_gamma = value, gamma_w

        changed = anneal.after_iteration(iteration, diagnostics.criterion_trace)
        if changed:
            logger.info("γ_w退火", iteration=iteration, gamma_w=anneal.gamma_w())
        elif same_gamma and anneal.at_floor and rel_change < cfg.tol:
            diagnostics.converged = True
            break

    if not diagnostics.converged:
        logger.warning("AVB未收敛，返回最优状态", iterations=diagnostics.iterations, criterion=best_value)
    else:
        logger.info("AVB收敛", iterations=diagnostics.iterations, criterion=best_value)

    q = best_q
    warps = warps_from_bases(q.bases, grid)
    centered = mean_warp_center(warps, q.bases, grid)
    registered = np.vstack([curves[i](centered.warps[i]) for i in range(n)])
    factors = np.column_stack([
        apply_warp(q.mu_f1, centered.mean_inverse, grid, cfg.interpolation),
        apply_warp(q.mu_f2, centered.mean_inverse, grid, cfg.interpolation),
    ])
    return AvbResult(q=q, warps=centered.warps, bases=centered.bases, registered=registered,
                     factors=factors, diagnostics=diagnostics)
