"""
Metropolis-within-Gibbs 采样引擎

除基函数外每个参数都从完整条件分布精确抽样；每个 w_i 用高斯随机游走
Metropolis 步更新，步长在前 mcmc_adapt_fraction 比例的迭代内按
Robbins–Monro 规则向目标接受率自适应，之后固定。

扫描顺序：全部 w_i, f1, f2, z0, z1, z2, σ²(z0/z1/z2), η_f, λ_f。
"""

from dataclasses import replace
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular

from ..config import ModelConfig, get_logger
from ..models import ChainSamples, ChainSummary, Dataset, LatentState, PenaltySet, ProposalKind, QState, TimeGrid
from ..utils.exceptions import EngineError
from .fda_grid import build_penalty_pair, sigma_f
from .model_core import cached_base_prior_terms, data_terms, log_joint, registered_mean, warps_from_bases
from .warp_engine import (
    CurveInterpolant, WORKING_ABS_BASE, base_from_warp, canonicalize_base, clamp_base, log_base_prior_grad,
    warp_values
)

logger = get_logger("mcmc_engine")

ROBBINS_MONRO_EXPONENT = 0.6


# ---------------------------------------------------------------- 完整条件分布参数

def _precision_solve(precision: np.ndarray, rhs: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """返回 (精度的下三角Cholesky因子, 精度⁻¹·rhs)"""
    chol = cholesky(precision, lower=True)
    return chol, cho_solve((chol, True), rhs)


def _factor_prior_precision(state: LatentState, pen: PenaltySet) -> np.ndarray:
    return state.eta_f * pen.p1_pinv + state.lambda_f * pen.p2_pinv


def f1_conditional_precision(state: LatentState, registered: np.ndarray, cfg: ModelConfig,
                             pen: PenaltySet) -> Tuple[np.ndarray, np.ndarray]:
    """f1 | 其余 的精度矩阵与 精度·均值"""
    terms = data_terms(cfg, pen)
    precision = np.sum(state.z1 ** 2) * terms.precision + _factor_prior_precision(state, pen)
    residuals = (registered - state.z0[:, None]
                 - terms.ratio * state.z2[:, None] * state.f2[None, :])
    return precision, terms.precision @ (state.z1 @ residuals)


def f2_conditional_precision(state: LatentState, registered: np.ndarray, cfg: ModelConfig,
                             pen: PenaltySet) -> Tuple[np.ndarray, np.ndarray]:
    """f2 | 其余 的精度矩阵与 精度·均值"""
    terms = data_terms(cfg, pen)
    g = terms.ratio
    precision = g ** 2 * np.sum(state.z2 ** 2) * terms.precision + _factor_prior_precision(state, pen)
    residuals = registered - state.z0[:, None] - state.z1[:, None] * state.f1[None, :]
    return precision, g * (terms.precision @ (state.z2 @ residuals))


def f1_conditional(state: LatentState, registered: np.ndarray, cfg: ModelConfig,
                   pen: PenaltySet) -> Tuple[np.ndarray, np.ndarray]:
    """f1 | 其余 的 (均值, 协方差)"""
    precision, rhs = f1_conditional_precision(state, registered, cfg, pen)
    cov = np.linalg.inv(precision)
    return cov @ rhs, 0.5 * (cov + cov.T)


def f2_conditional(state: LatentState, registered: np.ndarray, cfg: ModelConfig,
                   pen: PenaltySet) -> Tuple[np.ndarray, np.ndarray]:
    """f2 | 其余 的 (均值, 协方差)"""
    precision, rhs = f2_conditional_precision(state, registered, cfg, pen)
    cov = np.linalg.inv(precision)
    return cov @ rhs, 0.5 * (cov + cov.T)


def z0_conditional(i: int, state: LatentState, registered: np.ndarray, cfg: ModelConfig,
                   pen: PenaltySet) -> Tuple[float, float]:
    """
    z0i | 其余（i < N−1）的 (均值, 方差)

    z0N = −Σ z0i 同时出现在第 N 个函数的似然中，因此精度含 2·1ᵀA1。
    """
    terms = data_terms(cfg, pen)
    g = terms.ratio
    last = state.n_functions - 1
    others = np.sum(state.z0_free) - state.z0_free[i]
    diff = (registered[i] - registered[last]
            + (state.z1[last] - state.z1[i]) * state.f1
            + g * (state.z2[last] - state.z2[i]) * state.f2
            - others)
    var = 1.0 / (1.0 / state.var_z0 + 2.0 * terms.ones_quad)
    return float(var * (diff @ terms.ones_precision)), float(var)


def z1_conditional(i: int, state: LatentState, registered: np.ndarray, cfg: ModelConfig,
                   pen: PenaltySet) -> Tuple[float, float]:
    """z1i | 其余 的 (均值, 方差)，方差中使用 f1"""
    terms = data_terms(cfg, pen)
    weighted_f1 = terms.precision @ state.f1
    var = 1.0 / (1.0 / state.var_z1 + state.f1 @ weighted_f1)
    residual = registered[i] - state.z0[i] - terms.ratio * state.z2[i] * state.f2
    mean = var * (cfg.z1_prior_mean / state.var_z1 + residual @ weighted_f1)
    return float(mean), float(var)


def z2_conditional(i: int, state: LatentState, registered: np.ndarray, cfg: ModelConfig,
                   pen: PenaltySet) -> Tuple[float, float]:
    """z2i | 其余 的 (均值, 方差)"""
    terms = data_terms(cfg, pen)
    g = terms.ratio
    weighted_f2 = terms.precision @ state.f2
    var = 1.0 / (1.0 / state.var_z2 + g ** 2 * (state.f2 @ weighted_f2))
    residual = registered[i] - state.z0[i] - state.z1[i] * state.f1
    return float(var * g * (residual @ weighted_f2)), float(var)


def variance_conditionals(state: LatentState, cfg: ModelConfig,
                          pen: PenaltySet) -> Dict[str, Tuple[float, float]]:
    """
    方差与精度参数的条件分布参数 (形状, 速率)

    σ² 为逆伽马，η_f 与 λ_f 为伽马（速率参数化）。
    """
    n, p = state.n_functions, state.p
    quad_p1 = state.f1 @ pen.p1_pinv @ state.f1 + state.f2 @ pen.p1_pinv @ state.f2
    quad_p2 = state.f1 @ pen.p2_pinv @ state.f1 + state.f2 @ pen.p2_pinv @ state.f2
    return {
        "var_z0": (cfg.a + (n - 1) / 2, cfg.b + 0.5 * float(np.sum(state.z0_free ** 2))),
        "var_z1": (cfg.a + n / 2, cfg.b + 0.5 * float(np.sum((state.z1 - cfg.z1_prior_mean) ** 2))),
        "var_z2": (cfg.a + n / 2, cfg.b + 0.5 * float(np.sum(state.z2 ** 2))),
        "eta_f": (cfg.c + 2, cfg.d + 0.5 * float(quad_p1)),
        "lambda_f": (cfg.c + (p - 2), cfg.d + 0.5 * float(quad_p2)),
    }


# ---------------------------------------------------------------- 条件抽样

def _draw_from_precision(precision: np.ndarray, rhs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    chol, mean = _precision_solve(precision, rhs)
    return mean + solve_triangular(chol.T, rng.standard_normal(mean.size), lower=False)


def sample_f1(state: LatentState, registered: np.ndarray, cfg: ModelConfig, pen: PenaltySet,
              rng: np.random.Generator) -> np.ndarray:
    """从 f1 | 其余 精确抽样"""
    return _draw_from_precision(*f1_conditional_precision(state, registered, cfg, pen), rng)


def sample_f2(state: LatentState, registered: np.ndarray, cfg: ModelConfig, pen: PenaltySet,
              rng: np.random.Generator) -> np.ndarray:
    """从 f2 | 其余 精确抽样"""
    return _draw_from_precision(*f2_conditional_precision(state, registered, cfg, pen), rng)


def sample_z(state: LatentState, registered: np.ndarray, cfg: ModelConfig, pen: PenaltySet,
             rng: np.random.Generator) -> LatentState:
    """依次抽样 z0（前N−1个）、z1、z2"""
    n = state.n_functions
    z0_free = state.z0_free.copy()
    for i in range(n - 1):
        mean, var = z0_conditional(i, replace(state, z0_free=z0_free), registered, cfg, pen)
        z0_free[i] = mean + np.sqrt(var) * rng.standard_normal()
    state = replace(state, z0_free=z0_free)

    z1 = state.z1.copy()
    for i in range(n):
        mean, var = z1_conditional(i, state, registered, cfg, pen)
        z1[i] = mean + np.sqrt(var) * rng.standard_normal()
    state = replace(state, z1=z1)

    z2 = state.z2.copy()
    for i in range(n):
        mean, var = z2_conditional(i, state, registered, cfg, pen)
        z2[i] = mean + np.sqrt(var) * rng.standard_normal()
    return replace(state, z2=z2)


def sample_variances(state: LatentState, cfg: ModelConfig, pen: PenaltySet,
                     rng: np.random.Generator) -> LatentState:
    """抽样三个σ²，再抽样 η_f 与 λ_f"""
    params = variance_conditionals(state, cfg, pen)
    updates = {}
    for name in ("var_z0", "var_z1", "var_z2"):
        shape, rate = params[name]
        updates[name] = rate / rng.gamma(shape)
    for name in ("eta_f", "lambda_f"):
        shape, rate = params[name]
        updates[name] = rng.gamma(shape) / rate
    return replace(state, **updates)


# ---------------------------------------------------------------- Metropolis步

def _w_log_target(w: np.ndarray, curve: CurveInterpolant, mean: np.ndarray, cfg: ModelConfig,
                  pen: PenaltySet, pen_reduced: PenaltySet) -> Tuple[float, np.ndarray]:
    """w_i 的条件对数密度（只含依赖 w_i 的项）及对应的配准曲线"""
    row = curve(warp_values(w, curve.grid))
    residual = row - mean
    terms = data_terms(cfg, pen)
    prior = cached_base_prior_terms(pen_reduced, cfg.gamma_w, cfg.lambda_w)
    prior_value, _ = log_base_prior_grad(w, prior)
    return float(-0.5 * residual @ terms.precision @ residual + prior_value), row


def metropolis_w(i: int, state: LatentState, data: Dataset, cfg: ModelConfig, pen: PenaltySet,
                 pen_reduced: PenaltySet, rng: np.random.Generator, step: float,
                 curve: Optional[CurveInterpolant] = None,
                 registered_row: Optional[np.ndarray] = None) -> Tuple[np.ndarray, bool, np.ndarray]:
    """
    第 i 个基函数的随机游走 Metropolis 步

    提议在规范代表元上加 step 倍的高斯增量（球形或按先验协方差整形），
    再规范化；规范化后幅度超过上限的提议直接拒绝。

    Returns:
        Tuple[np.ndarray, bool, np.ndarray]: 新基函数、是否接受、对应的配准曲线
    """
    curve = curve or CurveInterpolant(data.curves[i], data.grid, cfg.interpolation)
    current = state.bases[i]
    mean = registered_mean(state, i, cfg)

    noise = rng.standard_normal(current.size)
    if cfg.mcmc_proposal is ProposalKind.PRIOR_SHAPED:
        noise = cached_base_prior_terms(pen_reduced, cfg.gamma_w, cfg.lambda_w).cov_cholesky @ noise
    proposal = canonicalize_base(current + step * noise)
    log_u = np.log(rng.uniform())

    if np.max(np.abs(proposal)) > WORKING_ABS_BASE:
        row = registered_row if registered_row is not None else curve(warp_values(current, data.grid))
        return current, False, row

    current_value, current_row = _w_log_target(current, curve, mean, cfg, pen, pen_reduced)
    proposal_value, proposal_row = _w_log_target(proposal, curve, mean, cfg, pen, pen_reduced)
    if log_u < proposal_value - current_value:
        return proposal, True, proposal_row
    return current, False, current_row


# ---------------------------------------------------------------- 扫描与链

def gibbs_sweep(state: LatentState, registered: np.ndarray, data: Optional[Dataset], cfg: ModelConfig,
                pen: PenaltySet, pen_reduced: PenaltySet, rng: np.random.Generator,
                steps: Optional[np.ndarray] = None, curves: Optional[Sequence[CurveInterpolant]] = None,
                update_warps: bool = True) -> Tuple[LatentState, np.ndarray, np.ndarray]:
    """
    一次完整的系统扫描

    Args:
        registered: 当前基函数下的配准曲线（N×p）
        steps: 各函数的随机游走步长，默认 cfg.mcmc_step
        update_warps: False时保持全部 w 不变，此时 data 可为None（联合分布检验使用）

    Returns:
        Tuple[LatentState, np.ndarray, np.ndarray]: 新状态、新配准曲线、各w步是否接受
    """
    n = state.n_functions
    accepted = np.zeros(n, dtype=bool)
    registered = np.array(registered, dtype=float)

    if update_warps:
        steps = np.full(n, cfg.mcmc_step) if steps is None else steps
        curves = curves or [CurveInterpolant(x, data.grid, cfg.interpolation) for x in data.curves]
        bases = state.bases.copy()
        for i in range(n):
            w, ok, row = metropolis_w(i, replace(state, bases=bases), data, cfg, pen, pen_reduced, rng,
                                      float(steps[i]), curve=curves[i], registered_row=registered[i])
            bases[i] = w
            registered[i] = row
            accepted[i] = ok
        state = replace(state, bases=bases)

    state = replace(state, f1=sample_f1(state, registered, cfg, pen, rng))
    state = replace(state, f2=sample_f2(state, registered, cfg, pen, rng))
    state = sample_z(state, registered, cfg, pen, rng)
    state = sample_variances(state, cfg, pen, rng)
    return state, registered, accepted


def state_from_qstate(q: QState, cfg: ModelConfig) -> LatentState:
    """
    用变分结果构造链的初始状态

    向量取变分均值；逆伽马取均值 rate/(shape−1)，shape ≤ 1 时取众数 rate/(shape+1)；伽马取均值。
    """
    def ig_center(pair):
        shape, rate = pair
        return rate / (shape - 1) if shape > 1 else rate / (shape + 1)

    return LatentState(
        f1=q.mu_f1, f2=q.mu_f2, z0_free=q.mu_z0, z1=q.mu_z1, z2=q.mu_z2,
        var_z0=ig_center(q.ig_z0), var_z1=ig_center(q.ig_z1), var_z2=ig_center(q.ig_z2),
        eta_f=q.g_eta[0] / q.g_eta[1], lambda_f=q.g_lambda[0] / q.g_lambda[1],
        bases=q.bases,
    )


def default_initial_state(n_functions: int, p: int, cfg: ModelConfig) -> LatentState:
    """无变分结果时的起点：因子为零、恒等扭曲、单位方差"""
    return LatentState(
        f1=np.zeros(p), f2=np.zeros(p),
        z0_free=np.zeros(n_functions - 1),
        z1=np.full(n_functions, cfg.z1_prior_mean),
        z2=np.zeros(n_functions),
        var_z0=1.0, var_z1=1.0, var_z2=1.0, eta_f=1.0, lambda_f=1.0,
        bases=np.zeros((n_functions, p - 1)),
    )


def run_chain(data: Dataset, cfg: ModelConfig, init: Optional[Union[QState, LatentState]] = None,
              n_iter: int = 1000, thin: int = 1, rng_seed: int = 0,
              pen: Optional[PenaltySet] = None, pen_reduced: Optional[PenaltySet] = None) -> ChainSamples:
    """
    运行一条链

    每 thin 次迭代保存一次状态及其对数联合密度；自适应阶段的样本也保存，
    ChainSamples.after_adaptation() 可去掉它们。接受率只统计自适应结束后的迭代
    （整条链都在自适应阶段时统计全部迭代）。

    Raises:
        EngineError: n_iter < 1 或 thin < 1
    """
    if n_iter < 1 or thin < 1:
        raise EngineError("n_iter 与 thin 必须至少为1", {"n_iter": n_iter, "thin": thin})
    if pen is None or pen_reduced is None:
        pen, pen_reduced = build_penalty_pair(data.grid)

    if isinstance(init, QState):
        state = state_from_qstate(init, cfg)
    elif isinstance(init, LatentState):
        state = init
    else:
        state = default_initial_state(data.n_functions, data.p, cfg)

    rng = np.random.default_rng(rng_seed)
    n = data.n_functions
    curves = [CurveInterpolant(x, data.grid, cfg.interpolation) for x in data.curves]
    registered = np.vstack([curves[i](warp_values(state.bases[i], data.grid)) for i in range(n)])
    log_steps = np.full(n, np.log(cfg.mcmc_step))
    n_adapt = int(np.floor(cfg.mcmc_adapt_fraction * n_iter))

    draws: List[LatentState] = []
    stored: List[int] = []
    trace: List[float] = []
    accept_counts = np.zeros(n)
    all_counts = np.zeros(n)

    logger.info("MCMC开始", n_iter=n_iter, thin=thin, n_adapt=n_adapt, seed=rng_seed,
                initialized_from=type(init).__name__ if init is not None else "default")

    for iteration in range(1, n_iter + 1):
        state, registered, accepted = gibbs_sweep(
            state, registered, data, cfg, pen, pen_reduced, rng, np.exp(log_steps), curves
        )
        all_counts += accepted
        if iteration <= n_adapt:
            log_steps += (accepted - cfg.mcmc_target_accept) / iteration ** ROBBINS_MONRO_EXPONENT
            if iteration == n_adapt:
                logger.info("自适应阶段结束", steps_min=float(np.exp(log_steps).min()),
                            steps_max=float(np.exp(log_steps).max()),
                            acceptance=float(all_counts.mean() / n_adapt))
        else:
            accept_counts += accepted

        if iteration % thin == 0:
            draws.append(state)
            stored.append(iteration)
            trace.append(log_joint(state, data, cfg, pen, pen_reduced, registered=registered))

    post = n_iter - n_adapt
    rates = accept_counts / post if post > 0 else all_counts / n_iter
    logger.info("MCMC完成", stored=len(draws), mean_acceptance=float(rates.mean()))
    return ChainSamples(
        draws=draws,
        acceptance_rates=rates,
        rng_seed=rng_seed,
        log_joint_trace=np.asarray(trace),
        steps=np.exp(log_steps),
        stored_iterations=stored,
        n_adapt=n_adapt,
    )


# ---------------------------------------------------------------- 先验模拟（联合分布检验）

def draw_prior_state(n_functions: int, cfg: ModelConfig, pen: PenaltySet, pen_reduced: PenaltySet,
                     rng: np.random.Generator, identity_warps: bool = False) -> LatentState:
    """
    从先验抽取一次完整参数

    基函数取 N(0, γ_w⁻¹Σ + λ_w⁻¹P2) 的抽样并规范化；identity_warps 时全部取零。
    """
    p = pen.p
    var_z0, var_z1, var_z2 = (cfg.b / rng.gamma(cfg.a) for _ in range(3))
    eta, lam = rng.gamma(cfg.c) / cfg.d, rng.gamma(cfg.c) / cfg.d
    cov, _ = sigma_f(pen, eta, lam)
    factor_chol = np.linalg.cholesky(cov)
    f1 = factor_chol @ rng.standard_normal(p)
    f2 = factor_chol @ rng.standard_normal(p)
    z0_free = np.sqrt(var_z0) * rng.standard_normal(n_functions - 1)
    z1 = cfg.z1_prior_mean + np.sqrt(var_z1) * rng.standard_normal(n_functions)
    z2 = np.sqrt(var_z2) * rng.standard_normal(n_functions)

    if identity_warps:
        bases = np.zeros((n_functions, p - 1))
    else:
        chol = cached_base_prior_terms(pen_reduced, cfg.gamma_w, cfg.lambda_w).cov_cholesky
        bases = np.vstack([
            clamp_base(chol @ rng.standard_normal(p - 1))
            for _ in range(n_functions)
        ])
    return LatentState(f1=f1, f2=f2, z0_free=z0_free, z1=z1, z2=z2, var_z0=var_z0, var_z1=var_z1,
                       var_z2=var_z2, eta_f=eta, lambda_f=lam, bases=bases)


def draw_registered_data(state: LatentState, cfg: ModelConfig, pen: PenaltySet,
                         rng: np.random.Generator) -> np.ndarray:
    """给定参数从似然抽取配准曲线（N×p）"""
    chol = np.linalg.cholesky(pen.sigma) / np.sqrt(cfg.registration_precision)
    means = np.vstack([registered_mean(state, i, cfg) for i in range(state.n_functions)])
    return means + rng.standard_normal(means.shape) @ chol.T


# ---------------------------------------------------------------- 汇总

def summarize_chain(chain: ChainSamples, grid: TimeGrid, discard_adapt: bool = False) -> ChainSummary:
    """
    后验均值、标准差与逐点95%区间

    Raises:
        EngineError: 没有可用样本
    """
    draws = chain.after_adaptation() if discard_adapt else chain.draws
    if not draws:
        raise EngineError("链中没有可汇总的样本", {"discard_adapt": discard_adapt})

    weights = np.stack([np.column_stack([d.z0, d.z1, d.z2]) for d in draws])
    factors = np.stack([np.column_stack([d.f1, d.f2]) for d in draws])
    warps = np.stack([warps_from_bases(d.bases, grid) for d in draws])
    ddof = 1 if len(draws) > 1 else 0

    mean_warps = warps.mean(axis=0)
    mean_warps[:, 0] = grid.start
    mean_warps[:, -1] = grid.end
    return ChainSummary(
        n_draws=len(draws),
        weight_means=weights.mean(axis=0),
        weight_sds=weights.std(axis=0, ddof=ddof),
        factor_means=factors.mean(axis=0),
        factor_lower=np.percentile(factors, 2.5, axis=0),
        factor_upper=np.percentile(factors, 97.5, axis=0),
        warps=mean_warps,
        bases=np.vstack([base_from_warp(h, grid) for h in mean_warps]),
        scalar_means={
            name: float(np.mean([getattr(d, name) for d in draws]))
            for name in ("var_z0", "var_z1", "var_z2", "eta_f", "lambda_f")
        },
    )
