"""
模型核心模块

配准函数的似然与完整的未归一化对数联合密度，两种推断引擎共用。

配准后的函数服从
    X_i(h_i) ~ N_p(z0i·1 + z1i·f1 + g·z2i·f2, (γ1+γ2)⁻¹Σ),  g = γ2/(γ1+γ2)
"""

from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, Optional, Sequence, Union

import numpy as np
from scipy import stats

from ..config import ModelConfig
from ..models import Dataset, LatentState, PenaltySet, TimeGrid, Warp, Interpolation
from .warp_engine import (
    BasePriorTerms, CurveInterpolant, base_prior_terms, log_base_prior, warp_values
)

LOG_2PI = float(np.log(2 * np.pi))


@dataclass(frozen=True, eq=False)
class DataTerms:
    """配准似然的预计算量"""
    precision: np.ndarray        # A = (γ1+γ2)Σ⁻¹
    ratio: float                 # g = γ2/(γ1+γ2)
    log_norm: float              # −p/2·log2π + ½·log|A|
    ones_precision: np.ndarray   # A·1
    ones_quad: float             # 1ᵀA1


@lru_cache(maxsize=64)
def data_terms(cfg: ModelConfig, pen: PenaltySet) -> DataTerms:
    """按 (配置, 惩罚矩阵) 缓存的似然预计算量"""
    p = pen.p
    precision = cfg.registration_precision * pen.sigma_inv
    log_det = p * np.log(cfg.registration_precision) + pen.log_det_sigma_inv
    ones_precision = precision @ np.ones(p)
    return DataTerms(
        precision=precision,
        ratio=cfg.factor_ratio,
        log_norm=float(-0.5 * p * LOG_2PI + 0.5 * log_det),
        ones_precision=ones_precision,
        ones_quad=float(ones_precision.sum()),
    )


@lru_cache(maxsize=64)
def cached_base_prior_terms(pen_reduced: PenaltySet, gamma_w: float, lambda_w: float) -> BasePriorTerms:
    """按 (截断惩罚矩阵, γ_w, λ_w) 缓存的基函数先验"""
    return base_prior_terms(pen_reduced, gamma_w, lambda_w)


def registered_mean(state: LatentState, i: int, cfg: ModelConfig) -> np.ndarray:
    """第 i 个配准函数的均值 z0i·1 + z1i·f1 + g·z2i·f2"""
    return state.z0[i] + state.z1[i] * state.f1 + cfg.factor_ratio * state.z2[i] * state.f2


def registered_means(state: LatentState, cfg: ModelConfig) -> np.ndarray:
    """全部配准均值，N×p"""
    return (state.z0[:, None] + state.z1[:, None] * state.f1[None, :]
            + cfg.factor_ratio * state.z2[:, None] * state.f2[None, :])


def warps_from_bases(bases: np.ndarray, grid: TimeGrid) -> np.ndarray:
    """N×(p−1) 基函数矩阵 → N×p 扭曲矩阵"""
    return np.vstack([warp_values(w, grid) for w in np.atleast_2d(bases)])


def registered_curves(data: Dataset, warps: Union[np.ndarray, Sequence[Warp]],
                      interpolation: Interpolation = Interpolation.MONOTONE_CUBIC) -> np.ndarray:
    """全部 X_i(h_i)，N×p"""
    rows = [getattr(h, "values", h) for h in warps]
    return np.vstack([
        CurveInterpolant(x, data.grid, interpolation)(h)
        for x, h in zip(data.curves, rows)
    ])


def registered_loglik(state: LatentState, registered: np.ndarray, cfg: ModelConfig,
                      pen: PenaltySet) -> float:
    """给定配准曲线（N×p）时的数据对数似然"""
    terms = data_terms(cfg, pen)
    residuals = registered - registered_means(state, cfg)
    quad = np.einsum("ij,jk,ik->i", residuals, terms.precision, residuals)
    return float(residuals.shape[0] * terms.log_norm - 0.5 * quad.sum())


def data_loglik(state: LatentState, data: Dataset, cfg: ModelConfig, pen: PenaltySet,
                warps: Union[np.ndarray, Sequence[Warp]]) -> float:
    """Σ_i log N_p(X_i(h_i); 配准均值_i, (γ1+γ2)⁻¹Σ)"""
    return registered_loglik(state, registered_curves(data, warps, cfg.interpolation), cfg, pen)


def log_factor_prior(f: np.ndarray, eta: float, lam: float, pen: PenaltySet) -> float:
    """log N_p(f; 0, η⁻¹P1 + λ⁻¹P2)"""
    p = pen.p
    precision = eta * pen.p1_pinv + lam * pen.p2_pinv
    # 两个值域正交：log|ηP1⁻ + λP2⁻| = 2logη + (p−2)logλ + log|Σ⁻¹|
    log_det = 2 * np.log(eta) + (p - 2) * np.log(lam) + pen.log_det_sigma_inv
    return float(-0.5 * p * LOG_2PI + 0.5 * log_det - 0.5 * f @ precision @ f)


def log_prior_terms(state: LatentState, cfg: ModelConfig, pen: PenaltySet,
                    pen_reduced: PenaltySet) -> Dict[str, float]:
    """逐项先验对数密度"""
    prior_w = cached_base_prior_terms(pen_reduced, cfg.gamma_w, cfg.lambda_w)
    return {
        "bases": float(sum(
            log_base_prior(w, pen_reduced, cfg.gamma_w, cfg.lambda_w, terms=prior_w) for w in state.bases
        )),
        "z0": float(stats.norm.logpdf(state.z0_free, 0.0, np.sqrt(state.var_z0)).sum()),
        "z1": float(stats.norm.logpdf(state.z1, cfg.z1_prior_mean, np.sqrt(state.var_z1)).sum()),
        "z2": float(stats.norm.logpdf(state.z2, 0.0, np.sqrt(state.var_z2)).sum()),
        "var_z0": float(stats.invgamma.logpdf(state.var_z0, cfg.a, scale=cfg.b)),
        "var_z1": float(stats.invgamma.logpdf(state.var_z1, cfg.a, scale=cfg.b)),
        "var_z2": float(stats.invgamma.logpdf(state.var_z2, cfg.a, scale=cfg.b)),
        "f1": log_factor_prior(state.f1, state.eta_f, state.lambda_f, pen),
        "f2": log_factor_prior(state.f2, state.eta_f, state.lambda_f, pen),
        "eta_f": float(stats.gamma.logpdf(state.eta_f, cfg.c, scale=1.0 / cfg.d)),
        "lambda_f": float(stats.gamma.logpdf(state.lambda_f, cfg.c, scale=1.0 / cfg.d)),
    }


def log_joint(state: LatentState, data: Dataset, cfg: ModelConfig, pen: PenaltySet,
              pen_reduced: PenaltySet, registered: Optional[np.ndarray] = None) -> float:
    """
    未归一化对数联合密度：数据似然加全部先验

    Args:
        registered: 已算好的配准曲线（N×p），为None时由 state.bases 计算
    """
    if registered is None:
        registered = registered_curves(data, warps_from_bases(state.bases, data.grid), cfg.interpolation)
    return registered_loglik(state, registered, cfg, pen) + sum(log_prior_terms(state, cfg, pen, pen_reduced).values())
