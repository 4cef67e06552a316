"""
MCMC引擎单元测试

以稠密线性高斯模型验算完整条件分布，并测试抽样矩、Metropolis步和链的存储。
"""

import numpy as np
import pytest

from app.config import ModelConfig
from app.core.fda_grid import build_penalty_pair, build_time_grid, sigma_f
from app.core.mcmc_engine import (
    default_initial_state, draw_prior_state, draw_registered_data, f1_conditional, f2_conditional, gibbs_sweep,
    metropolis_w, run_chain, sample_f1, sample_variances, state_from_qstate, summarize_chain, variance_conditionals,
    z0_conditional, z1_conditional, z2_conditional
)
from app.core.warp_engine import WORKING_ABS_BASE, canonical_shift, warp_values
from app.models import ChainSamples, Dataset, Interpolation
from app.utils.exceptions import EngineError
from tests.conftest import make_state


class TestFactorConditionals:
    """f1、f2 完整条件分布测试"""

    def test_f1_stacked_oracle(self, tiny_state, tiny_registered, tiny_pens, oracle_config):
        """测试f1条件分布与堆叠模型一致"""
        pen, _ = tiny_pens
        state, cfg = tiny_state, oracle_config
        A = cfg.registration_precision * pen.sigma_inv
        g = cfg.factor_ratio

        W = np.kron(np.eye(3), A)
        design = np.kron(state.z1[:, None], np.eye(4))
        offset = np.concatenate([state.z0[i] + g * state.z2[i] * state.f2 for i in range(3)])
        _, prior_precision = sigma_f(pen, state.eta_f, state.lambda_f)
        precision = design.T @ W @ design + prior_precision
        expected_mean = np.linalg.solve(precision, design.T @ W @ (tiny_registered.ravel() - offset))

        mean, cov = f1_conditional(state, tiny_registered, cfg, pen)

        np.testing.assert_allclose(mean, expected_mean, rtol=1e-9, atol=1e-12)
        np.testing.assert_allclose(cov, np.linalg.inv(precision), rtol=1e-9, atol=1e-12)

    def test_f2_stacked_oracle(self, tiny_state, tiny_registered, tiny_pens, oracle_config):
        """测试f2条件分布与堆叠模型一致"""
        pen, _ = tiny_pens
        state, cfg = tiny_state, oracle_config
        A = cfg.registration_precision * pen.sigma_inv
        g = cfg.factor_ratio

        W = np.kron(np.eye(3), A)
        design = g * np.kron(state.z2[:, None], np.eye(4))
        offset = np.concatenate([state.z0[i] + state.z1[i] * state.f1 for i in range(3)])
        _, prior_precision = sigma_f(pen, state.eta_f, state.lambda_f)
        precision = design.T @ W @ design + prior_precision
        expected_mean = np.linalg.solve(precision, design.T @ W @ (tiny_registered.ravel() - offset))

        mean, cov = f2_conditional(state, tiny_registered, cfg, pen)

        np.testing.assert_allclose(mean, expected_mean, rtol=1e-9, atol=1e-12)
        np.testing.assert_allclose(cov, np.linalg.inv(precision), rtol=1e-9, atol=1e-12)

    def test_sample_f1_moments(self, tiny_state, tiny_registered, tiny_pens, oracle_config):
        """测试f1抽样的样本矩"""
        pen, _ = tiny_pens
        rng = np.random.default_rng(0)
        mean, cov = f1_conditional(tiny_state, tiny_registered, oracle_config, pen)

        draws = np.array([sample_f1(tiny_state, tiny_registered, oracle_config, pen, rng) for _ in range(4000)])

        se = np.sqrt(np.diag(cov) / draws.shape[0])
        assert np.all(np.abs(draws.mean(axis=0) - mean) < 5 * se)
        np.testing.assert_allclose(np.cov(draws.T), cov, rtol=0.15, atol=0.1 * np.abs(cov).max())


class TestWeightConditionals:
    """z0、z1、z2 完整条件分布测试"""

    def test_z0_two_functions(self, tiny_pens, oracle_config, rng):
        """测试两个函数时z0条件分布"""
        pen, _ = tiny_pens
        cfg = oracle_config
        state = make_state(n=2, p=4)
        registered = rng.standard_normal((2, 4))
        A = cfg.registration_precision * pen.sigma_inv
        g = cfg.factor_ratio

        design = np.kron(np.array([[1.0], [-1.0]]), np.ones((4, 1)))
        W = np.kron(np.eye(2), A)
        offset = np.concatenate([state.z1[i] * state.f1 + g * state.z2[i] * state.f2 for i in range(2)])
        precision = 1.0 / state.var_z0 + (design.T @ W @ design).item()
        expected = (design.T @ W @ (registered.ravel() - offset)).item() / precision

        mean, var = z0_conditional(0, state, registered, cfg, pen)

        assert var == pytest.approx(1.0 / precision, rel=1e-10)
        assert mean == pytest.approx(expected, rel=1e-9)

    @pytest.mark.parametrize("i", [0, 1])
    def test_z0_three_functions(self, tiny_state, tiny_registered, tiny_pens, oracle_config, i):
        """测试三个函数时z0条件分布含其余自由分量的耦合"""
        pen, _ = tiny_pens
        state, cfg = tiny_state, oracle_config
        A = cfg.registration_precision * pen.sigma_inv
        g = cfg.factor_ratio
        other = state.z0_free[1 - i]

        loading = np.zeros(3)
        loading[i], loading[2] = 1.0, -1.0
        fixed = np.zeros(3)
        fixed[1 - i], fixed[2] = other, -other
        design = np.kron(loading[:, None], np.ones((4, 1)))
        W = np.kron(np.eye(3), A)
        offset = np.concatenate([fixed[k] + state.z1[k] * state.f1 + g * state.z2[k] * state.f2 for k in range(3)])
        precision = 1.0 / state.var_z0 + (design.T @ W @ design).item()
        expected = (design.T @ W @ (tiny_registered.ravel() - offset)).item() / precision

        mean, var = z0_conditional(i, state, tiny_registered, cfg, pen)

        assert var == pytest.approx(1.0 / precision, rel=1e-10)
        assert mean == pytest.approx(expected, rel=1e-9, abs=1e-12)

    def test_z1_z2_regression_form(self, tiny_state, tiny_registered, tiny_pens, oracle_config):
        """测试z1、z2条件分布为单变量广义最小二乘后验"""
        pen, _ = tiny_pens
        state, cfg = tiny_state, oracle_config
        A = cfg.registration_precision * pen.sigma_inv
        g = cfg.factor_ratio

        for i in range(3):
            y = tiny_registered[i] - state.z0[i] - g * state.z2[i] * state.f2
            precision = 1.0 / state.var_z1 + state.f1 @ A @ state.f1
            mean, var = z1_conditional(i, state, tiny_registered, cfg, pen)
            assert var == pytest.approx(1.0 / precision, rel=1e-10)
            assert mean == pytest.approx((cfg.z1_prior_mean / state.var_z1 + state.f1 @ A @ y) / precision, rel=1e-9)

            x = g * state.f2
            y = tiny_registered[i] - state.z0[i] - state.z1[i] * state.f1
            precision = 1.0 / state.var_z2 + x @ A @ x
            mean, var = z2_conditional(i, state, tiny_registered, cfg, pen)
            assert var == pytest.approx(1.0 / precision, rel=1e-10)
            assert mean == pytest.approx((x @ A @ y) / precision, rel=1e-9)

    def test_large_precision_gives_projection(self, tiny_pens, rng):
        """测试配准精度很大时z1条件均值趋于广义最小二乘投影"""
        pen, _ = tiny_pens
        cfg = ModelConfig(gamma1=1e6, gamma2=1e5)
        state = make_state(n=3, p=4, z2=np.zeros(3), z0_free=np.zeros(2))
        registered = np.outer([0.8, 1.1, 1.7], state.f1) + 1e-3 * rng.standard_normal((3, 4))
        weights = pen.sigma_inv

        for i in range(3):
            projection = (state.f1 @ weights @ registered[i]) / (state.f1 @ weights @ state.f1)
            mean, _ = z1_conditional(i, state, registered, cfg, pen)
            assert mean == pytest.approx(projection, abs=1e-3)


class TestVarianceConditionals:
    """方差条件分布测试"""

    def test_parameters(self, tiny_state, tiny_pens, oracle_config):
        """测试形状与速率"""
        pen, _ = tiny_pens
        state, cfg = tiny_state, oracle_config

        params = variance_conditionals(state, cfg, pen)

        assert params["var_z0"] == pytest.approx((cfg.a + 1.0, cfg.b + 0.5 * np.sum(state.z0_free ** 2)))
        assert params["var_z2"] == pytest.approx((cfg.a + 1.5, cfg.b + 0.5 * np.sum(state.z2 ** 2)))
        quad = state.f1 @ pen.p2_pinv @ state.f1 + state.f2 @ pen.p2_pinv @ state.f2
        assert params["lambda_f"] == pytest.approx((cfg.c + 2, cfg.d + 0.5 * quad))
        assert params["eta_f"][0] == cfg.c + 2

    def test_z1_rate_centered_at_prior_mean(self, tiny_pens):
        """测试z1方差速率围绕先验均值计算"""
        pen, _ = tiny_pens
        state = make_state(n=2, p=4, z1=np.array([1.0, 1.0]))

        centered = variance_conditionals(state, ModelConfig(), pen)["var_z1"]
        at_zero = variance_conditionals(state, ModelConfig(z1_prior_mean=0.0), pen)["var_z1"]

        assert centered == pytest.approx((1.001, 0.001))
        assert at_zero == pytest.approx((1.001, 1.001))

    def test_sample_moments(self, tiny_state, tiny_pens):
        """测试逆伽马与伽马抽样的均值"""
        pen, _ = tiny_pens
        cfg = ModelConfig(gamma1=2.0, gamma2=1.0, a=5.0, b=2.0, c=5.0, d=2.0)
        rng = np.random.default_rng(1)
        params = variance_conditionals(tiny_state, cfg, pen)

        draws = [sample_variances(tiny_state, cfg, pen, rng) for _ in range(20000)]

        shape, rate = params["var_z1"]
        assert np.mean([d.var_z1 for d in draws]) == pytest.approx(rate / (shape - 1), rel=0.02)
        shape, rate = params["eta_f"]
        assert np.mean([d.eta_f for d in draws]) == pytest.approx(shape / rate, rel=0.02)
        shape, rate = params["lambda_f"]
        assert np.mean([d.lambda_f for d in draws]) == pytest.approx(shape / rate, rel=0.02)


class TestMetropolis:
    """基函数Metropolis步测试"""

    @pytest.fixture
    def setting(self, rng):
        grid = build_time_grid(0.0, 1.0, 10)
        pen, pen_reduced = build_penalty_pair(grid)
        data = Dataset(values=rng.standard_normal((10, 3)), grid=grid)
        state = make_state(n=3, p=10)
        return data, pen, pen_reduced, state

    def test_tiny_step_accepted(self, setting):
        """测试极小步长几乎总被接受"""
        data, pen, pen_reduced, state = setting
        cfg = ModelConfig(gamma1=2.0, gamma2=1.0)
        rng = np.random.default_rng(2)

        accepted = [metropolis_w(0, state, data, cfg, pen, pen_reduced, rng, 1e-8)[1] for _ in range(200)]

        assert np.mean(accepted) >= 0.99

    def test_huge_step_rejected(self, setting):
        """测试规范化后超出幅度上限的提议被拒绝"""
        data, pen, pen_reduced, state = setting
        cfg = ModelConfig(gamma1=2.0, gamma2=1.0)
        rng = np.random.default_rng(3)

        for _ in range(20):
            w, accepted, row = metropolis_w(1, state, data, cfg, pen, pen_reduced, rng, 100.0)
            assert not accepted
            np.testing.assert_array_equal(w, state.bases[1])

    def test_accepted_proposal_is_canonical(self, setting):
        """测试接受的提议是规范代表元"""
        data, pen, pen_reduced, state = setting
        cfg = ModelConfig(gamma1=2.0, gamma2=1.0, mcmc_proposal="prior_shaped")
        rng = np.random.default_rng(4)

        w, accepted, row = metropolis_w(2, state, data, cfg, pen, pen_reduced, rng, 1e-6)

        assert accepted
        assert canonical_shift(w) == pytest.approx(0.0, abs=1e-12)
        assert row.shape == (10,)


class TestChain:
    """链运行与汇总测试"""

    @pytest.fixture
    def small_data(self, sim_set2_small):
        return sim_set2_small.dataset.subset(range(4))

    def test_thinning(self, small_data):
        """测试按间隔保存样本"""
        chain = run_chain(small_data, ModelConfig(), n_iter=10, thin=3, rng_seed=5)

        assert chain.stored_iterations == [3, 6, 9]
        assert len(chain.draws) == 3
        assert chain.log_joint_trace.shape == (3,)
        assert chain.n_adapt == 2
        assert chain.acceptance_rates.shape == (4,)

    def test_deterministic(self, small_data):
        """测试相同种子给出相同的链"""
        first = run_chain(small_data, ModelConfig(), n_iter=6, rng_seed=11)
        second = run_chain(small_data, ModelConfig(), n_iter=6, rng_seed=11)

        for a, b in zip(first.draws, second.draws):
            np.testing.assert_array_equal(a.z1, b.z1)
            np.testing.assert_array_equal(a.bases, b.bases)
        np.testing.assert_array_equal(first.log_joint_trace, second.log_joint_trace)

    def test_invalid_arguments(self, small_data):
        """测试迭代数与间隔必须为正"""
        with pytest.raises(EngineError):
            run_chain(small_data, ModelConfig(), n_iter=0)
        with pytest.raises(EngineError):
            run_chain(small_data, ModelConfig(), n_iter=5, thin=0)

    def test_z0_sums_to_zero(self, small_data):
        """测试每个样本的z0和为零"""
        chain = run_chain(small_data, ModelConfig(), n_iter=5, rng_seed=2)

        for draw in chain.draws:
            assert abs(draw.z0.sum()) < 1e-12
            for w in draw.bases:
                h = warp_values(w, small_data.grid)
                assert np.all(np.diff(h) > 0)

    def test_adapted_acceptance(self, small_data):
        """测试自适应后接受率落在合理区间"""
        cfg = ModelConfig(mcmc_adapt_fraction=0.5, interpolation=Interpolation.LINEAR)

        chain = run_chain(small_data, cfg, n_iter=300, rng_seed=3)

        assert np.all(chain.acceptance_rates > 0.1)
        assert np.all(chain.acceptance_rates < 0.9)

    def test_gibbs_sweep_without_warps(self, tiny_pens, oracle_config, tiny_state, tiny_registered):
        """测试固定扭曲的扫描不需要数据"""
        pen, pen_reduced = tiny_pens
        rng = np.random.default_rng(6)

        state, registered, accepted = gibbs_sweep(tiny_state, tiny_registered, None, oracle_config, pen,
                                                  pen_reduced, rng, update_warps=False)

        np.testing.assert_array_equal(state.bases, tiny_state.bases)
        np.testing.assert_array_equal(registered, tiny_registered)
        assert not accepted.any()

    def test_summarize(self, small_data):
        """测试后验汇总"""
        chain = run_chain(small_data, ModelConfig(), n_iter=6, rng_seed=8)

        summary = summarize_chain(chain, small_data.grid)

        z1 = np.array([d.z1 for d in chain.draws])
        assert summary.n_draws == 6
        np.testing.assert_allclose(summary.weight_means[:, 1], z1.mean(axis=0))
        np.testing.assert_allclose(summary.weight_sds[:, 1], z1.std(axis=0, ddof=1))
        assert np.all(summary.factor_lower <= summary.factor_means + 1e-12)
        assert np.all(summary.factor_upper >= summary.factor_means - 1e-12)
        np.testing.assert_array_equal(summary.warps[:, 0], small_data.grid.start)
        np.testing.assert_array_equal(summary.warps[:, -1], small_data.grid.end)
        assert set(summary.scalar_means) == {"var_z0", "var_z1", "var_z2", "eta_f", "lambda_f"}

    def test_summarize_empty(self):
        """测试全部样本位于自适应阶段时无法汇总"""
        chain = ChainSamples(draws=[make_state()], acceptance_rates=np.zeros(3), rng_seed=0,
                             stored_iterations=[1], n_adapt=5)
        with pytest.raises(EngineError):
            summarize_chain(chain, build_time_grid(0.0, 3.0, 4), discard_adapt=True)


class TestInitialStates:
    """初始状态与先验模拟测试"""

    def test_from_qstate(self, tiny_qstate, oracle_config):
        """测试由变分状态构造初值"""
        state = state_from_qstate(tiny_qstate, oracle_config)

        assert state.var_z0 == pytest.approx(1.5)
        assert state.var_z1 == pytest.approx(0.8 / 1.5)
        assert state.eta_f == pytest.approx(2.0)
        np.testing.assert_array_equal(state.z1, tiny_qstate.mu_z1)

    def test_default(self):
        """测试默认初值"""
        state = default_initial_state(4, 6, ModelConfig())

        np.testing.assert_array_equal(state.z1, 1.0)
        assert state.bases.shape == (4, 5)

    def test_prior_draws(self, tiny_pens):
        """测试先验抽样的结构约束"""
        pen, pen_reduced = tiny_pens
        cfg = ModelConfig(a=3.0, b=2.0, c=3.0, d=2.0)
        rng = np.random.default_rng(9)

        state = draw_prior_state(5, cfg, pen, pen_reduced, rng)
        registered = draw_registered_data(state, cfg, pen, rng)
        identity = draw_prior_state(5, cfg, pen, pen_reduced, rng, identity_warps=True)

        assert abs(state.z0.sum()) < 1e-12
        assert np.all(np.abs(state.bases) <= WORKING_ABS_BASE)
        np.testing.assert_allclose([canonical_shift(w) for w in state.bases], 0.0, atol=1e-12)
        assert registered.shape == (5, 4)
        np.testing.assert_array_equal(identity.bases, 0.0)
