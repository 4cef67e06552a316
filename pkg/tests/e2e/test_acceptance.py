"""
端到端验收测试

在模拟数据上完整运行采样器检验、AVB、MCMC与命令行，全部标记为慢速。
"""

import json

import numpy as np
import pytest

from app.config import ModelConfig
from app.core.analysis import factor_recovery_score, group_by_weights, sls, sls_grouped
from app.core.avb_engine import run_avb
from app.core.diagnostics import geweke_test, mann_kendall_trend
from app.core.fda_grid import build_time_grid
from app.core.mcmc_engine import run_chain
from app.core.simgen import simulate_set1, simulate_set2
from app.main import main
from app.models import AnnealMode

pytestmark = [pytest.mark.e2e, pytest.mark.slow]


class TestSamplerCorrectness:
    """采样器联合分布检验"""

    def test_geweke(self):
        """测试两种模拟器的一阶二阶矩在3个标准误内"""
        cfg = ModelConfig(gamma1=2.0, gamma2=1.0, a=6.0, b=5.0, c=6.0, d=5.0)

        scores = geweke_test(cfg, build_time_grid(0.0, 3.0, 4), n_functions=3, n_draws=50_000, seed=11)

        for name, z in scores.items():
            assert abs(z) < 3.0, name


class TestAvbMonotone:
    """AVB准则单调性"""

    def test_set1_subsample(self):
        """测试子样本上准则不降且收敛"""
        sim = simulate_set1(p=30, seed=0)
        data = sim.dataset.subset(np.linspace(0, 20, 10).round().astype(int))
        cfg = ModelConfig(anneal_mode=AnnealMode.NONE, max_iters=500)

        result = run_avb(data, cfg)

        trace = np.asarray(result.diagnostics.criterion_trace)
        assert np.all(np.diff(trace) >= -1e-8 * np.abs(trace[:-1]))
        assert result.diagnostics.monotone_violations == 0
        assert result.diagnostics.converged


class TestEndToEnd:
    """模拟集上的配准效果"""

    def test_set1(self):
        """测试第一模拟集的sls与因子恢复（5个种子平均）"""
        values, correlations = [], []
        for seed in range(5):
            sim = simulate_set1(p=61, seed=seed)
            result = run_avb(sim.dataset, ModelConfig())
            values.append(sls(sim.dataset.values, result.registered.T, sim.dataset.grid))
            scores, _ = factor_recovery_score(result.factors[:, 0], result.factors[:, 1], sim.true_factors)
            correlations.append(scores)

        assert np.mean(values) < 0.3
        assert np.all(np.mean(correlations, axis=0) > 0.95)

    def test_set2_grouping(self):
        """测试第二模拟集按z2符号分组的准确率与分组sls"""
        sim = simulate_set2(p=61, n=20, seed=0)
        result = run_avb(sim.dataset, ModelConfig())

        groups = group_by_weights(result.q.mu_z1, result.q.mu_z2, "z2_sign")
        accuracy = float(np.mean(groups.labels == sim.group_labels))
        grouped = sls_grouped(sim.dataset.values, result.registered.T, groups, sim.dataset.grid)

        # f2 的符号不可辨识，标签可能整体互换
        assert max(accuracy, 1.0 - accuracy) >= 0.9
        assert grouped < 0.5


class TestNoBurnIn:
    """AVB初始化的链无需预烧"""

    @pytest.fixture(scope="class")
    def data(self):
        return simulate_set1(p=61, seed=0).dataset

    def test_avb_initialized(self, data):
        """测试AVB初始化的链对数联合密度无显著趋势"""
        cfg = ModelConfig()
        avb = run_avb(data, cfg)

        chain = run_chain(data, cfg, init=avb.q, n_iter=2000, rng_seed=1)

        _, p_value = mann_kendall_trend(chain.log_joint_trace)
        assert p_value > 0.05

    def test_default_initialized(self, data):
        """测试默认初始化的链存在显著趋势"""
        chain = run_chain(data, ModelConfig(), n_iter=2000, rng_seed=1)

        _, p_value = mann_kendall_trend(chain.log_joint_trace)
        assert p_value < 0.05


class TestCommandLine:
    """命令行完整流程"""

    def test_simulate_register_evaluate(self, tmp_path):
        """测试模拟、配准与评估串联"""
        sim_dir, run_dir = tmp_path / "sim", tmp_path / "run"
        assert main(["simulate", "--set", "1", "--seed", "2", "--out-dir", str(sim_dir)]) == 0
        assert main(["register", "--input", str(sim_dir / "dataset.csv"), "--out-dir", str(run_dir)]) == 0

        code = main(["evaluate", "--original", str(sim_dir / "dataset.csv"),
                     "--registered", str(run_dir / "registered.csv"), "--truth", str(sim_dir / "truth.json")])

        assert code == 0
        metrics = json.loads((run_dir / "metrics.json").read_text(encoding="utf-8"))
        assert metrics["sls"] < 1.0
        assert len(metrics["canonical_correlations"]) == 2
