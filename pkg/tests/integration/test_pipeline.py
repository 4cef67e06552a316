"""
配准流水线集成测试

测试各引擎从拟合到写出结果文件的完整流程，以及运行清单记录。
"""

import json

import numpy as np
import pandas as pd
import pytest

from app.config import ModelConfig
from app.core.analysis import group_by_weights
from app.core.pipeline import RegistrationPipeline, RunRecorder, evaluate_registration
from app.models import Dataset, Engine, GroupAssignment, RunStatus
from app.utils.exceptions import DataFormatError, ShapeMismatchError

BASE_OUTPUTS = {"registered.csv", "warps.csv", "factors.csv", "weights.csv", "groups.csv", "metrics.json"}
DRAW_LOGS = {"draws_f1.csv", "draws_f2.csv", "draws_z0.csv", "draws_z1.csv", "draws_z2.csv",
             "draws_bases.csv", "draws_scalars.csv"}


class TestRegistrationPipeline:
    """RegistrationPipeline测试"""

    @pytest.fixture
    def data(self, sim_set2_small):
        return sim_set2_small.dataset

    def test_avb_run(self, data, fast_config, out_dir):
        """测试AVB运行写出全部结果文件"""
        outcome, metrics, written = RegistrationPipeline(fast_config).run(data, out_dir, Engine.AVB)

        names = {p.name for p in written}
        assert BASE_OUTPUTS | {"diagnostics.csv"} <= names
        assert all((out_dir / name).is_file() for name in names)
        assert outcome.chain is None
        assert metrics.sls is not None and np.isfinite(metrics.sls)
        assert len(metrics.criterion_trace) == outcome.avb.diagnostics.iterations

        registered = pd.read_csv(out_dir / "registered.csv")
        assert list(registered.columns) == ["t", *data.names]
        np.testing.assert_allclose(registered["t"], data.grid.points)
        weights = pd.read_csv(out_dir / "weights.csv")
        assert weights["z0"].sum() == pytest.approx(0.0, abs=1e-9)

    def test_mcmc_run(self, data, out_dir):
        """测试MCMC运行写出区间与样本日志"""
        outcome, metrics, written = RegistrationPipeline(ModelConfig()).run(
            data, out_dir, Engine.MCMC, seed=3, n_iter=12, thin=2)

        names = {p.name for p in written}
        assert BASE_OUTPUTS | {"factor_bands.csv"} | DRAW_LOGS <= names
        assert "diagnostics.csv" not in names
        assert len(metrics.acceptance_rates) == data.n_functions
        assert set(metrics.log_joint_trend) == {"tau", "p_value"}
        assert pd.read_csv(out_dir / "draws_z1.csv").shape[0] == 6
        groups = pd.read_csv(out_dir / "groups.csv")
        assert {"prob_1", "prob_2", "prob_3", "prob_4"} <= set(groups.columns)
        np.testing.assert_allclose(groups[["prob_1", "prob_2", "prob_3", "prob_4"]].sum(axis=1), 1.0)

    def test_avb_then_mcmc(self, data, fast_config):
        """测试先AVB再以其结果初始化链"""
        outcome = RegistrationPipeline(fast_config).fit(data, Engine.AVB_MCMC, seed=1, n_iter=4)

        assert outcome.avb is not None
        assert outcome.chain is not None
        assert outcome.engine is Engine.AVB_MCMC
        np.testing.assert_allclose(outcome.warps.mean(axis=0), data.grid.points, atol=1e-6)

    def test_sign_grouping(self, data, fast_config, out_dir):
        """测试按z2符号分组"""
        outcome, metrics, _ = RegistrationPipeline(fast_config).run(data, out_dir, grouping="z2_sign")

        labels = pd.read_csv(out_dir / "groups.csv")["label"].to_numpy()
        np.testing.assert_array_equal(labels, np.where(outcome.weights[:, 2] >= 0, 1, 2))
        assert sum(metrics.group_sizes.values()) == data.n_functions


class TestEvaluateRegistration:
    """evaluate_registration测试"""

    def test_truth_metrics(self, sim_set2_small):
        """测试使用真值配准与真实因子"""
        sim = sim_set2_small
        registered = Dataset(values=sim.true_registered, grid=sim.dataset.grid, names=sim.dataset.names)
        groups = GroupAssignment(labels=sim.group_labels)

        metrics = evaluate_registration(sim.dataset, registered, groups, sim.true_factors, sim.true_factors)

        assert metrics.sls < 1.0
        assert metrics.sls_grouped is not None
        np.testing.assert_allclose(metrics.canonical_correlations, 1.0, atol=1e-10)
        assert metrics.rank_deficient is False
        assert sum(metrics.group_sizes.values()) == 6

    def test_shape_mismatch(self, sim_set2_small):
        """测试形状不一致"""
        data = sim_set2_small.dataset
        with pytest.raises(ShapeMismatchError):
            evaluate_registration(data, data.subset([0, 1, 2]))

    def test_groups_from_weights(self, sim_set2_small):
        """测试由真实权重分组"""
        sim = sim_set2_small
        groups = group_by_weights(sim.true_weights[:, 0], sim.true_weights[:, 1], "z2_sign")

        np.testing.assert_array_equal(groups.labels, sim.group_labels)


class TestRunRecorder:
    """运行清单测试"""

    def test_completed(self, out_dir, tmp_path):
        """测试成功运行的清单"""
        source = tmp_path / "input.csv"
        source.write_text("t,a,b\n", encoding="utf-8")

        with RunRecorder("simulate", ["simulate", "--set", "1"], out_dir, seed=4) as recorder:
            recorder.add_input(source)

        manifest = json.loads((out_dir / "manifest.json").read_text(encoding="utf-8"))
        assert manifest["status"] == RunStatus.COMPLETED.value
        assert manifest["seed"] == 4
        assert str(source) in manifest["input_hashes"]
        assert "manifest.json" in manifest["outputs"]

    def test_failed(self, out_dir):
        """测试失败运行同样写出清单"""
        with pytest.raises(DataFormatError):
            with RunRecorder("register", ["register"], out_dir, config=ModelConfig()):
                raise DataFormatError("bad", row=2, column="f1")

        manifest = json.loads((out_dir / "manifest.json").read_text(encoding="utf-8"))
        assert manifest["status"] == RunStatus.FAILED.value
        assert manifest["error_code"] == "DATA_FORMAT_ERROR"
        assert manifest["config"]["gamma1"] == 100.0
