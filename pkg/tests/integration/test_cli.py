"""
命令行集成测试

通过 app.main.main 调用各子命令，检查退出码、输出文件与运行清单。
"""

import json

import pandas as pd
import pytest

from app.main import main


def _manifest(out_dir):
    return json.loads((out_dir / "manifest.json").read_text(encoding="utf-8"))


@pytest.fixture
def simulated(tmp_path):
    """第二模拟集（p=20，N=6）写出的目录"""
    out = tmp_path / "sim"
    assert main(["simulate", "--set", "2", "--p", "20", "--n", "6", "--seed", "1", "--out-dir", str(out)]) == 0
    return out


@pytest.fixture
def fast_config_file(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"anneal_mode": "none", "max_iters": 5}), encoding="utf-8")
    return path


class TestSimulate:
    """simulate子命令测试"""

    def test_writes_dataset_and_truth(self, simulated):
        """测试写出数据、真值与清单"""
        frame = pd.read_csv(simulated / "dataset.csv")
        truth = json.loads((simulated / "truth.json").read_text(encoding="utf-8"))
        manifest = _manifest(simulated)

        assert frame.shape == (20, 7)
        assert frame.columns[0] == "t"
        assert truth["set_id"] == 2
        assert manifest["status"] == "completed"
        assert manifest["seed"] == 1
        assert {"dataset.csv", "truth.json", "manifest.json"} <= set(manifest["outputs"])


class TestRegister:
    """register子命令测试"""

    def test_avb(self, simulated, fast_config_file, tmp_path):
        """测试AVB配准成功并记录输入哈希"""
        out = tmp_path / "run"
        code = main(["register", "--input", str(simulated / "dataset.csv"), "--config", str(fast_config_file),
                     "--out-dir", str(out)])

        assert code == 0
        manifest = _manifest(out)
        assert manifest["status"] == "completed"
        assert manifest["engine"] == "avb"
        assert manifest["config"]["max_iters"] == 5
        assert len(manifest["input_hashes"]) == 2
        for name in ("registered.csv", "warps.csv", "factors.csv", "weights.csv", "groups.csv",
                     "metrics.json", "diagnostics.csv"):
            assert (out / name).is_file()
        metrics = json.loads((out / "metrics.json").read_text(encoding="utf-8"))
        assert len(metrics["criterion_trace"]) <= 5

    def test_missing_input(self, tmp_path):
        """测试输入文件不存在"""
        out = tmp_path / "run"

        code = main(["register", "--input", str(tmp_path / "nope.csv"), "--out-dir", str(out)])

        assert code == 1
        manifest = _manifest(out)
        assert manifest["status"] == "failed"
        assert manifest["error_code"] == "VALIDATION_ERROR"

    def test_bad_config(self, simulated, tmp_path):
        """测试配置中的未知键"""
        config = tmp_path / "bad.json"
        config.write_text(json.dumps({"gamma3": 1.0}), encoding="utf-8")
        out = tmp_path / "run"

        code = main(["register", "--input", str(simulated / "dataset.csv"), "--config", str(config),
                     "--out-dir", str(out)])

        assert code == 1
        assert _manifest(out)["error_code"] == "CONFIG_ERROR"

    def test_malformed_csv(self, tmp_path):
        """测试格式错误的数据文件"""
        data = tmp_path / "bad.csv"
        data.write_text("t,f1,f2\n0,1,2\n1,x,3\n2,1,4\n3,1,1\n", encoding="utf-8")
        out = tmp_path / "run"

        code = main(["register", "--input", str(data), "--out-dir", str(out)])

        assert code == 1
        manifest = _manifest(out)
        assert manifest["error_code"] == "DATA_FORMAT_ERROR"
        assert "f1" in manifest["error_message"]

    def test_invalid_iterations(self, simulated, tmp_path):
        """测试迭代次数不合法"""
        out = tmp_path / "run"

        code = main(["register", "--input", str(simulated / "dataset.csv"), "--engine", "mcmc",
                     "--iters", "0", "--out-dir", str(out)])

        assert code == 1
        manifest = _manifest(out)
        assert manifest["status"] == "failed"
        assert manifest["error_code"] == "VALIDATION_ERROR"
        assert manifest["engine"] == "mcmc"

    def test_mcmc_deterministic(self, simulated, tmp_path):
        """测试相同种子的MCMC运行输出逐字节相同"""
        outs = [tmp_path / "a", tmp_path / "b"]
        for out in outs:
            code = main(["register", "--input", str(simulated / "dataset.csv"), "--engine", "mcmc",
                         "--iters", "10", "--seed", "5", "--out-dir", str(out)])
            assert code == 0

        names = sorted(p.name for p in outs[0].iterdir() if p.name != "manifest.json")
        assert "draws_scalars.csv" in names
        assert names == sorted(p.name for p in outs[1].iterdir() if p.name != "manifest.json")
        for name in names:
            assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes(), name


class TestUsage:
    """用法错误测试"""

    @pytest.mark.parametrize("argv", [
        [],
        ["register"],
        ["bogus"],
        ["simulate", "--set", "3", "--out-dir", "x"],
    ])
    def test_usage_errors(self, argv, capsys):
        """测试用法错误返回2"""
        assert main(argv) == 2
        assert capsys.readouterr().err


class TestEvaluate:
    """evaluate子命令测试"""

    def test_with_groups_and_truth(self, simulated, fast_config_file, tmp_path):
        """测试分组与真值评估"""
        run = tmp_path / "run"
        assert main(["register", "--input", str(simulated / "dataset.csv"), "--config", str(fast_config_file),
                     "--out-dir", str(run)]) == 0

        code = main(["evaluate", "--original", str(simulated / "dataset.csv"),
                     "--registered", str(run / "registered.csv"), "--groups", str(run / "groups.csv"),
                     "--truth", str(simulated / "truth.json")])

        assert code == 0
        metrics = json.loads((run / "metrics.json").read_text(encoding="utf-8"))
        assert metrics["sls"] >= 0.0
        assert metrics["sls_grouped"] is not None
        assert len(metrics["canonical_correlations"]) == 2
        assert all(0.0 <= c <= 1.0 + 1e-12 for c in metrics["canonical_correlations"])
        assert _manifest(run)["command"] == "evaluate"

    def test_shape_mismatch(self, simulated, tmp_path):
        """测试原始与配准数据形状不一致"""
        other = tmp_path / "other"
        assert main(["simulate", "--set", "2", "--p", "25", "--n", "6", "--out-dir", str(other)]) == 0

        code = main(["evaluate", "--original", str(simulated / "dataset.csv"),
                     "--registered", str(other / "dataset.csv"), "--out-dir", str(tmp_path / "eval")])

        assert code == 1
        assert _manifest(tmp_path / "eval")["error_code"] == "SHAPE_MISMATCH_ERROR"
