"""
pytest配置文件

定义全局fixtures和测试配置。
"""

import numpy as np
import pytest

from app.config import ModelConfig, settings
from app.core.fda_grid import build_penalty_pair, build_time_grid
from app.core.simgen import simulate_set1, simulate_set2
from app.models import AnnealMode, Interpolation, LatentState, QState


def random_spd(rng: np.random.Generator, p: int, scale: float = 0.1) -> np.ndarray:
    """随机对称正定矩阵"""
    B = rng.standard_normal((p, p))
    return scale * (B @ B.T + 0.5 * np.eye(p))


def make_state(n: int = 3, p: int = 4, seed: int = 7, **overrides) -> LatentState:
    """随机潜变量状态"""
    rng = np.random.default_rng(seed)
    values = dict(
        f1=rng.standard_normal(p),
        f2=rng.standard_normal(p),
        z0_free=0.3 * rng.standard_normal(n - 1),
        z1=1.0 + 0.2 * rng.standard_normal(n),
        z2=0.5 * rng.standard_normal(n),
        var_z0=0.7, var_z1=0.4, var_z2=1.3, eta_f=2.0, lambda_f=0.5,
        bases=0.1 * rng.standard_normal((n, p - 1)),
    )
    values.update(overrides)
    return LatentState(**values)


@pytest.fixture
def rng():
    """固定种子的随机数生成器"""
    return np.random.default_rng(12345)


@pytest.fixture
def tiny_grid():
    """p=4、间距为1的网格"""
    return build_time_grid(0.0, 3.0, 4)


@pytest.fixture
def tiny_pens(tiny_grid):
    """完整与截断网格上的惩罚矩阵"""
    return build_penalty_pair(tiny_grid)


@pytest.fixture
def oracle_config():
    """稠密验算用的小规模配置"""
    return ModelConfig(gamma1=2.0, gamma2=1.0, interpolation=Interpolation.LINEAR,
                       anneal_mode=AnnealMode.NONE)


@pytest.fixture
def tiny_state():
    """N=3、p=4的随机状态"""
    return make_state()


@pytest.fixture
def tiny_registered(rng):
    """N=3、p=4的随机配准曲线"""
    return rng.standard_normal((3, 4))


@pytest.fixture
def tiny_qstate(rng, tiny_registered):
    """N=3、p=4的随机变分状态"""
    n, p = 3, 4
    return QState(
        mu_f1=rng.standard_normal(p),
        mu_f2=rng.standard_normal(p),
        cov_f1=random_spd(rng, p),
        cov_f2=random_spd(rng, p),
        mu_z0=0.3 * rng.standard_normal(n - 1),
        var_z0q=rng.uniform(0.01, 0.1, n - 1),
        mu_z1=1.0 + 0.2 * rng.standard_normal(n),
        var_z1q=rng.uniform(0.01, 0.1, n),
        mu_z2=0.5 * rng.standard_normal(n),
        var_z2q=rng.uniform(0.01, 0.1, n),
        ig_z0=(2.0, 1.5),
        ig_z1=(2.5, 0.8),
        ig_z2=(2.5, 1.2),
        g_eta=(3.0, 1.5),
        g_lambda=(3.0, 4.0),
        bases=np.zeros((n, p - 1)),
        registered=tiny_registered,
    )


@pytest.fixture(scope="session")
def sim_set1_small():
    """第一模拟集（p=30）"""
    return simulate_set1(p=30, seed=0)


@pytest.fixture(scope="session")
def sim_set2_small():
    """第二模拟集（p=20，N=6）"""
    return simulate_set2(p=20, n=6, seed=1)


@pytest.fixture
def fast_config():
    """集成测试用的快速配置"""
    return ModelConfig(anneal_mode=AnnealMode.NONE, max_iters=8)


@pytest.fixture
def out_dir(tmp_path):
    """测试输出目录"""
    path = tmp_path / "out"
    path.mkdir()
    return path


@pytest.fixture(autouse=True)
def setup_test_environment(monkeypatch):
    """测试中只输出警告及以上日志"""
    monkeypatch.setattr(settings, "log_level", "warning")


# 测试收集钩子
def pytest_collection_modifyitems(config, items):
    """根据路径添加标记"""
    for item in items:
        path = str(item.fspath)
        if "unit" in path:
            item.add_marker(pytest.mark.unit)
        elif "integration" in path:
            item.add_marker(pytest.mark.integration)
        elif "e2e" in path:
            item.add_marker(pytest.mark.e2e)
