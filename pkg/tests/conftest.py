import json

import numpy as np
import pytest

from covariance.ensemble import Ensemble
from synthetic.model import SyntheticConfig, make_ensemble


# 統計的な性質の確認に使うシード
SEEDS = list(range(20))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def random_ensemble(rng):
    """2変数 (n=16, N=5) のランダムなアンサンブル"""
    u1 = rng.standard_normal((16, 5))
    u2 = rng.standard_normal((16, 5))
    return Ensemble.from_arrays([u1, u2])


@pytest.fixture(scope="session")
def reference_ensembles():
    """シードごとの N=1000 のアンサンブル（n=128）"""
    cfg = SyntheticConfig(n=128, members=1000)
    return {seed: make_ensemble(cfg, seed) for seed in SEEDS}


@pytest.fixture
def config_file(tmp_path):
    """テスト用の設定ファイルを書き出す関数"""

    def write(**sections):
        data = {
            "logging": {"level": "WARNING", "file": None},
            "storage": {"timestamped": False, "formats": ["csv", "json"]},
        }
        for key, value in sections.items():
            data.setdefault(key, {}).update(value)
        path = tmp_path / "config.json"
        path.write_text(json.dumps(data), encoding="utf-8")
        return str(path)

    return write
