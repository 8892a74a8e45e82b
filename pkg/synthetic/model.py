#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
スペクトルEnKF解析システム - 2変数の1次元確率モデル

変数1: ランダムなガウス型の山 u1(x) = h exp(-(x - c)^2 / w^2)
変数2: 滑らかな確率場 + 0.3 u1
"""

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from covariance.ensemble import Ensemble, Grid
from enkf.noise import NoiseModel
from enkf.observation import observe_variable
from utils.exceptions import InvalidParameterError
from utils.helpers import parallel_map, spawn_generators


logger = logging.getLogger(__name__)

# w の下限（0付近での発散を避ける）
MIN_WIDTH = 1e-3


@dataclass(frozen=True)
class BumpParameters:
    """ガウス型の山のパラメータ (c, w, h)"""

    center: float
    width: float
    height: float


@dataclass(frozen=True)
class SyntheticConfig:
    """
    合成モデルの設定

    Attributes:
        n (int): 格子点数（区間 [0,1]）
        members (int): アンサンブルのメンバー数 N
        seed (int): 基本シード
        center_mean, center_std (float): c ~ N(0.3, 0.1^2)
        width_mean, width_std (float): w ~ N(0.1, 0.01^2)
        height_mean, height_std (float): h ~ N(1, 0.1^2)
        smooth_amplitude (float): 滑らかな場の基本振幅 σ0
        max_frequency (int): 滑らかな場の最大周波数 M（None は n/2）
        coupling (float): 変数2に加える変数1の係数
        truth (BumpParameters): 真値の山のパラメータ
        observation_variance (float): 観測誤差の分散 σ^2
    """

    n: int = 128
    members: int = 10
    seed: int = 0
    center_mean: float = 0.3
    center_std: float = 0.1
    width_mean: float = 0.1
    width_std: float = 0.01
    height_mean: float = 1.0
    height_std: float = 0.1
    smooth_amplitude: float = 0.2
    max_frequency: object = None
    coupling: float = 0.3
    truth: BumpParameters = field(default_factory=lambda: BumpParameters(0.4, 0.12, 1.5))
    observation_variance: float = 1e-4

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise InvalidParameterError(f"格子点数は2以上である必要があります: n={self.n}")
        if int(self.members) != self.members or self.members < 1:
            raise InvalidParameterError(f"メンバー数は1以上である必要があります: N={self.members}")
        if self.max_frequency is not None and int(self.max_frequency) < 1:
            raise InvalidParameterError(f"最大周波数は1以上である必要があります: M={self.max_frequency}")
        for name in ("center_std", "width_std", "height_std", "smooth_amplitude", "observation_variance"):
            if getattr(self, name) < 0:
                raise InvalidParameterError(f"{name} は非負である必要があります: {getattr(self, name)}")

    @property
    def grid(self):
        return Grid(int(self.n))

    @property
    def frequencies(self):
        """滑らかな場の周波数の数 M"""
        return int(self.max_frequency) if self.max_frequency is not None else int(self.n) // 2

    def with_members(self, members):
        return replace(self, members=int(members))


def gaussian_bump(x, center, width, height):
    """
    h exp(-(x - c)^2 / w^2) を評価する

    Args:
        x (float | numpy.ndarray): 座標
        center (float): 中心 c
        width (float): 幅 w
        height (float): 高さ h

    Returns:
        numpy.ndarray: 山の値
    """
    x = np.asarray(x, dtype=float)
    return height * np.exp(-((x - center) ** 2) / width ** 2)


def sample_bump_parameters(rng, cfg):
    """(c, w, h) を設定の分布から抽出する"""
    center = rng.normal(cfg.center_mean, cfg.center_std)
    width = max(rng.normal(cfg.width_mean, cfg.width_std), MIN_WIDTH)
    height = rng.normal(cfg.height_mean, cfg.height_std)
    return BumpParameters(float(center), float(width), float(height))


def sample_var1(rng, cfg, params=None):
    """
    変数1のメンバーを1つ生成する

    Args:
        rng (numpy.random.Generator): 乱数生成器
        cfg (SyntheticConfig): 設定
        params (BumpParameters): 固定パラメータ（指定時は乱数を使わない）

    Returns:
        numpy.ndarray: 長さ n のベクトル
    """
    if params is None:
        params = sample_bump_parameters(rng, cfg)
    return gaussian_bump(cfg.grid.nodes, params.center, params.width, params.height)


def sample_smooth_field(rng, cfg):
    """
    滑らかな確率場 Σ_{m=1..M} a_m sin(m π x), a_m ~ N(0, (σ0/m)^2)

    Args:
        rng (numpy.random.Generator): 乱数生成器
        cfg (SyntheticConfig): 設定

    Returns:
        numpy.ndarray: 長さ n のベクトル
    """
    M = cfg.frequencies
    freqs = np.arange(1, M + 1)
    amplitudes = rng.standard_normal(M) * (cfg.smooth_amplitude / freqs)
    x = cfg.grid.nodes
    return np.sin(np.pi * np.outer(x, freqs)) @ amplitudes


def sample_var2(rng, cfg, u1):
    """
    変数2のメンバーを生成する（滑らかな場 + coupling * u1）

    Args:
        rng (numpy.random.Generator): 乱数生成器
        cfg (SyntheticConfig): 設定
        u1 (numpy.ndarray): 同じメンバーの変数1

    Returns:
        numpy.ndarray: 長さ n のベクトル
    """
    u1 = np.asarray(u1, dtype=float)
    if u1.shape != (cfg.n,):
        raise InvalidParameterError(f"u1 の長さ {u1.shape} が格子点数 {cfg.n} と一致しません")
    return sample_smooth_field(rng, cfg) + cfg.coupling * u1


def _sample_member(rng, cfg):
    u1 = sample_var1(rng, cfg)
    return u1, sample_var2(rng, cfg, u1)


def make_ensemble(cfg, rng=None, workers=1):
    """
    2変数のアンサンブルを生成する

    メンバー k は SeedSequence(seed).spawn の k 番目の乱数列から作るため、
    同じシードなら N=10 のアンサンブルは N=1000 のアンサンブルの先頭10メンバーと一致する。

    Args:
        cfg (SyntheticConfig): 設定
        rng (int | numpy.random.Generator): シードまたは乱数生成器（省略時は cfg.seed）
        workers (int): 同時実行数

    Returns:
        Ensemble: 変数 u1, u2 のアンサンブル
    """
    if rng is None:
        seed = cfg.seed
    elif isinstance(rng, np.random.Generator):
        seed = int(rng.integers(2 ** 63))
    else:
        seed = int(rng)

    generators = spawn_generators(seed, cfg.members)
    samples = parallel_map(lambda g: _sample_member(g, cfg), generators, workers)

    u1 = np.column_stack([s[0] for s in samples])
    u2 = np.column_stack([s[1] for s in samples])
    grid = cfg.grid

    logger.info(f"合成アンサンブルを生成しました: n={cfg.n}, N={cfg.members}, seed={seed}")
    return Ensemble.from_arrays([u1, u2], names=["u1", "u2"], grids=[grid, grid])


def make_truth_and_obs(cfg):
    """
    真値と観測を作る

    真値は固定パラメータの山、観測は変数1の全格子点 (H = [I, 0])、
    誤差は σ^2 I。

    Args:
        cfg (SyntheticConfig): 設定

    Returns:
        tuple: (真値 u1, ObservationSpec)
    """
    truth = sample_var1(None, cfg, params=cfg.truth)
    obs = observe_variable("u1", truth, NoiseModel.scalar_diag(cfg.observation_variance))
    return truth, obs


def truth_var2(cfg, truth_u1):
    """変数2の真値（滑らかな場の平均0を使った条件付き平均 coupling * u1）"""
    return cfg.coupling * np.asarray(truth_u1, dtype=float)
