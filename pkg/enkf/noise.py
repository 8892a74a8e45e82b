#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
スペクトルEnKF解析システム - 観測誤差モデルと摂動生成
"""

import logging
from dataclasses import dataclass
from enum import Enum

import numpy as np

from covariance.statistics import member_covariance, spectral_variance
from transforms.transform import TransformKind
from utils.exceptions import DimensionMismatch, InvalidParameterError
from utils.helpers import spawn_generators


logger = logging.getLogger(__name__)


class NoiseKind(str, Enum):
    """観測誤差共分散 R の表現"""

    SCALAR_DIAG = "scalar_diag"                  # σ² I
    DIAG = "diag"                                # Diag(r)
    SAMPLE_PERTURBATION = "sample_perturbation"  # 摂動そのものの標本共分散（低ランク）
    SPECTRAL_DIAG = "spectral_diag"              # 摂動の標本共分散の変換領域での対角


@dataclass(frozen=True)
class NoiseModel:
    """
    観測誤差モデル

    SAMPLE_PERTURBATION と SPECTRAL_DIAG の variance は摂動を生成する
    分布の分散で、更新式では生成された摂動の標本統計量が R を表す。

    Attributes:
        kind (NoiseKind): 表現の種類
        variance (float | numpy.ndarray): 分散（スカラーまたは観測次元のベクトル）
    """

    kind: NoiseKind
    variance: object

    def __post_init__(self):
        variance = np.asarray(self.variance, dtype=float)
        if np.any(variance < 0) or not np.all(np.isfinite(variance)):
            raise InvalidParameterError("観測誤差の分散は非負の有限値である必要があります")

    @classmethod
    def scalar_diag(cls, sigma2):
        return cls(NoiseKind.SCALAR_DIAG, float(sigma2))

    @classmethod
    def diag(cls, r):
        r = np.array(r, dtype=float)
        r.setflags(write=False)
        return cls(NoiseKind.DIAG, r)

    @classmethod
    def sample_perturbation(cls, variance):
        return cls(NoiseKind.SAMPLE_PERTURBATION, _freeze(variance))

    @classmethod
    def spectral_diag(cls, variance):
        return cls(NoiseKind.SPECTRAL_DIAG, _freeze(variance))

    @property
    def needs_perturbations(self):
        """R の表現に摂動アンサンブルが必要かどうか"""
        return self.kind in (NoiseKind.SAMPLE_PERTURBATION, NoiseKind.SPECTRAL_DIAG)

    def variance_vector(self, m):
        """
        観測次元 m の分散ベクトル

        Args:
            m (int): 観測次元

        Returns:
            numpy.ndarray: 長さ m のベクトル
        """
        variance = np.asarray(self.variance, dtype=float)
        if variance.ndim == 0:
            return np.full(m, float(variance))
        if variance.shape != (m,):
            raise DimensionMismatch(f"観測誤差の分散の長さ {variance.shape} が観測次元 {m} と一致しません")
        return variance.copy()

    def dense(self, m, perturbations=None):
        """
        物理空間の R を密行列で返す

        Args:
            m (int): 観測次元
            perturbations (numpy.ndarray): m×N の摂動（標本表現の場合に必要）

        Returns:
            numpy.ndarray: m×m 行列
        """
        if not self.needs_perturbations:
            return np.diag(self.variance_vector(m))

        if perturbations is None:
            raise InvalidParameterError(f"{self.kind.value} には摂動アンサンブルが必要です")
        perturbations = np.asarray(perturbations, dtype=float)
        if perturbations.shape[0] != m:
            raise DimensionMismatch(f"摂動の次元 {perturbations.shape[0]} が観測次元 {m} と一致しません")

        if self.kind is NoiseKind.SAMPLE_PERTURBATION:
            return member_covariance(perturbations)
        # 恒等変換での対角
        return np.diag(spectral_variance(perturbations))


def _freeze(variance):
    variance = np.array(variance, dtype=float)
    if variance.ndim == 0:
        return float(variance)
    variance.setflags(write=False)
    return variance


def perturb_data(d, noise, N, rng, recenter=False):
    """
    観測データの摂動 e_k を生成する

    rng に整数を渡した場合はメンバーごとに SeedSequence から派生した乱数列を使う。
    すべての乱数は並列処理の前にここで生成する。

    Args:
        d (numpy.ndarray): 観測データ（長さ m）
        noise (NoiseModel): 観測誤差モデル
        N (int): 摂動の数
        rng (numpy.random.Generator | int): 乱数生成器またはシード
        recenter (bool): 標本平均を0に補正するかどうか

    Returns:
        numpy.ndarray: m×N 行列（第k列が e_k）
    """
    N = int(N)
    if N < 1:
        raise InvalidParameterError(f"摂動の数は1以上である必要があります: N={N}")

    m = len(np.atleast_1d(d))
    std = np.sqrt(noise.variance_vector(m))

    if isinstance(rng, np.random.Generator):
        draws = rng.standard_normal((m, N))
    else:
        generators = spawn_generators(rng, N)
        draws = np.column_stack([g.standard_normal(m) for g in generators])

    perturbations = std[:, None] * draws

    if recenter and N > 1:
        perturbations = perturbations - perturbations.mean(axis=1, keepdims=True)

    return perturbations


def spectral_noise_variance(noise, t):
    """
    対角表現の R を変換領域へ移した対角 R̂

    σ²I は任意の直交変換で不変。Diag(r) は F Diag(r) F^T の対角 (F∘F) r を使う。

    Args:
        noise (NoiseModel): SCALAR_DIAG または DIAG
        t (OrthonormalTransform): 観測格子上の変換

    Returns:
        numpy.ndarray: 長さ t.size のベクトル
    """
    m = t.size
    if noise.kind is NoiseKind.SCALAR_DIAG:
        return noise.variance_vector(m)
    if noise.kind is not NoiseKind.DIAG:
        raise InvalidParameterError(f"{noise.kind.value} は摂動から R̂ を計算します")

    r = noise.variance_vector(m)
    if t.kind is TransformKind.IDENTITY or np.all(r == r[0]):
        return r
    F = t.as_matrix()
    return (F * F) @ r
