#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
スペクトルEnKF解析システム - 解析更新

classical_update       : 標本共分散 Q_N による確率的EnKF
spectral_update_single : 1変数・H = I のスペクトルEnKF
spectral_update_multi  : 多変数・ブロック対角スペクトルゲインのEnKF
"""

import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.linalg

from covariance.interpolation import identity_interpolation
from covariance.statistics import member_covariance, spectral_cross_variance, spectral_variance
from enkf.linalg import ModeBlockDiagonal, gain_factors, innovation_solve, noise_spectral_diagonal
from enkf.noise import NoiseKind, perturb_data, spectral_noise_variance
from transforms.transform import TransformKind, forward_members, make_transform
from utils.exceptions import (
    DimensionMismatch,
    EnsembleTooSmall,
    InvalidParameterError,
    MissingProjection,
    SingularInnovationMatrix,
    UnsupportedObservation,
)
from utils.helpers import log2_int


logger = logging.getLogger(__name__)


class CrossMode(str, Enum):
    """QH^T の相互共分散ブロックの近似方法"""

    SPECTRAL_DIAGONAL = "spectral_diagonal"
    SAMPLE_COVARIANCE = "sample_covariance"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_")
        for mode in cls:
            if mode.value == key or mode.name.lower() == key:
                return mode
        raise InvalidParameterError(f"未知の相互共分散モードです: {value}")


@dataclass(frozen=True)
class AnalysisResult:
    """
    解析更新の結果

    Attributes:
        analysis (Ensemble): 解析アンサンブル
        innovation_norms (numpy.ndarray): メンバーごとのイノベーション d + e_k - H u_k のノルム
        gain_factors (numpy.ndarray): モードごとのゲイン（対角 R のスペクトル法のみ、他は None）
        method (str): 手法名
        seed (int): 摂動のシード（摂動を直接与えた場合は None）
        perturbations (numpy.ndarray): 使用した摂動 e_k（M×N）
    """

    analysis: object
    innovation_norms: np.ndarray
    gain_factors: object
    method: str
    seed: object = None
    perturbations: np.ndarray = field(default=None, repr=False)


def _resolve_perturbations(obs, N, m, perturbations, seed, recenter):
    if perturbations is not None:
        perturbations = np.asarray(perturbations, dtype=float)
        if perturbations.shape != (m, N):
            raise DimensionMismatch(f"摂動の形状 {perturbations.shape} が ({m}, {N}) と一致しません")
        return perturbations
    if seed is None:
        raise InvalidParameterError("摂動またはシードのどちらかを指定してください")
    return perturb_data(obs.data, obs.noise, N, seed, recenter=recenter)


def _require_members(ens):
    if ens.member_count < 2:
        raise EnsembleTooSmall(f"解析更新にはメンバー数2以上が必要です: N={ens.member_count}")


def classical_update(ens, obs, perturbations=None, seed=None, recenter=False):
    """
    確率的EnKFの解析更新

    u_k^a = u_k + Q_N H^T (H Q_N H^T + R)^{-1} (d + e_k - H u_k)

    Args:
        ens (Ensemble): 予報アンサンブル
        obs (ObservationSpec): 観測の仕様
        perturbations (numpy.ndarray): 摂動 e_k（M×N、省略時は seed から生成）
        seed (int): 摂動生成のシード
        recenter (bool): 摂動の標本平均を0に補正するかどうか

    Returns:
        AnalysisResult: 解析結果

    Raises:
        SingularInnovationMatrix: H Q_N H^T + R が正定値でない場合
    """
    obs.validate(ens)
    _require_members(ens)

    N = ens.member_count
    X = ens.stacked()
    H = obs.matrix(ens)
    m = H.shape[0]

    E = _resolve_perturbations(obs, N, m, perturbations, seed, recenter)

    Q = member_covariance(X)
    QHt = Q @ H.T
    S = H @ QHt + obs.noise.dense(m, E)

    innovations = obs.data[:, None] + E - H @ X

    try:
        factor = scipy.linalg.cho_factor(S)
    except np.linalg.LinAlgError as e:
        raise SingularInnovationMatrix(f"H Q H^T + R が正定値ではありません: {e}") from e

    W = scipy.linalg.cho_solve(factor, innovations)
    analysis = ens.from_stacked(X + QHt @ W)

    norms = np.linalg.norm(innovations, axis=0)
    logger.info(f"EnKF解析更新が完了しました: N={N}, 観測次元={m}, 平均イノベーション={norms.mean():.4e}")

    return AnalysisResult(analysis, norms, None, "classical", seed, E)


def spectral_update_single(ens, obs, t, perturbations=None, seed=None, recenter=False, workers=1):
    """
    1変数・全状態観測のスペクトルEnKF

    û_k^a = û_k + D̂ (D̂ + R̂)^{-1} (d̂ + ê_k - û_k), u_k^a = F^T û_k^a

    増分 F^T(D̂ x_k) を物理空間の予報に加えるため、D̂ = 0 では予報がそのまま残る。

    Args:
        ens (Ensemble): 1変数の予報アンサンブル
        obs (ObservationSpec): H = I の観測
        t (OrthonormalTransform): 変換
        perturbations (numpy.ndarray): 摂動 e_k（n×N）
        seed (int): 摂動生成のシード
        recenter (bool): 摂動の標本平均を0に補正するかどうか
        workers (int): メンバー変換の同時実行数

    Returns:
        AnalysisResult: 解析結果

    Raises:
        UnsupportedObservation: 多変数、または H ≠ I の場合（spectral_update_multi を使う）
    """
    if ens.variable_count != 1 or len(obs.blocks) != 1 or not obs.blocks[0].is_identity():
        raise UnsupportedObservation("spectral_update_single は1変数かつ H = I の場合のみ使えます")
    obs.validate(ens)
    _require_members(ens)

    members = ens.members(0)
    n, N = members.shape
    if t.size != n:
        raise DimensionMismatch(f"変換サイズ {t.size} が格子点数 {n} と一致しません")

    E = _resolve_perturbations(obs, N, n, perturbations, seed, recenter)

    members_hat = forward_members(t, members, workers)
    perturbations_hat = forward_members(t, E, workers)
    d_hat = spectral_variance(members_hat)

    rhs = t.forward(obs.data)[:, None] + perturbations_hat - members_hat

    r_hat = None
    if not obs.noise.needs_perturbations:
        r_hat = spectral_noise_variance(obs.noise, t)
    x = innovation_solve(d_hat, obs.noise, rhs, perturbations_hat=perturbations_hat, noise_variance_hat=r_hat)

    increment = t.inverse(d_hat[:, None] * x)
    analysis = ens.replace_members([members + increment])

    gains = None
    if obs.noise.kind is not NoiseKind.SAMPLE_PERTURBATION:
        gains = gain_factors(d_hat, noise_spectral_diagonal(obs.noise, n, perturbations_hat, r_hat))

    norms = np.linalg.norm(rhs, axis=0)
    logger.info(
        f"スペクトルEnKF解析更新が完了しました: 変換={t.kind.value}, N={N}, 平均イノベーション={norms.mean():.4e}"
    )
    return AnalysisResult(analysis, norms, gains, f"spectral_{t.kind.value}", seed, E)


def _observation_transform(t, m):
    """状態変数の変換と同じ種類で観測格子サイズ m の変換を作る"""
    if t.size == m:
        return t
    if t.kind is TransformKind.WAVELET:
        return make_transform(t.kind, m, octaves=min(t.octaves, log2_int(m)), filter=t.filter)
    return make_transform(t.kind, m)


def _cross_projection(ens, v, j, block, projections):
    """状態変数 v から観測ブロック j の格子への射影 P_vj"""
    if ens.index(block.variable) == v:
        return block.projection if block.projection is not None else identity_interpolation(ens.grid(v))

    obs_grid = block.grid(ens)
    if projections and (v, j) in projections:
        return projections[(v, j)]
    # 観測される変数と同じ格子なら、ブロック自身の射影をそのまま使う
    if block.projection is not None and ens.grid(v) == block.projection.source_grid:
        return block.projection
    if ens.grid(v) == obs_grid:
        return identity_interpolation(obs_grid)
    raise MissingProjection(f"変数 {v} から観測ブロック {j} の格子への補間演算子が指定されていません")


def spectral_update_multi(ens, obs, transforms, cross_mode=CrossMode.SPECTRAL_DIAGONAL, projections=None,
                          full_innovation_covariance=False, perturbations=None, seed=None, recenter=False,
                          workers=1):
    """
    多変数スペクトルEnKF

    HQH^T ≈ F^{-1} [D̂(H_i u, H_j u)] F（各ブロックは対角）
    QH^T  ≈ P† F^{-1} [D̂(P_i u_i, H_j u)] F、または標本相互共分散

    イノベーション方程式は変換領域でモードごとに解き、ゲインをメンバーごとに適用する。

    Args:
        ens (Ensemble): 予報アンサンブル
        obs (ObservationSpec): 観測の仕様
        transforms (list | dict): 変数ごとの変換
        cross_mode (CrossMode | str): QH^T の相互共分散の近似方法
        projections (dict): {(変数, 観測ブロック): InterpolationOperator}（格子が異なる場合。
            省略時、観測される変数と同じ格子の変数にはブロックの射影を使う）
        full_innovation_covariance (bool): 検証用。HQH^T を変換領域の完全な標本共分散で置き換える
        perturbations (numpy.ndarray): 摂動 e_k（M×N）
        seed (int): 摂動生成のシード
        recenter (bool): 摂動の標本平均を0に補正するかどうか
        workers (int): メンバー変換の同時実行数

    Returns:
        AnalysisResult: 解析結果

    Raises:
        MissingProjection: 格子が異なる変数と観測ブロックの補間演算子がない場合
    """
    cross_mode = CrossMode.parse(cross_mode)
    obs.validate(ens)
    _require_members(ens)

    if isinstance(transforms, dict):
        transforms = [transforms[ens.variables[v].name] if ens.variables[v].name in transforms else transforms[v]
                      for v in range(ens.variable_count)]
    transforms = list(transforms)
    if len(transforms) != ens.variable_count:
        raise DimensionMismatch(f"変換の数 {len(transforms)} が変数の数 {ens.variable_count} と一致しません")
    for v, t in enumerate(transforms):
        if t.size != ens.grid(v).n:
            raise DimensionMismatch(f"変数 {v} の変換サイズ {t.size} が格子点数 {ens.grid(v).n} と一致しません")

    N = ens.member_count
    offsets = obs.offsets(ens)
    M = int(offsets[-1])
    block_slices = [slice(offsets[j], offsets[j + 1]) for j in range(len(obs.blocks))]
    E = _resolve_perturbations(obs, N, M, perturbations, seed, recenter)

    # 観測ブロックごとの変換と、変換済みの H u, d, e
    obs_transforms = []
    observed_hat = []
    data_hat = []
    perturbations_hat = []
    for j, block in enumerate(obs.blocks):
        Fj = _observation_transform(transforms[ens.index(block.variable)], block.size(ens))
        obs_transforms.append(Fj)
        observed_hat.append(forward_members(Fj, block.apply(ens), workers))
        data_hat.append(Fj.forward(obs.data[block_slices[j]]))
        perturbations_hat.append(forward_members(Fj, E[block_slices[j]], workers))

    observed_hat_all = np.vstack(observed_hat)
    perturbations_hat_all = np.vstack(perturbations_hat)
    rhs = np.concatenate(data_hat)[:, None] + perturbations_hat_all - observed_hat_all

    r_hat = None
    if not obs.noise.needs_perturbations:
        r_hat = np.concatenate([
            spectral_noise_variance(_block_noise(obs.noise, block_slices[j], M), Fj)
            for j, Fj in enumerate(obs_transforms)
        ])

    gains = None
    if full_innovation_covariance:
        x = _dense_innovation_solve(observed_hat_all, obs.noise, rhs, perturbations_hat_all, obs_transforms,
                                    block_slices, r_hat)
    else:
        D = _innovation_blocks(observed_hat, offsets)
        x = innovation_solve(D, obs.noise, rhs, perturbations_hat=perturbations_hat_all, noise_variance_hat=r_hat)
        if D.block_size == 1 and obs.noise.kind is not NoiseKind.SAMPLE_PERTURBATION:
            gains = gain_factors(D.diagonal(), noise_spectral_diagonal(obs.noise, M, perturbations_hat_all, r_hat))

    # ゲインの適用
    analysis_members = []
    for v in range(ens.variable_count):
        members = ens.members(v)
        increment = np.zeros_like(members)
        for j, block in enumerate(obs.blocks):
            Fj = obs_transforms[j]
            xj = x[block_slices[j]]
            if cross_mode is CrossMode.SAMPLE_COVARIANCE:
                cross = member_covariance(members, block.apply(ens))
                increment += cross @ Fj.inverse(xj)
            else:
                proj = _cross_projection(ens, v, j, block, projections)
                projected_hat = forward_members(Fj, proj.project(members), workers)
                cross_diag = spectral_cross_variance(projected_hat, observed_hat[j])
                increment += proj.lift(Fj.inverse(cross_diag[:, None] * xj))
        analysis_members.append(members + increment)

    analysis = ens.replace_members(analysis_members)
    norms = np.linalg.norm(rhs, axis=0)

    kinds = "+".join(sorted({t.kind.value for t in transforms}))
    logger.info(
        f"多変数スペクトルEnKF解析更新が完了しました: 変換={kinds}, 相互共分散={cross_mode.value}, "
        f"N={N}, 観測次元={M}, 平均イノベーション={norms.mean():.4e}"
    )
    return AnalysisResult(analysis, norms, gains, f"spectral_multi_{kinds}", seed, E)


def _block_noise(noise, block_slice, M):
    """観測ブロック部分の誤差モデル"""
    variance = np.asarray(noise.variance, dtype=float)
    if variance.ndim == 0:
        return noise
    if variance.shape != (M,):
        raise DimensionMismatch(f"観測誤差の分散の長さ {variance.shape} が観測次元 {M} と一致しません")
    return type(noise)(noise.kind, variance[block_slice])


def _innovation_blocks(observed_hat, offsets):
    """
    HQH^T のスペクトル対角ブロックを組み立てる

    観測ブロックがすべて同じサイズならブロック間の相互対角も保持し、
    モードごとの b×b 系にする。サイズが異なる場合はブロック間を切り離す。
    """
    b = len(observed_hat)
    sizes = {o.shape[0] for o in observed_hat}

    if b == 1 or len(sizes) > 1:
        if b > 1:
            logger.info("観測ブロックのサイズが異なるため、ブロック間の相互共分散を省略します")
        return ModeBlockDiagonal.from_diagonal(np.concatenate([spectral_variance(o) for o in observed_hat]))

    L = sizes.pop()
    blocks = np.zeros((L, b, b))
    for i in range(b):
        blocks[:, i, i] = spectral_variance(observed_hat[i])
        for j in range(i + 1, b):
            cross = spectral_cross_variance(observed_hat[i], observed_hat[j])
            blocks[:, i, j] = cross
            blocks[:, j, i] = cross

    # モード優先の並び: 位置 l*b + j <- 元の位置 offsets[j] + l
    order = (np.asarray(offsets[:-1])[None, :] + np.arange(L)[:, None]).reshape(-1)
    return ModeBlockDiagonal(blocks, order)


def _dense_innovation_solve(observed_hat, noise, rhs, perturbations_hat, obs_transforms, block_slices, r_hat):
    """検証用: 変換領域の完全な標本共分散 + R̂ を密行列で解く"""
    M = observed_hat.shape[0]
    S = member_covariance(observed_hat)

    if noise.kind is NoiseKind.SAMPLE_PERTURBATION:
        S = S + member_covariance(perturbations_hat)
    elif noise.kind is NoiseKind.SPECTRAL_DIAG:
        S = S + np.diag(spectral_variance(perturbations_hat))
    elif noise.kind is NoiseKind.SCALAR_DIAG:
        S = S + np.diag(r_hat)
    else:
        # F Diag(r) F^T をブロックごとに厳密に組み立てる
        r = noise.variance_vector(M)
        for j, Fj in enumerate(obs_transforms):
            F = Fj.as_matrix()
            s = block_slices[j]
            S[s, s] += F @ (r[s][:, None] * F.T)

    try:
        factor = scipy.linalg.cho_factor(S)
    except np.linalg.LinAlgError as e:
        raise SingularInnovationMatrix(f"イノベーション行列が正定値ではありません: {e}") from e
    return scipy.linalg.cho_solve(factor, rhs)
