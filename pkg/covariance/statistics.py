#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
スペクトルEnKF解析システム - 標本統計量とスペクトル対角近似

変換領域の標本共分散 Ĉ = F C F^T を対角 D̂ で近似する。
変換はすべて実数なので |·|^2 は2乗になる。
"""

import logging
from dataclasses import dataclass

import numpy as np

from covariance.interpolation import InterpolationOperator
from transforms.transform import forward_members
from utils.exceptions import DimensionMismatch, EnsembleTooSmall, InvalidParameterError


logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DiagonalSpectralCovariance:
    """
    変換領域の共分散の対角 D̂(u,u)

    Attributes:
        transform (OrthonormalTransform): 変換 F
        diag (numpy.ndarray): 非負の対角成分（長さ n）
    """

    transform: object
    diag: np.ndarray

    def __post_init__(self):
        if len(self.diag) != self.transform.size:
            raise DimensionMismatch(f"対角の長さ {len(self.diag)} が変換サイズ {self.transform.size} と一致しません")
        if np.any(self.diag < 0):
            raise InvalidParameterError("スペクトル対角共分散に負の成分があります")


@dataclass(frozen=True)
class CrossSpectralDiagonal:
    """
    変換領域の相互共分散の対角 D̂(P u, v)（符号付き）

    Attributes:
        transform (OrthonormalTransform): 変数 v の格子上の変換
        diag (numpy.ndarray): 対角成分（負の値もとりうる）
        projection (InterpolationOperator): u の格子から v の格子への射影
    """

    transform: object
    diag: np.ndarray
    projection: InterpolationOperator

    def __post_init__(self):
        if len(self.diag) != self.transform.size:
            raise DimensionMismatch(f"対角の長さ {len(self.diag)} が変換サイズ {self.transform.size} と一致しません")

    def to_state_covariance(self):
        """
        近似相互共分散 C(u, v) ≈ P† F^T D̂ F

        Returns:
            numpy.ndarray: source_n × target_n 行列
        """
        return self.projection.lift(reconstruct_dense(self))


def _require_members(ens):
    if ens.member_count < 2:
        raise EnsembleTooSmall(f"標本統計量にはメンバー数2以上が必要です: N={ens.member_count}")


def _anomalies(members):
    # 先頭メンバーからの差で計算し、全メンバーが等しい行では厳密に0にする
    members = np.asarray(members, dtype=float)
    shifted = members - members[:, :1]
    return shifted - shifted.mean(axis=1, keepdims=True)


def sample_mean(ens, var):
    """
    標本平均

    Args:
        ens (Ensemble): アンサンブル
        var (int | str): 変数

    Returns:
        numpy.ndarray: メンバー列の算術平均
    """
    return ens.members(var).mean(axis=1)


def sample_covariance(ens, var_a, var_b=None):
    """
    標本（相互）共分散 C = 1/(N-1) Σ (a_k - ā)(b_k - b̄)^T

    Args:
        ens (Ensemble): アンサンブル
        var_a (int | str): 行側の変数
        var_b (int | str): 列側の変数（省略時は var_a）

    Returns:
        numpy.ndarray: n_a × n_b 行列

    Raises:
        EnsembleTooSmall: N < 2 の場合
    """
    _require_members(ens)
    if var_b is None:
        var_b = var_a

    A = _anomalies(ens.members(var_a))
    B = A if ens.index(var_a) == ens.index(var_b) else _anomalies(ens.members(var_b))
    return A @ B.T / (ens.member_count - 1)


def member_covariance(a, b=None):
    """n×N メンバー行列から直接標本共分散を計算する"""
    a = np.asarray(a, dtype=float)
    if a.shape[1] < 2:
        raise EnsembleTooSmall(f"標本統計量にはメンバー数2以上が必要です: N={a.shape[1]}")
    A = _anomalies(a)
    B = A if b is None else _anomalies(b)
    return A @ B.T / (a.shape[1] - 1)


def spectral_variance(members_hat):
    """
    変換済みメンバー行列の各モードの標本分散

    Args:
        members_hat (numpy.ndarray): n×N 行列

    Returns:
        numpy.ndarray: 長さ n の非負ベクトル
    """
    members_hat = np.asarray(members_hat, dtype=float)
    if members_hat.shape[1] < 2:
        raise EnsembleTooSmall(f"標本統計量にはメンバー数2以上が必要です: N={members_hat.shape[1]}")
    A = _anomalies(members_hat)
    return np.sum(A * A, axis=1) / (members_hat.shape[1] - 1)


def spectral_cross_variance(a_hat, b_hat):
    """各モードの符号付き標本相互共分散"""
    a_hat = np.asarray(a_hat, dtype=float)
    b_hat = np.asarray(b_hat, dtype=float)
    if a_hat.shape != b_hat.shape:
        raise DimensionMismatch(f"変換済みメンバー行列の形状が一致しません: {a_hat.shape} != {b_hat.shape}")
    if a_hat.shape[1] < 2:
        raise EnsembleTooSmall(f"標本統計量にはメンバー数2以上が必要です: N={a_hat.shape[1]}")
    return np.sum(_anomalies(a_hat) * _anomalies(b_hat), axis=1) / (a_hat.shape[1] - 1)


def spectral_diagonal(ens, var, t, workers=1):
    """
    スペクトル対角近似 D̂(u,u)

    (D̂)_ii = 1/(N-1) Σ_k (û_ik - mean(û_i))^2, û_k = F u_k

    Args:
        ens (Ensemble): アンサンブル
        var (int | str): 変数
        t (OrthonormalTransform): 変換
        workers (int): メンバー変換の同時実行数

    Returns:
        DiagonalSpectralCovariance: 対角近似

    Raises:
        DimensionMismatch: 変換サイズと格子点数が異なる場合
        EnsembleTooSmall: N < 2 の場合
    """
    grid = ens.grid(var)
    if t.size != grid.n:
        raise DimensionMismatch(f"変換サイズ {t.size} が変数 {var} の格子点数 {grid.n} と一致しません")
    _require_members(ens)

    members_hat = forward_members(t, ens.members(var), workers)
    diag = spectral_variance(members_hat)
    diag.setflags(write=False)

    logger.debug(f"スペクトル対角を計算しました: 変数={var}, 変換={t.kind.value}, trace={diag.sum():.4e}")
    return DiagonalSpectralCovariance(t, diag)


def spectral_cross_diagonal(ens, var_a, var_b, proj, t, workers=1):
    """
    相互共分散のスペクトル対角近似 D̂(P u, v)

    Args:
        ens (Ensemble): アンサンブル
        var_a (int | str): 射影する変数 u
        var_b (int | str): 射影先の変数 v
        proj (InterpolationOperator): u の格子から v の格子への射影
        t (OrthonormalTransform): v の格子上の変換
        workers (int): 同時実行数

    Returns:
        CrossSpectralDiagonal: 符号付きの対角近似
    """
    grid_a = ens.grid(var_a)
    grid_b = ens.grid(var_b)
    if proj.source_grid.n != grid_a.n or proj.target_grid.n != grid_b.n:
        raise DimensionMismatch(
            f"射影 {proj.source_grid.n}->{proj.target_grid.n} が変数の格子 {grid_a.n}->{grid_b.n} と一致しません"
        )
    if t.size != grid_b.n:
        raise DimensionMismatch(f"変換サイズ {t.size} が変数 {var_b} の格子点数 {grid_b.n} と一致しません")
    _require_members(ens)

    w_hat = forward_members(t, proj.project(ens.members(var_a)), workers)
    v_hat = forward_members(t, ens.members(var_b), workers)
    diag = spectral_cross_variance(w_hat, v_hat)
    diag.setflags(write=False)

    return CrossSpectralDiagonal(t, diag, proj)


def reconstruct_dense(d):
    """
    対角近似を物理空間の密行列 F^T Diag(d) F に戻す

    Args:
        d (DiagonalSpectralCovariance | CrossSpectralDiagonal): 対角近似

    Returns:
        numpy.ndarray: n×n 行列
    """
    F = d.transform.as_matrix()
    return F.T @ (np.asarray(d.diag)[:, None] * F)


def covariance_metrics(reference, estimate, grid=None):
    """
    共分散推定の比較指標

    Args:
        reference (numpy.ndarray): 参照共分散（大アンサンブル）
        estimate (numpy.ndarray): 推定共分散
        grid (Grid): 対角の最大位置を座標で返す場合の格子

    Returns:
        dict: frobenius, relative_frobenius, diag_argmax, diag_cv
    """
    reference = np.asarray(reference, dtype=float)
    estimate = np.asarray(estimate, dtype=float)
    if reference.shape != estimate.shape:
        raise DimensionMismatch(f"共分散行列の形状が一致しません: {reference.shape} != {estimate.shape}")

    distance = float(np.linalg.norm(estimate - reference, "fro"))
    reference_norm = float(np.linalg.norm(reference, "fro"))
    metrics = {
        "frobenius": distance,
        "relative_frobenius": distance / reference_norm if reference_norm > 0 else float("inf"),
    }

    if estimate.shape[0] == estimate.shape[1]:
        diagonal = np.diag(estimate)
        argmax = int(np.argmax(diagonal))
        metrics["diag_argmax"] = float(grid.nodes[argmax]) if grid is not None else argmax
        mean = float(np.mean(diagonal))
        metrics["diag_cv"] = float(np.std(diagonal) / abs(mean)) if mean != 0 else float("inf")

    return metrics
