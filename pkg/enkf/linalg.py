#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
スペクトルEnKF解析システム - 変換領域でのイノベーション方程式の解法

(D̂ + R̂) x = rhs を次の3通りで解く:

    (i)   R̂ が対角      : 成分ごとの除算
    (ii)  R̂ が摂動の標本共分散 : Sherman-Morrison-Woodbury（N×N の内部問題）
    (iii) R̂ が摂動の標本共分散の対角 : (i) と同じ

D̂ + R̂_ii = 0 のモードはゲイン0（更新しない）とする。
行列全体が0でイノベーションが0でない場合のみ SingularInnovationMatrix とする。
"""

import logging

import numpy as np
import scipy.linalg

from covariance.statistics import spectral_variance
from enkf.noise import NoiseKind
from utils.exceptions import DimensionMismatch, InvalidParameterError, SingularInnovationMatrix


logger = logging.getLogger(__name__)


class ModeBlockDiagonal:
    """
    並べ替えるとブロック対角になる行列

    観測ブロックが複数あると HQH^T の各ブロックは対角になり、同じモード番号の
    成分どうしだけが結合する。モード優先の並び順 order で並べ替えると
    b×b ブロック（b は観測ブロック数）が L 個並ぶブロック対角行列になる。
    order[p] は並べ替え後の位置 p に対応する元の位置。
    """

    def __init__(self, blocks, order=None):
        """
        初期化メソッド

        Args:
            blocks (numpy.ndarray): L×b×b のブロック
            order (numpy.ndarray): 並べ替え（None は恒等）
        """
        blocks = np.asarray(blocks, dtype=float)
        if blocks.ndim != 3 or blocks.shape[1] != blocks.shape[2]:
            raise DimensionMismatch(f"ブロックの形状が不正です: {blocks.shape}")
        self.blocks = blocks
        self.order = None if order is None else np.asarray(order, dtype=int)
        if self.order is not None and len(self.order) != self.size:
            raise DimensionMismatch(f"並べ替えの長さ {len(self.order)} が行列サイズ {self.size} と一致しません")

    @classmethod
    def from_diagonal(cls, diag):
        diag = np.asarray(diag, dtype=float)
        return cls(diag[:, None, None])

    @property
    def size(self):
        return self.blocks.shape[0] * self.blocks.shape[1]

    @property
    def block_size(self):
        return self.blocks.shape[1]

    def _permute(self, x):
        return x if self.order is None else x[self.order]

    def _unpermute(self, x):
        if self.order is None:
            return x
        out = np.empty_like(x)
        out[self.order] = x
        return out

    def diagonal(self):
        """元の並びでの対角成分"""
        return self._unpermute(np.diagonal(self.blocks, axis1=1, axis2=2).reshape(-1))

    def add_diagonal(self, r):
        """
        対角に r（元の並び）を加えた行列

        Args:
            r (numpy.ndarray): 長さ size のベクトル

        Returns:
            ModeBlockDiagonal: 新しい行列
        """
        r = np.asarray(r, dtype=float)
        if r.shape != (self.size,):
            raise DimensionMismatch(f"対角の長さ {r.shape} が行列サイズ {self.size} と一致しません")
        b = self.block_size
        blocks = self.blocks.copy()
        idx = np.arange(b)
        blocks[:, idx, idx] += self._permute(r).reshape(-1, b)
        return ModeBlockDiagonal(blocks, self.order)

    def to_dense(self):
        """密行列（元の並び）"""
        L, b, _ = self.blocks.shape
        dense = np.zeros((self.size, self.size))
        for l in range(L):
            dense[l * b:(l + 1) * b, l * b:(l + 1) * b] = self.blocks[l]
        if self.order is None:
            return dense
        out = np.zeros_like(dense)
        out[np.ix_(self.order, self.order)] = dense
        return out

    def zero_blocks(self):
        """全成分が0のブロック（モード）のマスク"""
        return np.all(self.blocks == 0.0, axis=(1, 2))

    def is_invertible(self):
        if self.block_size == 1:
            return bool(np.all(self.blocks[:, 0, 0] != 0.0))
        return bool(np.all(np.linalg.cond(self.blocks) < 1.0 / np.finfo(float).eps))

    def solve(self, rhs):
        """
        ブロックごとに連立方程式を解く（0ブロックの解は0）

        Args:
            rhs (numpy.ndarray): 長さ size のベクトルまたは size×K 行列

        Returns:
            numpy.ndarray: 解（rhs と同じ形状）

        Raises:
            SingularInnovationMatrix: 行列全体が0で rhs が0でない場合、
                または0でないブロックが特異な場合
        """
        rhs = np.asarray(rhs, dtype=float)
        if rhs.shape[0] != self.size:
            raise DimensionMismatch(f"右辺の次元 {rhs.shape[0]} が行列サイズ {self.size} と一致しません")

        zero = self.zero_blocks()
        if np.all(zero):
            if np.any(rhs != 0.0):
                raise SingularInnovationMatrix("イノベーション行列が0ですが、イノベーションが0ではありません")
            return np.zeros_like(rhs)

        if np.any(zero):
            logger.debug(f"分散0のモードをゲイン0として扱います: {int(np.sum(zero))}個")

        L, b, _ = self.blocks.shape
        rp = self._permute(rhs).reshape((L, b) + rhs.shape[1:])
        solution = np.zeros_like(rp)
        active = ~zero

        if b == 1:
            scale = self.blocks[active, 0, 0]
            if rhs.ndim == 1:
                solution[active, 0] = rp[active, 0] / scale
            else:
                solution[active, 0] = rp[active, 0] / scale[:, None]
        else:
            sub = rp[active] if rhs.ndim > 1 else rp[active][..., None]
            try:
                solved = np.linalg.solve(self.blocks[active], sub)
            except np.linalg.LinAlgError as e:
                raise SingularInnovationMatrix(f"モードごとのイノベーション行列が特異です: {e}") from e
            solution[active] = solved if rhs.ndim > 1 else solved[..., 0]

        return self._unpermute(solution.reshape(rhs.shape))


def as_mode_blocks(d_hat):
    """ベクトルまたは ModeBlockDiagonal を ModeBlockDiagonal にそろえる"""
    if isinstance(d_hat, ModeBlockDiagonal):
        return d_hat
    d_hat = np.asarray(d_hat, dtype=float)
    if d_hat.ndim != 1:
        raise DimensionMismatch(f"D̂ は対角ベクトルである必要があります: {d_hat.shape}")
    return ModeBlockDiagonal.from_diagonal(d_hat)


def noise_spectral_diagonal(noise, size, perturbations_hat=None, noise_variance_hat=None):
    """
    対角表現の R̂ を返す（ケース (i), (iii)）

    Args:
        noise (NoiseModel): 観測誤差モデル
        size (int): 観測次元
        perturbations_hat (numpy.ndarray): 変換済み摂動（SPECTRAL_DIAG で必要）
        noise_variance_hat (numpy.ndarray): 計算済みの R̂ 対角（あれば優先）

    Returns:
        numpy.ndarray: 長さ size のベクトル
    """
    if noise_variance_hat is not None:
        r_hat = np.asarray(noise_variance_hat, dtype=float)
    elif noise.kind is NoiseKind.SPECTRAL_DIAG:
        if perturbations_hat is None:
            raise InvalidParameterError("SPECTRAL_DIAG には変換済み摂動が必要です")
        r_hat = spectral_variance(perturbations_hat)
    else:
        r_hat = noise.variance_vector(size)

    if r_hat.shape != (size,):
        raise DimensionMismatch(f"R̂ の長さ {r_hat.shape} が観測次元 {size} と一致しません")
    return r_hat


def innovation_solve(d_hat, noise, rhs, perturbations_hat=None, noise_variance_hat=None):
    """
    (D̂ + R̂)^{-1} rhs を変換領域で計算する

    Args:
        d_hat (numpy.ndarray | ModeBlockDiagonal): D̂（対角ベクトル、またはモードごとのブロック）
        noise (NoiseModel): 観測誤差モデル
        rhs (numpy.ndarray): 右辺（長さ M のベクトル、または M×K 行列）
        perturbations_hat (numpy.ndarray): 変換済み摂動 Ê（M×N、ケース (ii)(iii) で必要）
        noise_variance_hat (numpy.ndarray): 変換領域での R̂ の対角（ケース (i) で Diag(r) の場合）

    Returns:
        numpy.ndarray: 解（rhs と同じ形状）

    Raises:
        SingularInnovationMatrix: 行列全体が0で rhs が0でない場合
    """
    D = as_mode_blocks(d_hat)
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape[0] != D.size:
        raise DimensionMismatch(f"右辺の次元 {rhs.shape[0]} が D̂ のサイズ {D.size} と一致しません")

    if noise.kind is not NoiseKind.SAMPLE_PERTURBATION:
        r_hat = noise_spectral_diagonal(noise, D.size, perturbations_hat, noise_variance_hat)
        return D.add_diagonal(r_hat).solve(rhs)

    if perturbations_hat is None:
        raise InvalidParameterError("SAMPLE_PERTURBATION には変換済み摂動が必要です")
    return _woodbury_solve(D, perturbations_hat, rhs)


def _woodbury_solve(D, perturbations_hat, rhs):
    """
    (D + U U^T)^{-1} rhs, U = (Ê - mean) / sqrt(N-1)

    (D + UU^T)^{-1} = D^{-1} - D^{-1} U (I + U^T D^{-1} U)^{-1} U^T D^{-1}
    """
    E = np.asarray(perturbations_hat, dtype=float)
    if E.shape[0] != D.size:
        raise DimensionMismatch(f"摂動の次元 {E.shape[0]} が観測次元 {D.size} と一致しません")
    N = E.shape[1]
    if N < 2:
        raise InvalidParameterError("摂動の標本共分散にはメンバー数2以上が必要です")

    U = (E - E.mean(axis=1, keepdims=True)) / np.sqrt(N - 1)

    if not D.is_invertible():
        # D̂ に0モードがあると D^{-1} が使えないため、密行列の擬似逆で解く
        logger.warning("D̂ に分散0のモードがあるため、SMW の代わりに密行列で解きます")
        S = D.to_dense() + U @ U.T
        if not np.any(S) and np.any(rhs):
            raise SingularInnovationMatrix("イノベーション行列が0ですが、イノベーションが0ではありません")
        return scipy.linalg.pinvh(S) @ rhs

    Y = D.solve(rhs)
    Z = D.solve(U)
    inner = np.eye(N) + U.T @ Z
    try:
        factor = scipy.linalg.cho_factor(inner)
    except np.linalg.LinAlgError as e:
        raise SingularInnovationMatrix(f"SMW の内部行列が正定値ではありません: {e}") from e
    return Y - Z @ scipy.linalg.cho_solve(factor, U.T @ Y)


def gain_factors(d_hat, r_hat):
    """
    モードごとのゲイン D̂/(D̂ + R̂)（分母0のモードは0）

    Args:
        d_hat (numpy.ndarray): D̂ の対角
        r_hat (numpy.ndarray): R̂ の対角

    Returns:
        numpy.ndarray: ゲイン係数
    """
    d_hat = np.asarray(d_hat, dtype=float)
    denominator = d_hat + np.asarray(r_hat, dtype=float)
    gains = np.zeros_like(d_hat)
    positive = denominator > 0
    gains[positive] = d_hat[positive] / denominator[positive]
    return gains
