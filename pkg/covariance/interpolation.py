#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
スペクトルEnKF解析システム - 格子間補間演算子
"""

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from utils.exceptions import DimensionMismatch, EmptyGrid


logger = logging.getLogger(__name__)

# ‖P†P - I‖_∞ の既定許容値
IDENTITY_TOLERANCE = 1e-8
INTERPOLATION_TOLERANCE = 0.1


@dataclass(frozen=True)
class InterpolationOperator:
    """
    格子 source から格子 target への射影 P と近似左逆 P†

    Attributes:
        source_grid (Grid): 射影元の格子
        target_grid (Grid): 射影先の格子
        matrix (numpy.ndarray): P (target_n × source_n)
        left_inverse (numpy.ndarray): P† (source_n × target_n)
        left_inverse_error (float): ‖P†P - I‖_∞
    """

    source_grid: object
    target_grid: object
    matrix: np.ndarray
    left_inverse: np.ndarray
    left_inverse_error: float

    @property
    def is_identity(self):
        return self.source_grid.n == self.target_grid.n and self.left_inverse_error == 0.0

    def project(self, u):
        """P u（u は長さ source_n のベクトルまたは source_n×K 行列）"""
        u = np.asarray(u, dtype=float)
        if u.shape[0] != self.source_grid.n:
            raise DimensionMismatch(f"射影元の次元 {u.shape[0]} が {self.source_grid.n} と一致しません")
        if self.is_identity:
            return u.copy()
        return self.matrix @ u

    def lift(self, v):
        """P† v（射影先から射影元の格子へ戻す）"""
        v = np.asarray(v, dtype=float)
        if v.shape[0] != self.target_grid.n:
            raise DimensionMismatch(f"射影先の次元 {v.shape[0]} が {self.target_grid.n} と一致しません")
        if self.is_identity:
            return v.copy()
        return self.left_inverse @ v


def linear_interpolation_matrix(source, target):
    """
    区分線形補間行列（区間外は端の値で一定に延長）

    Args:
        source (Grid): 補間元の格子
        target (Grid): 補間先の格子

    Returns:
        numpy.ndarray: target.n × source.n 行列
    """
    xs = source.nodes
    xt = target.nodes

    if source.n == 1:
        return np.ones((target.n, 1))

    # 各列は単位ベクトル e_j を補間した結果
    identity = np.eye(source.n)
    return np.column_stack([np.interp(xt, xs, identity[:, j]) for j in range(source.n)])


def build_interpolation(source, target, tolerance=None):
    """
    補間演算子 P と Moore-Penrose 擬似逆 P† を構築する

    同一格子では P = P† = I を厳密に返す。

    Args:
        source (Grid): 射影元の格子
        target (Grid): 射影先の格子
        tolerance (float): ‖P†P - I‖_∞ の許容値（超えた場合は警告のみ）

    Returns:
        InterpolationOperator: 補間演算子

    Raises:
        EmptyGrid: どちらかの格子点数が0の場合
    """
    if source.n == 0 or target.n == 0:
        raise EmptyGrid(f"空の格子は補間できません: source={source.n}, target={target.n}")

    if source == target:
        identity = np.eye(source.n)
        identity.setflags(write=False)
        return InterpolationOperator(source, target, identity, identity, 0.0)

    P = linear_interpolation_matrix(source, target)
    P_dagger = scipy.linalg.pinv(P)
    error = float(np.max(np.abs(P_dagger @ P - np.eye(source.n))))

    if tolerance is None:
        tolerance = INTERPOLATION_TOLERANCE
    if error > tolerance:
        logger.warning(
            f"補間演算子の近似左逆の誤差が許容値を超えています: ‖P†P - I‖ = {error:.3e} > {tolerance} "
            f"(source={source.n}, target={target.n})"
        )
    else:
        logger.debug(f"補間演算子を構築しました: {source.n} -> {target.n} (‖P†P - I‖ = {error:.3e})")

    P.setflags(write=False)
    P_dagger.setflags(write=False)
    return InterpolationOperator(source, target, P, P_dagger, error)


def identity_interpolation(grid):
    """同一格子の恒等演算子"""
    return build_interpolation(grid, grid)
