#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
スペクトルEnKF解析システム - 観測演算子
"""

from dataclasses import dataclass

import numpy as np

from utils.exceptions import DimensionMismatch


@dataclass(frozen=True)
class ObservationBlock:
    """
    観測演算子の1ブロック H_j（変数の選択と、必要なら観測格子への補間）

    Attributes:
        variable (int | str): 観測する変数
        projection (InterpolationOperator): 観測格子への射影（None は同一格子）
    """

    variable: object
    projection: object = None

    def size(self, ens):
        """観測次元 m_j"""
        if self.projection is not None:
            return self.projection.target_grid.n
        return ens.grid(self.variable).n

    def grid(self, ens):
        """観測格子"""
        if self.projection is not None:
            return self.projection.target_grid
        return ens.grid(self.variable)

    def is_identity(self):
        return self.projection is None or self.projection.is_identity

    def apply(self, ens):
        """H_j u_k を全メンバーについて計算する（m_j×N）"""
        members = ens.members(self.variable)
        if self.projection is None:
            return np.array(members, dtype=float)
        if self.projection.source_grid.n != members.shape[0]:
            raise DimensionMismatch(
                f"射影元の格子点数 {self.projection.source_grid.n} が変数 {self.variable} の {members.shape[0]} と一致しません"
            )
        return self.projection.project(members)


@dataclass(frozen=True)
class ObservationSpec:
    """
    観測の仕様（H のブロック、データ d、誤差モデル）

    Attributes:
        blocks (tuple): ObservationBlock のタプル
        data (numpy.ndarray): 観測データ d（全ブロックを連結）
        noise (NoiseModel): 観測誤差モデル
    """

    blocks: tuple
    data: np.ndarray
    noise: object

    def offsets(self, ens):
        """連結観測ベクトル内での各ブロックの開始位置"""
        sizes = [block.size(ens) for block in self.blocks]
        return np.concatenate([[0], np.cumsum(sizes)]).astype(int)

    def total_size(self, ens):
        return int(self.offsets(ens)[-1])

    def validate(self, ens):
        """
        アンサンブルとの整合性を検証する

        Raises:
            DimensionMismatch: データ長や射影の次元が一致しない場合
        """
        if not self.blocks:
            raise DimensionMismatch("観測ブロックがありません")

        for block in self.blocks:
            ens.index(block.variable)
            if block.projection is not None and block.projection.source_grid.n != ens.grid(block.variable).n:
                raise DimensionMismatch(
                    f"射影元の格子点数 {block.projection.source_grid.n} が変数 {block.variable} の格子と一致しません"
                )

        total = self.total_size(ens)
        if len(self.data) != total:
            raise DimensionMismatch(f"観測データの長さ {len(self.data)} が観測次元 {total} と一致しません")

    def observe(self, ens):
        """H u_k を全メンバーについて計算する（M×N）"""
        return np.vstack([block.apply(ens) for block in self.blocks])

    def matrix(self, ens):
        """
        H を密行列で返す

        Returns:
            numpy.ndarray: M × (Σn_v) 行列
        """
        state_offsets = ens.offsets()
        obs_offsets = self.offsets(ens)
        H = np.zeros((obs_offsets[-1], ens.state_size))

        for j, block in enumerate(self.blocks):
            v = ens.index(block.variable)
            rows = slice(obs_offsets[j], obs_offsets[j + 1])
            cols = slice(state_offsets[v], state_offsets[v + 1])
            if block.projection is None:
                H[rows, cols] = np.eye(ens.grid(v).n)
            else:
                H[rows, cols] = block.projection.matrix
        return H


def observe_variable(variable, data, noise, projection=None):
    """
    1変数を観測する ObservationSpec を作る

    Args:
        variable (int | str): 観測する変数
        data (numpy.ndarray): 観測データ
        noise (NoiseModel): 観測誤差モデル
        projection (InterpolationOperator): 観測格子への射影

    Returns:
        ObservationSpec: 観測の仕様
    """
    data = np.array(data, dtype=float)
    data.setflags(write=False)
    return ObservationSpec((ObservationBlock(variable, projection),), data, noise)
