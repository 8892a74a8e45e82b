#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
スペクトルEnKF解析システム - 格子とアンサンブル
"""

import logging
from dataclasses import dataclass

import numpy as np

from utils.exceptions import DimensionMismatch, InvalidParameterError


logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Grid:
    """
    区間 [lower, upper] 上の一様格子（セル中心）

    節点は x_i = lower + (i - 1/2) (upper - lower) / n, i = 1..n。
    すべての節点が区間の内部にあるため、DST-I の端点とも衝突しない。

    Attributes:
        n (int): 格子点数
        lower (float): 区間の左端
        upper (float): 区間の右端
    """

    n: int
    lower: float = 0.0
    upper: float = 1.0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 0:
            raise InvalidParameterError(f"格子点数は0以上の整数である必要があります: {self.n}")
        if not self.upper > self.lower:
            raise InvalidParameterError(f"区間が不正です: [{self.lower}, {self.upper}]")

    @property
    def nodes(self):
        """節点座標（長さ n）"""
        spacing = (self.upper - self.lower) / max(self.n, 1)
        return self.lower + (np.arange(self.n) + 0.5) * spacing

    def nearest_node(self, x):
        """座標 x に最も近い節点のインデックス"""
        return int(np.argmin(np.abs(self.nodes - x)))


@dataclass(frozen=True)
class EnsembleVariable:
    """
    アンサンブルの1変数

    Attributes:
        name (str): 変数名
        grid (Grid): 変数の格子
        members (numpy.ndarray): n×N 行列（第k列がメンバー u_k）
    """

    name: str
    grid: Grid
    members: np.ndarray


class Ensemble:
    """
    N 個のシミュレーション状態（1変数以上）

    メンバー行列は読み取り専用のコピーとして保持する。
    N >= 2 の条件は標本統計量を計算する側で検証する。
    """

    def __init__(self, variables):
        """
        初期化メソッド

        Args:
            variables (list): EnsembleVariable のリスト
        """
        variables = tuple(variables)
        if not variables:
            raise InvalidParameterError("アンサンブルには1つ以上の変数が必要です")

        frozen = []
        member_count = None
        for var in variables:
            members = np.array(var.members, dtype=float, copy=True)
            if members.ndim != 2 or members.shape[0] != var.grid.n:
                raise DimensionMismatch(
                    f"変数 {var.name} のメンバー行列の形状 {members.shape} が格子点数 {var.grid.n} と一致しません"
                )
            if member_count is None:
                member_count = members.shape[1]
            elif members.shape[1] != member_count:
                raise DimensionMismatch(
                    f"変数 {var.name} のメンバー数 {members.shape[1]} が {member_count} と一致しません"
                )
            members.setflags(write=False)
            frozen.append(EnsembleVariable(var.name, var.grid, members))

        self._variables = tuple(frozen)
        self._member_count = member_count

    @classmethod
    def from_arrays(cls, arrays, names=None, grids=None):
        """
        n_v×N 行列のリストからアンサンブルを作る

        Args:
            arrays (list): 各変数のメンバー行列
            names (list): 変数名（省略時は "u1", "u2", ...）
            grids (list): 格子（省略時は [0,1] 上の一様格子）

        Returns:
            Ensemble: アンサンブル
        """
        arrays = [np.atleast_2d(np.asarray(a, dtype=float)) for a in arrays]
        if names is None:
            names = [f"u{i + 1}" for i in range(len(arrays))]
        if grids is None:
            grids = [Grid(a.shape[0]) for a in arrays]
        return cls([EnsembleVariable(name, grid, a) for name, grid, a in zip(names, grids, arrays)])

    def __repr__(self):
        layout = ", ".join(f"{v.name}[{v.grid.n}]" for v in self._variables)
        return f"Ensemble(N={self._member_count}, variables=({layout}))"

    @property
    def member_count(self):
        """メンバー数 N"""
        return self._member_count

    @property
    def variables(self):
        return self._variables

    @property
    def variable_count(self):
        return len(self._variables)

    @property
    def state_size(self):
        """全変数を連結した状態ベクトルの長さ"""
        return sum(v.grid.n for v in self._variables)

    def index(self, var):
        """
        変数のインデックスを返す

        Args:
            var (int | str): インデックスまたは変数名

        Returns:
            int: インデックス
        """
        if isinstance(var, str):
            for i, v in enumerate(self._variables):
                if v.name == var:
                    return i
            raise InvalidParameterError(f"変数が見つかりません: {var}")

        i = int(var)
        if not 0 <= i < len(self._variables):
            raise InvalidParameterError(f"変数インデックスが範囲外です: {var}")
        return i

    def variable(self, var):
        return self._variables[self.index(var)]

    def members(self, var):
        """変数のメンバー行列（n_v×N、読み取り専用）"""
        return self.variable(var).members

    def grid(self, var):
        return self.variable(var).grid

    def offsets(self):
        """連結状態ベクトル内での各変数の開始位置"""
        sizes = [v.grid.n for v in self._variables]
        return np.concatenate([[0], np.cumsum(sizes)]).astype(int)

    def stacked(self):
        """全変数を縦に連結した (Σn_v)×N 行列"""
        return np.vstack([v.members for v in self._variables])

    def subset(self, count):
        """
        先頭 count 個のメンバーからなるアンサンブル

        Args:
            count (int): メンバー数

        Returns:
            Ensemble: 部分アンサンブル
        """
        count = int(count)
        if not 1 <= count <= self._member_count:
            raise InvalidParameterError(f"メンバー数が範囲外です: {count} (N={self._member_count})")
        return Ensemble([
            EnsembleVariable(v.name, v.grid, v.members[:, :count]) for v in self._variables
        ])

    def replace_members(self, arrays):
        """
        同じ変数構成で、メンバー行列だけを置き換えたアンサンブル

        Args:
            arrays (list): 各変数の新しいメンバー行列

        Returns:
            Ensemble: 新しいアンサンブル
        """
        arrays = list(arrays)
        if len(arrays) != len(self._variables):
            raise DimensionMismatch(f"変数の数 {len(arrays)} が {len(self._variables)} と一致しません")
        return Ensemble([
            EnsembleVariable(v.name, v.grid, a) for v, a in zip(self._variables, arrays)
        ])

    def from_stacked(self, stacked):
        """連結状態行列から同じ構成のアンサンブルを作る"""
        stacked = np.asarray(stacked, dtype=float)
        offsets = self.offsets()
        if stacked.shape[0] != self.state_size:
            raise DimensionMismatch(f"状態ベクトルの長さ {stacked.shape[0]} が {self.state_size} と一致しません")
        return self.replace_members([stacked[a:b] for a, b in zip(offsets[:-1], offsets[1:])])
