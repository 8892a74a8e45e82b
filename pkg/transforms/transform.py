#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
スペクトルEnKF解析システム - 正規直交変換

恒等変換、正規直交離散サイン変換 (DST-I)、周期化高速ウェーブレット変換を扱う。
変換オブジェクトは構築後に不変で、複数スレッドから読み取り専用で共有できる。

ウェーブレット係数の並び（n = 2^p, オクターブ数 J）:

    [0, n/2^J)              スケーリング係数（最も粗い近似）
    [n/2^J, n/2^(J-1))      最も粗いオクターブの詳細係数
    ...
    [n/2, n)                最も細かいオクターブの詳細係数
"""

import logging
from enum import Enum

import numpy as np
import scipy.fft

from transforms.filters import coiflet2_filter, wavelet_filter
from utils.exceptions import DimensionMismatch, InvalidParameterError, NotPowerOfTwo, OctavesOutOfRange
from utils.helpers import is_power_of_two, log2_int, parallel_map, split_columns


logger = logging.getLogger(__name__)

# 既定のオクターブ数の上限
DEFAULT_MAX_OCTAVES = 5


class TransformKind(str, Enum):
    """変換の種類"""

    IDENTITY = "identity"
    SINE = "sine"
    WAVELET = "wavelet"

    @classmethod
    def parse(cls, value):
        """
        文字列から変換の種類を得る（"fft", "dst" はサイン変換の別名）

        Args:
            value (str | TransformKind): 変換名

        Returns:
            TransformKind: 変換の種類
        """
        if isinstance(value, cls):
            return value

        aliases = {
            "identity": cls.IDENTITY,
            "sine": cls.SINE,
            "sineorthonormal": cls.SINE,
            "dst": cls.SINE,
            "dst1": cls.SINE,
            "fft": cls.SINE,
            "wavelet": cls.WAVELET,
            "waveletperiodized": cls.WAVELET,
        }
        key = str(value).strip().lower().replace("_", "").replace("-", "")
        if key not in aliases:
            raise InvalidParameterError(f"未知の変換です: {value}")
        return aliases[key]


def default_octaves(n):
    """既定のオクターブ数 min(5, log2(n))"""
    return min(DEFAULT_MAX_OCTAVES, log2_int(n))


class OrthonormalTransform:
    """
    正規直交変換 F（F^{-1} = F^T）

    make_transform で構築する。forward は û = F x、inverse は x = F^T û を返す。
    入力は長さ n のベクトル、または各列が1メンバーの n×K 行列。
    """

    def __init__(self, kind, size, octaves=None, wavelet=None):
        """
        初期化メソッド

        Args:
            kind (TransformKind): 変換の種類
            size (int): 格子点数 n
            octaves (int): オクターブ数（ウェーブレットのみ）
            wavelet (WaveletFilter): フィルタ（ウェーブレットのみ）
        """
        self._kind = kind
        self._size = int(size)
        self._octaves = octaves
        self._filter = wavelet

    @property
    def kind(self):
        return self._kind

    @property
    def size(self):
        return self._size

    @property
    def octaves(self):
        return self._octaves

    @property
    def filter(self):
        return self._filter

    def __repr__(self):
        if self._kind is TransformKind.WAVELET:
            return (f"OrthonormalTransform(kind={self._kind.value}, size={self._size}, "
                    f"octaves={self._octaves}, filter={self._filter.name})")
        return f"OrthonormalTransform(kind={self._kind.value}, size={self._size})"

    def describe(self):
        """
        設定・レポート用の辞書表現

        Returns:
            dict: 変換の属性
        """
        info = {"kind": self._kind.value, "size": self._size}
        if self._kind is TransformKind.WAVELET:
            info["octaves"] = self._octaves
            info["wavelet"] = self._filter.name
        return info

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim not in (1, 2) or x.shape[0] != self._size:
            raise DimensionMismatch(
                f"入力の次元 {x.shape} が変換サイズ {self._size} と一致しません"
            )
        return x

    def forward(self, x):
        """
        順変換 û = F x

        Args:
            x (numpy.ndarray): 長さ n のベクトルまたは n×K 行列

        Returns:
            numpy.ndarray: 変換係数（入力と同じ形状）
        """
        x = self._check(x)

        if self._kind is TransformKind.IDENTITY:
            return x.copy()
        if self._kind is TransformKind.SINE:
            return self._sine(x)
        return self._wavelet_forward(x)

    def inverse(self, xhat):
        """
        逆変換 x = F^T û

        Args:
            xhat (numpy.ndarray): 長さ n のベクトルまたは n×K 行列

        Returns:
            numpy.ndarray: 物理空間の値（入力と同じ形状）
        """
        xhat = self._check(xhat)

        if self._kind is TransformKind.IDENTITY:
            return xhat.copy()
        if self._kind is TransformKind.SINE:
            # 正規直交DST-Iは対称なので逆変換も同じ
            return self._sine(xhat)
        return self._wavelet_inverse(xhat)

    def as_matrix(self):
        """
        変換行列 F を密行列として返す

        単位ベクトル e_i の順変換が F の第i列になる。
        行 ℓ が基底関数 f_ℓ で、並びはモジュール冒頭の係数配置に従う。

        Returns:
            numpy.ndarray: n×n 行列
        """
        return self.forward(np.eye(self._size))

    def octave_layout(self):
        """
        係数インデックスの配置を返す

        Returns:
            list: {"label", "level", "start", "stop"} の辞書のリスト。
                level はウェーブレットのオクターブ番号（1が最も細かい）
        """
        n = self._size
        if self._kind is not TransformKind.WAVELET:
            return [{"label": self._kind.value, "level": 0, "start": 0, "stop": n}]

        J = self._octaves
        layout = [{"label": "scaling", "level": J, "start": 0, "stop": n >> J}]
        for level in range(J, 0, -1):
            layout.append({
                "label": "detail",
                "level": level,
                "start": n >> level,
                "stop": n >> (level - 1),
            })
        return layout

    # --- サイン変換 ---

    def _sine(self, x):
        if self._size == 1:
            # 長さ1の正規直交DST-Iは恒等写像
            return x.copy()
        if x.ndim == 1:
            return scipy.fft.dst(x, type=1, norm="ortho")
        # 列ごとに1次元変換を行い、まとめて処理する場合と結果を一致させる
        out = np.empty_like(x)
        for j in range(x.shape[1]):
            out[:, j] = scipy.fft.dst(x[:, j], type=1, norm="ortho")
        return out

    # --- 周期化ピラミッドアルゴリズム ---

    def _analysis_step(self, a):
        """1レベル分の分解（巡回畳み込み＋間引き）"""
        h = self._filter.lowpass
        g = self._filter.highpass
        L = len(h)
        m = a.shape[0]

        # 周期拡張: ext[i] = a[i mod m]
        ext = a[np.arange(m + L) % m]

        approx = np.zeros((m // 2,) + a.shape[1:])
        detail = np.zeros((m // 2,) + a.shape[1:])
        for k in range(L):
            segment = ext[k:k + m:2]
            approx += h[k] * segment
            detail += g[k] * segment
        return approx, detail

    def _synthesis_step(self, approx, detail):
        """1レベル分の再構成（分解の転置）"""
        h = self._filter.lowpass
        g = self._filter.highpass
        L = len(h)
        m = 2 * approx.shape[0]

        ext = np.zeros((m + L,) + approx.shape[1:])
        for k in range(L):
            ext[k:k + m:2] += h[k] * approx + g[k] * detail

        # 周期拡張部分を折り返す
        x = ext[:m].copy()
        for start in range(m, m + L, m):
            chunk = ext[start:start + m]
            x[:chunk.shape[0]] += chunk
        return x

    def _wavelet_forward(self, x):
        out = np.empty_like(x)
        a = x
        m = self._size
        for _ in range(self._octaves):
            a, d = self._analysis_step(a)
            out[m // 2:m] = d
            m //= 2
        out[:m] = a
        return out

    def _wavelet_inverse(self, xhat):
        m = self._size >> self._octaves
        a = xhat[:m]
        for _ in range(self._octaves):
            a = self._synthesis_step(a, xhat[m:2 * m])
            m *= 2
        return a


def make_transform(kind, n, octaves=None, filter=None):
    """
    正規直交変換を構築する

    Args:
        kind (str | TransformKind): "identity", "sine", "wavelet"（"fft", "dst" も可）
        n (int): 格子点数
        octaves (int): オクターブ数（ウェーブレットのみ、既定は min(5, log2 n)）
        filter (WaveletFilter | str): フィルタまたはウェーブレット名（既定は Coiflet 2）

    Returns:
        OrthonormalTransform: 再利用可能な変換オブジェクト

    Raises:
        NotPowerOfTwo: ウェーブレットで n が2のべき乗でない場合
        OctavesOutOfRange: オクターブ数が 1..log2(n) の範囲外の場合
    """
    kind = TransformKind.parse(kind)
    n = int(n)

    if n < 1:
        raise InvalidParameterError(f"格子点数は1以上である必要があります: {n}")

    if kind is not TransformKind.WAVELET:
        return OrthonormalTransform(kind, n)

    if n < 2 or not is_power_of_two(n):
        raise NotPowerOfTwo(f"ウェーブレット変換のサイズは2以上の2のべき乗である必要があります: n={n}")

    max_octaves = log2_int(n)
    if octaves is None:
        octaves = default_octaves(n)
    octaves = int(octaves)
    if not 1 <= octaves <= max_octaves:
        raise OctavesOutOfRange(f"オクターブ数は1以上{max_octaves}以下である必要があります: octaves={octaves}")

    if filter is None:
        filter = coiflet2_filter()
    elif isinstance(filter, str):
        filter = wavelet_filter(filter)

    transform = OrthonormalTransform(kind, n, octaves=octaves, wavelet=filter)
    logger.debug(f"変換を構築しました: {transform!r}")
    return transform


def forward(t, x):
    """û = F x"""
    return t.forward(x)


def inverse(t, xhat):
    """x = F^T û"""
    return t.inverse(xhat)


def as_matrix(t):
    """変換行列 F"""
    return t.as_matrix()


def forward_members(t, members, workers=1):
    """
    メンバー行列の各列に順変換を適用する

    列を連続したブロックに分けてスレッドで処理する。各列の計算は
    分割に依存しないため、結果は workers の値によらず同一になる。

    Args:
        t (OrthonormalTransform): 変換
        members (numpy.ndarray): n×N 行列
        workers (int): 同時実行数

    Returns:
        numpy.ndarray: n×N の変換係数
    """
    return _apply_members(t.forward, t, members, workers)


def inverse_members(t, members_hat, workers=1):
    """各列に逆変換を適用する"""
    return _apply_members(t.inverse, t, members_hat, workers)


def _apply_members(func, t, members, workers):
    members = np.asarray(members, dtype=float)
    if members.ndim != 2 or members.shape[0] != t.size:
        raise DimensionMismatch(f"メンバー行列の形状 {members.shape} が変換サイズ {t.size} と一致しません")

    if members.shape[1] == 0:
        return members.copy()

    blocks = split_columns(members.shape[1], workers)
    results = parallel_map(lambda s: func(members[:, s]), blocks, workers)
    return np.concatenate(results, axis=1)
