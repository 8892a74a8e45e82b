#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
スペクトルEnKF解析システム - 直交ウェーブレットフィルタ

フィルタ係数は PyWavelets の公開係数表から取得し、
構築時に正規直交条件を再検証する。
"""

import logging
from dataclasses import dataclass

import numpy as np
import pywt

from utils.exceptions import FilterValidationError


logger = logging.getLogger(__name__)

# 正規化・直交性の許容誤差
FILTER_TOLERANCE = 1e-10


@dataclass(frozen=True)
class WaveletFilter:
    """
    直交ウェーブレットのQMFフィルタ対

    Attributes:
        name (str): ウェーブレット名（PyWavelets表記, 例: "coif2"）
        lowpass (numpy.ndarray): スケーリングフィルタ h_k
        highpass (numpy.ndarray): ウェーブレットフィルタ g_k = (-1)^k h_{L-1-k}
    """

    name: str
    lowpass: np.ndarray
    highpass: np.ndarray

    @property
    def length(self):
        """タップ数 L"""
        return len(self.lowpass)


def quadrature_mirror(lowpass):
    """
    ローパスフィルタから直交ミラーフィルタ（ハイパス）を作る

    Args:
        lowpass (numpy.ndarray): h_k

    Returns:
        numpy.ndarray: g_k = (-1)^k h_{L-1-k}
    """
    h = np.asarray(lowpass, dtype=float)
    signs = np.where(np.arange(len(h)) % 2 == 0, 1.0, -1.0)
    return signs * h[::-1]


def validate_filter(wavelet_filter, tol=FILTER_TOLERANCE):
    """
    フィルタの不変条件を検証する

    - Σh_k = √2
    - Σ_k h_k h_{k+2m} = δ_{m0}
    - Σg_k = 0

    Args:
        wavelet_filter (WaveletFilter): 検証するフィルタ
        tol (float): 許容誤差

    Raises:
        FilterValidationError: いずれかの条件を満たさない場合
    """
    h = wavelet_filter.lowpass
    g = wavelet_filter.highpass
    L = len(h)

    if L < 2 or L % 2 != 0:
        raise FilterValidationError(f"フィルタ長は2以上の偶数である必要があります: {wavelet_filter.name} (L={L})")

    if len(g) != L:
        raise FilterValidationError(f"ハイパスフィルタの長さが一致しません: {len(g)} != {L}")

    total = float(np.sum(h))
    if abs(total - np.sqrt(2.0)) > tol:
        raise FilterValidationError(f"{wavelet_filter.name}: Σh_k = {total!r} が √2 と一致しません")

    for m in range(L // 2):
        inner = float(np.dot(h[:L - 2 * m], h[2 * m:]))
        expected = 1.0 if m == 0 else 0.0
        if abs(inner - expected) > tol:
            raise FilterValidationError(
                f"{wavelet_filter.name}: シフト {2 * m} の内積 {inner!r} が {expected} と一致しません"
            )

    wavelet_sum = float(np.sum(g))
    if abs(wavelet_sum) > tol:
        raise FilterValidationError(f"{wavelet_filter.name}: Σg_k = {wavelet_sum!r} が0ではありません")


def wavelet_filter(name):
    """
    名前から直交ウェーブレットフィルタを構築する

    Args:
        name (str): PyWavelets のウェーブレット名 ("haar", "db4", "coif2" など)

    Returns:
        WaveletFilter: 検証済みのフィルタ

    Raises:
        FilterValidationError: 未知の名前、または直交でないウェーブレットの場合
    """
    try:
        wavelet = pywt.Wavelet(name)
    except ValueError as e:
        raise FilterValidationError(f"未知のウェーブレットです: {name} ({e})") from e

    if not wavelet.orthogonal:
        raise FilterValidationError(f"直交ウェーブレットではありません: {name}")

    # rec_lo は自然な順序のスケーリングフィルタ h_0..h_{L-1}
    lowpass = np.asarray(wavelet.rec_lo, dtype=float)
    lowpass.setflags(write=False)
    highpass = quadrature_mirror(lowpass)
    highpass.setflags(write=False)

    result = WaveletFilter(name=name, lowpass=lowpass, highpass=highpass)
    validate_filter(result)

    logger.debug(f"ウェーブレットフィルタを構築しました: {name} (タップ数 {result.length})")
    return result


def coiflet2_filter():
    """Coiflet 2 (12タップ) フィルタを返す"""
    return wavelet_filter("coif2")
