#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
スペクトルEnKF解析システム - 例外定義

終了コードとの対応:
    InvalidParameterError -> 1 (設定・引数の誤り)
    NumericalError        -> 2 (数値計算の失敗)
    OutputError           -> 3 (ファイル入出力の失敗)
"""


class SpectralEnKFError(Exception):
    """本システムの全例外の基底クラス"""

    exit_code = 2


class InvalidParameterError(SpectralEnKFError, ValueError):
    """パラメータや設定値が不正な場合の例外"""

    exit_code = 1


class NotPowerOfTwo(InvalidParameterError):
    """ウェーブレット変換のサイズが2のべき乗でない"""


class OctavesOutOfRange(InvalidParameterError):
    """オクターブ数が 1..log2(n) の範囲外"""


class EmptyGrid(InvalidParameterError):
    """格子点数が0"""


class FilterValidationError(InvalidParameterError):
    """ウェーブレットフィルタが正規直交条件を満たさない"""


class ConfigurationError(InvalidParameterError):
    """設定ファイル・コマンドライン引数の誤り"""


class NumericalError(SpectralEnKFError):
    """数値計算に関する例外"""

    exit_code = 2


class DimensionMismatch(NumericalError, ValueError):
    """ベクトル・行列の次元が一致しない"""


class EnsembleTooSmall(NumericalError):
    """標本統計量の計算にはメンバー数2以上が必要"""


class SingularInnovationMatrix(NumericalError):
    """イノベーション行列 (HQH^T + R) が特異"""


class UnsupportedObservation(NumericalError):
    """指定された更新手法では扱えない観測演算子"""


class MissingProjection(NumericalError):
    """格子が異なる変数間の補間演算子が指定されていない"""


class OutputError(SpectralEnKFError, OSError):
    """結果ファイルの書き込み・読み込みに失敗"""

    exit_code = 3
