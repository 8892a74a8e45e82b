#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
ヘルパー関数を提供するユーティリティモジュール
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime

import numpy as np


logger = logging.getLogger(__name__)


def is_power_of_two(n):
    """
    2のべき乗かどうかを判定する

    Args:
        n (int): 判定する整数

    Returns:
        bool: 2のべき乗（1を含む）ならTrue
    """
    n = int(n)
    return n >= 1 and (n & (n - 1)) == 0


def log2_int(n):
    """2のべき乗 n の指数を返す"""
    return int(n).bit_length() - 1


def spawn_generators(seed, count):
    """
    シードからメンバーごとの独立した乱数生成器を作る

    SeedSequence.spawn の子はインデックスだけで決まるため、
    先頭 k 個の生成器は count に依存しない。

    Args:
        seed (int): 基本シード
        count (int): 生成器の数

    Returns:
        list: numpy.random.Generator のリスト
    """
    children = np.random.SeedSequence(int(seed)).spawn(int(count))
    return [np.random.default_rng(child) for child in children]


def parallel_map(func, items, workers=1):
    """
    順序を保ったまま関数を適用する（workers > 1 の場合はスレッド並列）

    Args:
        func (callable): 各要素に適用する関数
        items (iterable): 入力
        workers (int): 同時実行数

    Returns:
        list: 入力と同じ順序の結果リスト
    """
    items = list(items)
    workers = max(1, int(workers or 1))
    if workers == 1 or len(items) <= 1:
        return [func(item) for item in items]

    with ThreadPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(func, items))


def split_columns(count, workers):
    """
    列インデックス 0..count-1 を workers 個の連続したスライスに分割する

    Args:
        count (int): 列数
        workers (int): 分割数

    Returns:
        list: slice のリスト（空のスライスは含まない）
    """
    workers = max(1, min(int(workers or 1), int(count)))
    bounds = np.linspace(0, count, workers + 1).astype(int)
    return [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def get_timestamp():
    """
    現在のタイムスタンプを取得する

    Returns:
        str: フォーマットされたタイムスタンプ
    """
    return datetime.now().strftime("%Y%m%d_%H%M%S")
