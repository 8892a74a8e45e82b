#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
スペクトルEnKF解析システム - 実験結果の保存
"""

import os
import json
import logging

import numpy as np
import pandas as pd

from utils.exceptions import OutputError
from utils.helpers import get_timestamp


# CSV は往復で値が変わらない精度で出力する
FLOAT_FORMAT = "%.17e"


def setup_directories(storage, timestamp=None):
    """
    出力ディレクトリを作成する

    Args:
        storage (StorageOptions): 出力の設定
        timestamp (str): 実行ディレクトリ名（省略時は現在時刻）

    Returns:
        dict: ディレクトリのパス（base, matrices, curves, reports, figures）

    Raises:
        OutputError: ディレクトリを作成できない場合
    """
    base_dir = storage.base_dir
    if storage.timestamped:
        base_dir = os.path.join(base_dir, timestamp or get_timestamp())

    dirs = {
        "base": base_dir,
        "matrices": os.path.join(base_dir, storage.matrices_dir),
        "curves": os.path.join(base_dir, storage.curves_dir),
        "reports": os.path.join(base_dir, storage.reports_dir),
        "figures": os.path.join(base_dir, storage.figures_dir),
    }

    try:
        for dir_path in dirs.values():
            os.makedirs(dir_path, exist_ok=True)
    except OSError as e:
        raise OutputError(f"出力ディレクトリを作成できませんでした: {base_dir}: {e}") from e

    return dirs


class ResultStorage:
    """行列・曲線・レポート・図を保存し、manifest.json に記録するクラス"""

    def __init__(self, dirs, formats=("csv", "json", "svg")):
        """
        初期化メソッド

        Args:
            dirs (dict): 出力ディレクトリ情報
            formats (tuple): 出力する形式
        """
        self.dirs = dirs
        self.base_dir = dirs["base"]
        self.formats = set(formats)
        self.logger = logging.getLogger(__name__)

        # マニフェストファイル
        self.manifest_file = os.path.join(self.base_dir, "manifest.json")
        self.manifest = []
        self.on_saved = None

    def wants(self, fmt):
        return fmt in self.formats

    def _relative(self, path):
        return os.path.relpath(path, self.base_dir)

    def save_matrix(self, name, matrix):
        """
        行列をヘッダなしCSVで保存する

        Args:
            name (str): ファイル名（拡張子なし）
            matrix (numpy.ndarray): 2次元配列

        Returns:
            str: 保存したパス（csv を出力しない場合は None）
        """
        if not self.wants("csv"):
            return None

        matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
        path = os.path.join(self.dirs["matrices"], f"{name}.csv")
        try:
            pd.DataFrame(matrix).to_csv(path, header=False, index=False, float_format=FLOAT_FORMAT)
        except OSError as e:
            self.logger.error(f"行列の保存中にエラーが発生しました: {e}")
            raise OutputError(f"行列を保存できませんでした: {path}: {e}") from e

        self.logger.info(f"行列を保存しました: {path} {matrix.shape}")
        self.add_to_manifest({"kind": "matrix", "format": "csv", "path": self._relative(path),
                              "shape": list(matrix.shape)})
        return path

    def save_curves(self, name, frame):
        """
        曲線データを1行ヘッダ付きCSVで保存する

        Args:
            name (str): ファイル名（拡張子なし）
            frame (pandas.DataFrame): 列ごとの曲線

        Returns:
            str: 保存したパス
        """
        if not self.wants("csv"):
            return None

        path = os.path.join(self.dirs["curves"], f"{name}.csv")
        try:
            frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
        except OSError as e:
            self.logger.error(f"曲線データの保存中にエラーが発生しました: {e}")
            raise OutputError(f"曲線データを保存できませんでした: {path}: {e}") from e

        self.logger.info(f"曲線データを保存しました: {path}")
        self.add_to_manifest({"kind": "curves", "format": "csv", "path": self._relative(path),
                              "shape": list(frame.shape), "columns": list(frame.columns)})
        return path

    def save_json(self, name, data):
        """
        レポートをJSONで保存する

        Args:
            name (str): ファイル名（拡張子なし）
            data (dict | list): 内容

        Returns:
            str: 保存したパス
        """
        if not self.wants("json"):
            return None

        path = os.path.join(self.dirs["reports"], f"{name}.json")
        try:
            with open(path, "w", encoding="utf-8") as f:
                json.dump(data, f, ensure_ascii=False, indent=2)
        except OSError as e:
            self.logger.error(f"レポートの保存中にエラーが発生しました: {e}")
            raise OutputError(f"レポートを保存できませんでした: {path}: {e}") from e

        self.logger.info(f"レポートを保存しました: {path}")
        self.add_to_manifest({"kind": "report", "format": "json", "path": self._relative(path)})
        return path

    def save_figure(self, name, figure):
        """
        plotly の図をSVGで保存する

        Args:
            name (str): ファイル名（拡張子なし）
            figure (plotly.graph_objects.Figure): 図

        Returns:
            str: 保存したパス
        """
        if not self.wants("svg"):
            return None

        path = os.path.join(self.dirs["figures"], f"{name}.svg")
        try:
            figure.write_image(path, format="svg")
        except (OSError, ValueError) as e:
            self.logger.error(f"図の保存中にエラーが発生しました: {e}")
            raise OutputError(f"図を保存できませんでした: {path}: {e}") from e

        self.logger.info(f"図を保存しました: {path}")
        self.add_to_manifest({"kind": "figure", "format": "svg", "path": self._relative(path)})
        return path

    def add_to_manifest(self, entry):
        """
        出力ファイルの情報をマニフェストに追加する

        Args:
            entry (dict): ファイル情報
        """
        self.manifest.append(entry)
        try:
            with open(self.manifest_file, "w", encoding="utf-8") as f:
                json.dump(self.manifest, f, ensure_ascii=False, indent=2)
        except OSError as e:
            self.logger.error(f"マニフェスト更新中にエラーが発生しました: {e}")
            raise OutputError(f"マニフェストを保存できませんでした: {self.manifest_file}: {e}") from e

        self.logger.debug(f"マニフェストを更新しました: {len(self.manifest)}件")
        if self.on_saved:
            self.on_saved(entry)


def load_matrix(path):
    """
    save_matrix で保存した行列を読み込む

    Args:
        path (str): CSVのパス

    Returns:
        numpy.ndarray: 2次元配列
    """
    try:
        return pd.read_csv(path, header=None, float_precision="round_trip").to_numpy(dtype=float)
    except OSError as e:
        raise OutputError(f"行列を読み込めませんでした: {path}: {e}") from e
