#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
スペクトルEnKF解析システム - メインエントリーポイント

終了コード: 0 正常終了, 1 引数・設定エラー, 2 数値計算エラー, 3 入出力エラー
"""

import sys
import argparse
import logging

# 内部モジュールのインポート
from utils.logger import setup_logger
from utils.exceptions import ConfigurationError, InvalidParameterError, OutputError, SpectralEnKFError
from experiments.config import EXPERIMENT_KINDS, ExperimentConfig, load_config
from experiments.runner import ExperimentRunner
from experiments.storage import setup_directories


class ArgumentParser(argparse.ArgumentParser):
    """引数エラーを終了コード1で報告するパーサー"""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(InvalidParameterError.exit_code, f"{self.prog}: エラー: {message}\n")


def _split(value):
    return [item.strip() for item in value.split(",") if item.strip()]


def build_parser():
    """コマンドライン引数の定義"""
    parser = ArgumentParser(description="スペクトルEnKF解析システム")
    parser.add_argument("-c", "--config", default=None, help="設定ファイルのパス（YAML または JSON）")
    parser.add_argument("--experiment", choices=EXPERIMENT_KINDS, help="実行する実験")
    parser.add_argument("--seed", type=int, help="基本シード")
    parser.add_argument("--n", type=int, help="格子点数")
    parser.add_argument("--members", type=int, help="アンサンブルのメンバー数")
    parser.add_argument("--methods", type=_split, help="手法（カンマ区切り: classical,fft,wavelet）")
    parser.add_argument("--octaves", type=int, help="ウェーブレットのオクターブ数")
    parser.add_argument("--out", help="出力ディレクトリ")
    parser.add_argument("--formats", type=_split, help="出力形式（カンマ区切り: csv,json,svg）")
    parser.add_argument("--workers", type=int, help="同時実行数")
    return parser


def main(argv=None):
    """
    メイン実行関数

    Args:
        argv (list): コマンドライン引数（省略時は sys.argv）

    Returns:
        int: 終了コード
    """
    args = build_parser().parse_args(argv)

    # 設定読み込み
    try:
        config = load_config(args.config) if args.config else ExperimentConfig()
        config = config.override(
            experiment=args.experiment,
            seed=args.seed,
            n=args.n,
            members=args.members,
            methods=args.methods,
            octaves=args.octaves,
            out=args.out,
            formats=args.formats,
            workers=args.workers,
        )
    except InvalidParameterError as e:
        print(f"設定エラー: {e}", file=sys.stderr)
        return ConfigurationError.exit_code

    # ロガー設定
    logger = setup_logger(config.log_level, config.log_file)
    logger.info("スペクトルEnKF解析システムを開始します")

    try:
        # ディレクトリ作成
        dirs = setup_directories(config.storage)
        logger.info(f"出力ディレクトリを作成しました: {dirs['base']}")

        runner = ExperimentRunner(config, dirs)
        runner.run()

        logger.info(f"すべての処理が完了しました。結果は {dirs['base']} に保存されています")
        return 0

    except SpectralEnKFError as e:
        logger.error(f"エラーが発生しました: {e}")
        return e.exit_code
    except OSError as e:
        logger.error(f"入出力エラーが発生しました: {e}", exc_info=True)
        return OutputError.exit_code


if __name__ == "__main__":
    sys.exit(main())
