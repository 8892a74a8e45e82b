#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
スペクトルEnKF解析システム - 実験設定の読み込み
"""

import logging
from dataclasses import dataclass, field, fields, replace

import yaml

from synthetic.model import BumpParameters, SyntheticConfig
from transforms.transform import TransformKind
from utils.exceptions import ConfigurationError, InvalidParameterError


logger = logging.getLogger(__name__)

EXPERIMENT_KINDS = ("transform_matrix", "covariance_compare", "assimilate", "all")
METHODS = ("classical", "fft", "wavelet")
FORMATS = ("csv", "json", "svg")


@dataclass(frozen=True)
class TransformOptions:
    """
    変換の設定

    Attributes:
        kind (str): 変換行列実験で出力する変換
        n (int): 変換行列実験の格子点数
        octaves (int): オクターブ数（None は min(5, log2 n)）
        wavelet (str): ウェーブレット名
        sine_variant (str): サイン変換の種類（DST-I のみ）
    """

    kind: str = "wavelet"
    n: int = 64
    octaves: object = None
    wavelet: str = "coif2"
    sine_variant: str = "dst1"


@dataclass(frozen=True)
class AssimilationOptions:
    """
    解析更新の設定

    Attributes:
        cross_mode (str): spectral_diagonal または sample_covariance
        recenter_perturbations (bool): 摂動の標本平均を0に補正するか
        reference_members (int): 共分散比較の参照アンサンブルのメンバー数
    """

    cross_mode: str = "spectral_diagonal"
    recenter_perturbations: bool = False
    reference_members: int = 1000


@dataclass(frozen=True)
class StorageOptions:
    base_dir: str = "./output"
    timestamped: bool = True
    formats: tuple = FORMATS
    matrices_dir: str = "matrices"
    curves_dir: str = "curves"
    reports_dir: str = "reports"
    figures_dir: str = "figures"


@dataclass(frozen=True)
class ExperimentConfig:
    """
    実験全体の設定（config.yaml の各セクションに対応）

    Attributes:
        experiment (str): 実験の種類
        seed (int): 基本シード
        methods (tuple): 比較する手法
        synthetic (SyntheticConfig): 合成モデルの設定
        transforms (TransformOptions): 変換の設定
        assimilation (AssimilationOptions): 解析更新の設定
        storage (StorageOptions): 出力の設定
        workers (int): 同時実行数
        log_level (str): ログレベル
        log_file (str): ログファイル
    """

    experiment: str = "all"
    seed: int = 0
    methods: tuple = METHODS
    synthetic: SyntheticConfig = field(default_factory=SyntheticConfig)
    transforms: TransformOptions = field(default_factory=TransformOptions)
    assimilation: AssimilationOptions = field(default_factory=AssimilationOptions)
    storage: StorageOptions = field(default_factory=StorageOptions)
    workers: int = 1
    log_level: str = "INFO"
    log_file: object = "spectral_enkf.log"

    @classmethod
    def from_dict(cls, data):
        """
        辞書（YAML/JSON の内容）から設定を作る

        Args:
            data (dict): 設定内容

        Returns:
            ExperimentConfig: 検証済みの設定

        Raises:
            ConfigurationError: 不正な値や未知のキーがある場合
        """
        data = data or {}
        if not isinstance(data, dict):
            raise ConfigurationError("設定ファイルの最上位は辞書である必要があります")

        experiment = dict(data.get("experiment") or {})
        runtime = dict(data.get("runtime") or {})
        logging_section = dict(data.get("logging") or {})
        seed = int(experiment.get("seed", 0))

        synthetic = dict(data.get("synthetic") or {})
        if "truth" in synthetic and isinstance(synthetic["truth"], dict):
            synthetic["truth"] = BumpParameters(**synthetic["truth"])
        synthetic.setdefault("seed", seed)

        storage = dict(data.get("storage") or {})
        if "formats" in storage:
            storage["formats"] = tuple(storage["formats"])

        try:
            config = cls(
                experiment=experiment.get("kind", "all"),
                seed=seed,
                methods=tuple(experiment.get("methods", METHODS)),
                synthetic=_build(SyntheticConfig, synthetic, "synthetic"),
                transforms=_build(TransformOptions, data.get("transforms"), "transforms"),
                assimilation=_build(AssimilationOptions, data.get("assimilation"), "assimilation"),
                storage=_build(StorageOptions, storage, "storage"),
                workers=int(runtime.get("workers", 1)),
                log_level=logging_section.get("level", "INFO"),
                log_file=logging_section.get("file", "spectral_enkf.log"),
            )
        except (TypeError, ValueError) as e:
            if isinstance(e, ConfigurationError):
                raise
            raise ConfigurationError(f"設定値が不正です: {e}") from e

        config.validate()
        return config

    def override(self, experiment=None, seed=None, n=None, members=None, methods=None, octaves=None,
                 out=None, formats=None, workers=None):
        """
        コマンドライン引数で設定を上書きする（None の項目はそのまま）

        Returns:
            ExperimentConfig: 新しい設定
        """
        config = self
        if experiment is not None:
            config = replace(config, experiment=experiment)
        if seed is not None:
            config = replace(config, seed=int(seed), synthetic=replace(config.synthetic, seed=int(seed)))
        if n is not None:
            config = replace(
                config,
                synthetic=replace(config.synthetic, n=int(n)),
                transforms=replace(config.transforms, n=int(n)),
            )
        if members is not None:
            config = replace(config, synthetic=config.synthetic.with_members(members))
        if methods is not None:
            config = replace(config, methods=tuple(methods))
        if octaves is not None:
            config = replace(config, transforms=replace(config.transforms, octaves=int(octaves)))
        if out is not None:
            config = replace(config, storage=replace(config.storage, base_dir=out))
        if formats is not None:
            config = replace(config, storage=replace(config.storage, formats=tuple(formats)))
        if workers is not None:
            config = replace(config, workers=int(workers))

        config.validate()
        return config

    def validate(self):
        """
        設定を検証する

        Raises:
            ConfigurationError: 不正な設定の場合
        """
        if self.experiment not in EXPERIMENT_KINDS:
            raise ConfigurationError(f"未知の実験です: {self.experiment}（{', '.join(EXPERIMENT_KINDS)}）")

        unknown = [m for m in self.methods if m not in METHODS]
        if unknown:
            raise ConfigurationError(f"未知の手法です: {unknown}（{', '.join(METHODS)}）")
        if self.experiment in ("assimilate", "all") and not self.methods:
            raise ConfigurationError("解析更新の実験には1つ以上の手法が必要です")

        unknown = [f for f in self.storage.formats if f not in FORMATS]
        if unknown:
            raise ConfigurationError(f"未知の出力形式です: {unknown}（{', '.join(FORMATS)}）")
        if not str(self.storage.base_dir).strip():
            raise ConfigurationError("出力ディレクトリが指定されていません")

        if self.workers < 1:
            raise ConfigurationError(f"同時実行数は1以上である必要があります: {self.workers}")
        if self.assimilation.reference_members < 2:
            raise ConfigurationError(
                f"参照アンサンブルのメンバー数は2以上である必要があります: {self.assimilation.reference_members}"
            )
        if self.assimilation.cross_mode not in ("spectral_diagonal", "sample_covariance"):
            raise ConfigurationError(f"未知の相互共分散モードです: {self.assimilation.cross_mode}")
        if self.transforms.sine_variant.lower() not in ("dst1", "dst-i", "dst_i"):
            raise ConfigurationError(f"サイン変換は DST-I のみ対応しています: {self.transforms.sine_variant}")

        try:
            TransformKind.parse(self.transforms.kind)
        except InvalidParameterError as e:
            raise ConfigurationError(str(e)) from e

    def describe(self):
        """レポート用の辞書表現"""
        synthetic = {f.name: getattr(self.synthetic, f.name) for f in fields(self.synthetic)}
        synthetic["truth"] = vars(self.synthetic.truth).copy()
        return {
            "experiment": self.experiment,
            "seed": self.seed,
            "methods": list(self.methods),
            "synthetic": synthetic,
            "transforms": vars(self.transforms).copy(),
            "assimilation": vars(self.assimilation).copy(),
            "workers": self.workers,
        }


def _build(cls, section, name):
    section = dict(section or {})
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(section) - known)
    if unknown:
        raise ConfigurationError(f"{name} セクションに未知のキーがあります: {unknown}")
    try:
        return cls(**section)
    except InvalidParameterError as e:
        raise ConfigurationError(f"{name} セクションの値が不正です: {e}") from e


def load_config(config_path="config.yaml"):
    """
    設定ファイルを読み込む（JSON も YAML として読める）

    Args:
        config_path (str): 設定ファイルのパス

    Returns:
        ExperimentConfig: 設定

    Raises:
        ConfigurationError: 読み込みまたは検証に失敗した場合
    """
    try:
        with open(config_path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f)
    except (OSError, yaml.YAMLError) as e:
        raise ConfigurationError(f"設定ファイルの読み込みに失敗しました: {e}") from e

    logger.debug(f"設定ファイルを読み込みました: {config_path}")
    return ExperimentConfig.from_dict(data)
