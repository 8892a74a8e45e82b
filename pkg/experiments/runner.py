#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
スペクトルEnKF解析システム - 実験の実行

transform_matrix   : 変換行列とオクターブ配置
covariance_compare : 大アンサンブルの標本共分散と小アンサンブルの各推定の比較
assimilate         : 同じ小アンサンブル・同じ観測での解析更新の比較
"""

import logging
import time

import numpy as np
import pandas as pd

from covariance.interpolation import identity_interpolation
from covariance.statistics import (
    covariance_metrics,
    reconstruct_dense,
    sample_covariance,
    spectral_cross_diagonal,
    spectral_diagonal,
)
from enkf.noise import perturb_data
from enkf.update import classical_update, spectral_update_multi
from experiments import plots
from experiments.storage import ResultStorage
from synthetic.model import make_ensemble, make_truth_and_obs, truth_var2
from transforms.transform import TransformKind, make_transform
from utils.exceptions import ConfigurationError, SpectralEnKFError


# 手法名と変換の対応（"fft" は正規直交DST-I）
METHOD_TRANSFORMS = {
    "fft": TransformKind.SINE,
    "wavelet": TransformKind.WAVELET,
}


class ExperimentRunner:
    """設定に従って実験を実行し、結果を保存するクラス"""

    def __init__(self, config, dirs):
        """
        初期化メソッド

        Args:
            config (ExperimentConfig): 実験設定
            dirs (dict): 出力ディレクトリ情報
        """
        self.config = config
        self.dirs = dirs
        self.logger = logging.getLogger(__name__)
        self.storage = ResultStorage(dirs, config.storage.formats)
        self.storage.on_saved = lambda entry: self.notify("file_saved", entry)
        self.callback = None
        self._reference = None

    def set_callback(self, callback_function):
        """
        コールバック関数を設定

        Args:
            callback_function: イベントとデータを受け取るコールバック関数
        """
        self.callback = callback_function

    def notify(self, event, data):
        """
        イベント通知

        Args:
            event: イベント名
            data: イベントデータ
        """
        if self.callback:
            self.callback(event, data)

    def run(self):
        """
        設定された実験を実行する

        Returns:
            dict: 実験名ごとのレポート

        Raises:
            SpectralEnKFError: 実験中のエラー（ログを出力して再送出）
        """
        kinds = [self.config.experiment]
        if self.config.experiment == "all":
            kinds = ["transform_matrix", "covariance_compare", "assimilate"]

        handlers = {
            "transform_matrix": self.run_transform_matrix,
            "covariance_compare": self.run_covariance_experiment,
            "assimilate": self.run_assimilation_experiment,
        }

        self.storage.save_json("run_config", self.config.describe())

        reports = {}
        for kind in kinds:
            self.notify("start_experiment", {"experiment": kind, "seed": self.config.seed})
            self.logger.info(f"実験を開始します: {kind}")
            try:
                reports[kind] = handlers[kind]()
            except SpectralEnKFError as e:
                self.logger.error(f"実験 {kind} 中にエラーが発生しました: {e}", exc_info=True)
                self.notify("error", {"experiment": kind, "error": str(e)})
                raise
            self.notify("finish_experiment", {"experiment": kind})
            self.logger.info(f"実験が完了しました: {kind}")

        return reports

    # --- 共通 ---

    def _transform(self, kind, n):
        options = self.config.transforms
        if TransformKind.parse(kind) is TransformKind.WAVELET:
            return make_transform(kind, n, octaves=options.octaves, filter=options.wavelet)
        return make_transform(kind, n)

    def _reference_ensemble(self):
        """参照用の大アンサンブル（小アンサンブルはその先頭メンバー）"""
        if self._reference is None:
            synthetic = self.config.synthetic
            reference_members = self.config.assimilation.reference_members
            if synthetic.members > reference_members:
                raise ConfigurationError(
                    f"アンサンブルのメンバー数 {synthetic.members} が参照アンサンブル {reference_members} を超えています"
                )
            self._reference = make_ensemble(synthetic.with_members(reference_members), workers=self.config.workers)
        return self._reference

    def _small_ensemble(self):
        return self._reference_ensemble().subset(self.config.synthetic.members)

    # --- 変換行列 ---

    def run_transform_matrix(self):
        """
        変換行列を出力する

        Returns:
            dict: 変換の情報
        """
        options = self.config.transforms
        t = self._transform(options.kind, options.n)
        F = t.as_matrix()
        name = f"transform_{t.kind.value}_n{t.size}"

        self.storage.save_matrix(name, F)
        layout = t.octave_layout()
        report = {"transform": t.describe(), "layout": layout}
        self.storage.save_json(f"{name}_layout", report)

        if self.storage.wants("svg"):
            self.storage.save_figure(name, plots.transform_heatmap(F, title=repr(t)))

        return report

    # --- 共分散の比較 ---

    def run_covariance_experiment(self):
        """
        u1 の共分散と (u1, u2) の相互共分散を各手法で推定して比較する

        Returns:
            dict: 推定ごとの比較指標
        """
        reference_ens = self._reference_ensemble()
        ens = self._small_ensemble()
        grid = ens.grid("u1")
        n = grid.n
        N = ens.member_count
        N_ref = reference_ens.member_count
        workers = self.config.workers

        sine = self._transform("sine", n)
        wavelet = self._transform("wavelet", n)

        reference = sample_covariance(reference_ens, "u1")
        estimates = {
            "sample": sample_covariance(ens, "u1"),
            "fft": reconstruct_dense(spectral_diagonal(ens, "u1", sine, workers)),
            "wavelet": reconstruct_dense(spectral_diagonal(ens, "u1", wavelet, workers)),
        }

        self.storage.save_matrix(f"cov_u1_reference_N{N_ref}", reference)
        for label, estimate in estimates.items():
            self.storage.save_matrix(f"cov_u1_{label}_N{N}", estimate)

        # (u1, u2) の相互共分散
        projection = identity_interpolation(grid)
        cross_reference = sample_covariance(reference_ens, "u1", "u2")
        cross_estimates = {
            "sample": sample_covariance(ens, "u1", "u2"),
            "fft": spectral_cross_diagonal(ens, "u1", "u2", projection, sine, workers).to_state_covariance(),
            "wavelet": spectral_cross_diagonal(ens, "u1", "u2", projection, wavelet, workers).to_state_covariance(),
        }

        self.storage.save_matrix(f"cov_u1u2_reference_N{N_ref}", cross_reference)
        for label, estimate in cross_estimates.items():
            self.storage.save_matrix(f"cov_u1u2_{label}_N{N}", estimate)

        report = {
            "seed": self.config.seed,
            "members": N,
            "reference_members": N_ref,
            "reference": covariance_metrics(reference, reference, grid),
            "covariance": {label: covariance_metrics(reference, est, grid) for label, est in estimates.items()},
            "cross_covariance": {
                label: covariance_metrics(cross_reference, est, grid) for label, est in cross_estimates.items()
            },
        }
        self.storage.save_json("covariance_metrics", report)

        for label, metrics in report["covariance"].items():
            self.logger.info(
                f"共分散推定 {label}: Frobenius距離={metrics['frobenius']:.4e}, "
                f"分散最大位置={metrics['diag_argmax']:.3f}, 変動係数={metrics['diag_cv']:.3f}"
            )

        if self.storage.wants("svg"):
            titles = [f"sample N={N_ref}", f"sample N={N}", f"fft N={N}", f"wavelet N={N}"]
            panels = [reference] + list(estimates.values())
            self.storage.save_figure("cov_u1", plots.covariance_heatmaps(panels, titles, title="Cov(u1, u1)"))
            panels = [cross_reference] + list(cross_estimates.values())
            self.storage.save_figure("cov_u1u2", plots.covariance_heatmaps(panels, titles, title="Cov(u1, u2)"))

        return report

    # --- 解析更新の比較 ---

    def _update(self, method, ens, obs, perturbations):
        if method == "classical":
            return classical_update(ens, obs, perturbations=perturbations)

        n = ens.grid("u1").n
        t = self._transform(METHOD_TRANSFORMS[method], n)
        return spectral_update_multi(
            ens,
            obs,
            [t, t],
            cross_mode=self.config.assimilation.cross_mode,
            perturbations=perturbations,
            workers=self.config.workers,
        )

    def _covariance_estimate(self, method, ens):
        if method == "classical":
            return sample_covariance(ens, "u1")
        t = self._transform(METHOD_TRANSFORMS[method], ens.grid("u1").n)
        return reconstruct_dense(spectral_diagonal(ens, "u1", t, self.config.workers))

    def run_assimilation_experiment(self):
        """
        同じアンサンブル・同じ観測・同じ摂動で各手法の解析更新を比較する

        Returns:
            list: 手法ごとの指標
        """
        synthetic = self.config.synthetic
        ens = self._small_ensemble()
        truth, obs = make_truth_and_obs(synthetic)
        truth2 = truth_var2(synthetic, truth)
        x = ens.grid("u1").nodes
        N = ens.member_count

        # 摂動はアンサンブルとは別の乱数列から全手法共通で生成する
        rng = np.random.default_rng([self.config.seed, 1])
        perturbations = perturb_data(obs.data, obs.noise, N, rng,
                                     recenter=self.config.assimilation.recenter_perturbations)

        reference = sample_covariance(self._reference_ensemble(), "u1")

        reports = []
        for method in self.config.methods:
            start = time.perf_counter()
            result = self._update(method, ens, obs, perturbations)
            wall_ms = (time.perf_counter() - start) * 1000.0

            analysis = result.analysis
            metrics = {
                "method": method,
                "rmse_var1": _rmse(analysis.members("u1").mean(axis=1), truth),
                "rmse_var2": _rmse(analysis.members("u2").mean(axis=1), truth2),
                "innovation_norm_mean": float(np.mean(result.innovation_norms)),
                "frobenius_to_reference": float(np.linalg.norm(self._covariance_estimate(method, ens) - reference,
                                                               "fro")),
                "wall_ms": wall_ms,
                "seed": self.config.seed,
            }
            reports.append(metrics)

            self._save_method_outputs(method, ens, analysis, x, obs.data, truth, truth2)
            self.notify("method_done", metrics)
            self.logger.info(
                f"手法 {method}: RMSE(u1)={metrics['rmse_var1']:.4e}, RMSE(u2)={metrics['rmse_var2']:.4e}, "
                f"{wall_ms:.1f}ms"
            )

        self.storage.save_json("assimilation_metrics", reports)
        return reports

    def _save_method_outputs(self, method, forecast, analysis, x, data, truth, truth2):
        N = forecast.member_count
        for var, extra in (("u1", {"data": data, "truth": truth}), ("u2", {"truth": truth2})):
            columns = {"x": x}
            for k in range(N):
                columns[f"forecast_{k + 1}"] = forecast.members(var)[:, k]
            for k in range(N):
                columns[f"analysis_{k + 1}"] = analysis.members(var)[:, k]
            columns.update(extra)
            self.storage.save_curves(f"{method}_{var}", pd.DataFrame(columns))

            if self.storage.wants("svg"):
                figure = plots.ensemble_curves(x, forecast.members(var), analysis.members(var),
                                               extra.get("data"), title=f"{method} {var}")
                self.storage.save_figure(f"{method}_{var}", figure)


def _rmse(estimate, truth):
    return float(np.sqrt(np.mean((np.asarray(estimate) - np.asarray(truth)) ** 2)))
