#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
スペクトルEnKF解析システム - 図の作成（plotly）
"""

import numpy as np
import plotly.graph_objects as go
from plotly.subplots import make_subplots


def symmetric_scale(matrix):
    """色の範囲 [-v, v]（v は最大絶対値、0 の場合は 1）"""
    value = float(np.max(np.abs(matrix))) if np.size(matrix) else 0.0
    return value if value > 0 else 1.0


def covariance_heatmaps(panels, titles, scale=None, title=None):
    """
    共分散行列を同じ対称カラースケールで並べる

    Args:
        panels (list): n×n 行列のリスト
        titles (list): 各パネルの見出し
        scale (float): 色の範囲（省略時は最初のパネルの最大絶対値）
        title (str): 図の見出し

    Returns:
        plotly.graph_objects.Figure: 図
    """
    if scale is None:
        scale = symmetric_scale(panels[0])

    cols = min(len(panels), 2)
    rows = int(np.ceil(len(panels) / cols))
    figure = make_subplots(rows=rows, cols=cols, subplot_titles=list(titles))

    for i, matrix in enumerate(panels):
        figure.add_trace(
            go.Heatmap(
                z=np.asarray(matrix),
                zmin=-scale,
                zmax=scale,
                colorscale="RdBu_r",
                showscale=(i == 0),
            ),
            row=i // cols + 1,
            col=i % cols + 1,
        )

    figure.update_yaxes(autorange="reversed")
    figure.update_layout(title=title, width=450 * cols, height=420 * rows)
    return figure


def transform_heatmap(matrix, title=None):
    """変換行列の各成分の大きさ"""
    figure = go.Figure(go.Heatmap(z=np.abs(matrix), colorscale="Greys", zmin=0.0))
    figure.update_yaxes(autorange="reversed")
    figure.update_layout(title=title, width=520, height=500)
    return figure


def ensemble_curves(x, forecast, analysis, data, title=None):
    """
    予報・解析メンバーと観測の曲線

    Args:
        x (numpy.ndarray): 格子座標
        forecast (numpy.ndarray): n×N 予報メンバー
        analysis (numpy.ndarray): n×N 解析メンバー
        data (numpy.ndarray): 観測（None の場合は描画しない）
        title (str): 見出し

    Returns:
        plotly.graph_objects.Figure: 図
    """
    figure = go.Figure()
    for k in range(forecast.shape[1]):
        figure.add_trace(go.Scatter(x=x, y=forecast[:, k], mode="lines", line=dict(color="lightgray", width=1),
                                    name="forecast", legendgroup="forecast", showlegend=(k == 0)))
    for k in range(analysis.shape[1]):
        figure.add_trace(go.Scatter(x=x, y=analysis[:, k], mode="lines", line=dict(color="steelblue", width=1),
                                    name="analysis", legendgroup="analysis", showlegend=(k == 0)))
    if data is not None:
        figure.add_trace(go.Scatter(x=x, y=data, mode="lines", line=dict(color="black", width=2, dash="dash"),
                                    name="data"))
    figure.update_layout(title=title, xaxis_title="x", width=700, height=420)
    return figure
