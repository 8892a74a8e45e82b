import numpy as np
import pytest

from covariance.ensemble import Ensemble, Grid
from covariance.statistics import member_covariance, reconstruct_dense, spectral_cross_diagonal, spectral_diagonal
from covariance.interpolation import build_interpolation, identity_interpolation
from enkf.linalg import ModeBlockDiagonal, innovation_solve
from enkf.noise import NoiseModel, perturb_data, spectral_noise_variance
from enkf.observation import ObservationBlock, ObservationSpec, observe_variable
from enkf.update import CrossMode, classical_update, spectral_update_multi, spectral_update_single
from synthetic.model import SyntheticConfig, make_ensemble, make_truth_and_obs
from transforms.transform import make_transform
from utils.exceptions import (
    DimensionMismatch,
    MissingProjection,
    SingularInnovationMatrix,
    UnsupportedObservation,
)


# --- 摂動 ---

def test_zero_noise_gives_zero_perturbations(rng):
    e = perturb_data(np.ones(4), NoiseModel.scalar_diag(0.0), 6, rng)
    np.testing.assert_array_equal(e, np.zeros((4, 6)))


def test_scalar_noise_variance(rng):
    e = perturb_data(np.zeros(3), NoiseModel.scalar_diag(1.0), 100000, rng)
    assert np.all(np.abs(e.var(axis=1) - 1.0) < 0.02)


def test_diag_noise_variance(rng):
    N = 20000
    r = np.array([1.0, 4.0])
    e = perturb_data(np.zeros(2), NoiseModel.diag(r), N, rng)
    bound = 4 * r * np.sqrt(2.0 / (N - 1))
    assert np.all(np.abs(e.var(axis=1, ddof=1) - r) < bound)


def test_seeded_perturbations_are_nested():
    noise = NoiseModel.scalar_diag(0.5)
    large = perturb_data(np.zeros(5), noise, 12, 7)
    small = perturb_data(np.zeros(5), noise, 4, 7)
    np.testing.assert_array_equal(large[:, :4], small)


def test_recentered_perturbations_have_zero_mean(rng):
    e = perturb_data(np.zeros(5), NoiseModel.scalar_diag(2.0), 8, rng, recenter=True)
    assert np.max(np.abs(e.mean(axis=1))) < 1e-14


def test_diag_noise_in_transform_domain():
    r = np.linspace(1.0, 2.0, 8)
    t = make_transform("sine", 8)
    F = t.as_matrix()
    r_hat = spectral_noise_variance(NoiseModel.diag(r), t)
    np.testing.assert_allclose(r_hat, np.diag(F @ np.diag(r) @ F.T), atol=1e-14)
    np.testing.assert_array_equal(spectral_noise_variance(NoiseModel.scalar_diag(3.0), t), np.full(8, 3.0))


def test_noise_kinds_needing_perturbations(rng):
    assert not NoiseModel.scalar_diag(0.1).needs_perturbations
    assert not NoiseModel.diag([0.1, 0.2]).needs_perturbations
    assert NoiseModel.sample_perturbation(0.1).needs_perturbations
    assert NoiseModel.spectral_diag(0.1).needs_perturbations

    np.testing.assert_array_equal(NoiseModel.diag([0.1, 0.2]).dense(2), np.diag([0.1, 0.2]))
    e = rng.standard_normal((2, 6))
    np.testing.assert_allclose(NoiseModel.sample_perturbation(0.1).dense(2, e), np.cov(e), atol=1e-14)
    with pytest.raises(ValueError):
        NoiseModel.spectral_diag(0.1).dense(2)


def test_negative_variance_rejected():
    with pytest.raises(ValueError):
        NoiseModel.diag([1.0, -1.0])


# --- イノベーション方程式 ---

def test_diagonal_solve(rng):
    a = rng.uniform(0.5, 1.0, 6)
    b = rng.uniform(0.1, 0.2, 6)
    rhs = rng.standard_normal(6)
    x = innovation_solve(a, NoiseModel.diag(b), rhs)
    np.testing.assert_allclose(x, rhs / (a + b), rtol=1e-14)


def test_zero_d_hat_scalar_noise(rng):
    rhs = rng.standard_normal((5, 3))
    x = innovation_solve(np.zeros(5), NoiseModel.scalar_diag(0.25), rhs)
    np.testing.assert_allclose(x, rhs / 0.25, rtol=1e-14)


def test_zero_modes_get_zero_gain():
    x = innovation_solve(np.array([0.0, 2.0]), NoiseModel.scalar_diag(0.0), np.array([1.0, 4.0]))
    np.testing.assert_array_equal(x, [0.0, 2.0])


def test_all_zero_system_with_innovation_is_singular():
    with pytest.raises(SingularInnovationMatrix):
        innovation_solve(np.zeros(3), NoiseModel.scalar_diag(0.0), np.ones(3))
    np.testing.assert_array_equal(innovation_solve(np.zeros(3), NoiseModel.scalar_diag(0.0), np.zeros(3)),
                                  np.zeros(3))


def test_woodbury_matches_dense_solve(rng):
    n, N = 16, 5
    d_hat = rng.uniform(0.1, 2.0, n)
    e_hat = rng.standard_normal((n, N))
    rhs = rng.standard_normal((n, N))
    x = innovation_solve(d_hat, NoiseModel.sample_perturbation(1.0), rhs, perturbations_hat=e_hat)

    dense = np.diag(d_hat) + member_covariance(e_hat)
    np.testing.assert_allclose(x, np.linalg.solve(dense, rhs), atol=1e-8)


def test_spectral_diag_noise_uses_perturbation_variances(rng):
    d_hat = rng.uniform(0.1, 2.0, 8)
    e_hat = rng.standard_normal((8, 6))
    rhs = rng.standard_normal(8)
    x = innovation_solve(d_hat, NoiseModel.spectral_diag(1.0), rhs, perturbations_hat=e_hat)
    np.testing.assert_allclose(x, rhs / (d_hat + e_hat.var(axis=1, ddof=1)), rtol=1e-12)


def _mode_blocks(rng, L=4, b=2):
    blocks = np.empty((L, b, b))
    for l in range(L):
        A = rng.standard_normal((b, b))
        blocks[l] = A @ A.T + b * np.eye(b)
    offsets = np.arange(b) * L
    order = (offsets[None, :] + np.arange(L)[:, None]).reshape(-1)
    return ModeBlockDiagonal(blocks, order)


def test_mode_blocks_solve_matches_dense(rng):
    D = _mode_blocks(rng)
    rhs = rng.standard_normal((8, 3))
    np.testing.assert_allclose(D.to_dense() @ D.solve(rhs), rhs, atol=1e-12)
    np.testing.assert_allclose(D.diagonal(), np.diag(D.to_dense()))


def test_woodbury_with_mode_blocks(rng):
    D = _mode_blocks(rng)
    e_hat = rng.standard_normal((8, 4))
    rhs = rng.standard_normal(8)
    x = innovation_solve(D, NoiseModel.sample_perturbation(1.0), rhs, perturbations_hat=e_hat)
    dense = D.to_dense() + member_covariance(e_hat)
    np.testing.assert_allclose(x, np.linalg.solve(dense, rhs), atol=1e-8)


# --- 通常のEnKF ---

def test_classical_large_noise_leaves_forecast(rng):
    ens = Ensemble.from_arrays([rng.standard_normal((8, 6))])
    obs = observe_variable(0, rng.standard_normal(8), NoiseModel.scalar_diag(1e12))
    result = classical_update(ens, obs, seed=3)
    u, ua = ens.members(0), result.analysis.members(0)
    assert np.linalg.norm(ua - u) / np.linalg.norm(u) < 1e-6


def test_classical_zero_spread_is_exact(rng):
    ens = Ensemble.from_arrays([np.tile(rng.standard_normal((8, 1)), (1, 5))])
    obs = observe_variable(0, rng.standard_normal(8), NoiseModel.scalar_diag(0.1))
    result = classical_update(ens, obs, seed=3)
    np.testing.assert_array_equal(result.analysis.members(0), ens.members(0))


def test_classical_scalar_formula(rng):
    u = rng.standard_normal((1, 5))
    ens = Ensemble.from_arrays([u])
    r = 0.3
    d = np.array([0.7])
    obs = observe_variable(0, d, NoiseModel.scalar_diag(r))
    e = perturb_data(d, obs.noise, 5, rng)

    result = classical_update(ens, obs, perturbations=e)
    q = np.var(u, ddof=1)
    expected = u + q / (q + r) * (d[:, None] + e - u)
    np.testing.assert_allclose(result.analysis.members(0), expected, atol=1e-14)


def test_classical_singular_innovation_matrix():
    ens = Ensemble.from_arrays([np.ones((3, 4))])
    obs = observe_variable(0, np.zeros(3), NoiseModel.scalar_diag(0.0))
    with pytest.raises(SingularInnovationMatrix):
        classical_update(ens, obs, seed=1)


def test_classical_analysis_mean(rng):
    u = rng.standard_normal((1, 8))
    ens = Ensemble.from_arrays([u])
    r = 0.5
    d = np.array([1.2])
    obs = observe_variable(0, d, NoiseModel.scalar_diag(r))

    result = classical_update(ens, obs, seed=11, recenter=True)
    q = np.var(u, ddof=1)
    expected = u.mean() + q / (q + r) * (d[0] - u.mean())
    assert abs(result.analysis.members(0).mean() - expected) < 1e-10


def test_classical_matches_kalman_filter():
    rng = np.random.default_rng(2024)
    N = 10000
    mean = np.array([1.0, -0.5])
    P = np.array([[1.0, 0.6], [0.6, 2.0]])
    members = mean[:, None] + np.linalg.cholesky(P) @ rng.standard_normal((2, N))
    ens = Ensemble.from_arrays([members[:1], members[1:]])

    r = 0.5
    d = np.array([1.5])
    obs = observe_variable("u1", d, NoiseModel.scalar_diag(r))
    e = perturb_data(d, obs.noise, N, rng)
    result = classical_update(ens, obs, perturbations=e)

    gain = P[:, 0] / (P[0, 0] + r)
    posterior = mean + gain * (d[0] - mean[0])
    analysis_mean = np.array([result.analysis.members("u1").mean(), result.analysis.members("u2").mean()])
    assert np.all(np.abs(analysis_mean - posterior) < 3 * np.sqrt(np.diag(P) / N))


# --- 1変数スペクトルEnKF ---

@pytest.mark.parametrize("kind", ["sine", "wavelet"])
def test_spectral_zero_spread_is_exact(kind, rng):
    ens = Ensemble.from_arrays([np.tile(rng.standard_normal((16, 1)), (1, 4))])
    obs = observe_variable(0, rng.standard_normal(16), NoiseModel.scalar_diag(0.1))
    result = spectral_update_single(ens, obs, make_transform(kind, 16), seed=5)
    np.testing.assert_array_equal(result.analysis.members(0), ens.members(0))


@pytest.mark.parametrize("kind", ["sine", "wavelet"])
def test_spectral_large_noise_leaves_forecast(kind, rng):
    ens = Ensemble.from_arrays([rng.standard_normal((16, 6))])
    obs = observe_variable(0, rng.standard_normal(16), NoiseModel.scalar_diag(1e12))
    result = spectral_update_single(ens, obs, make_transform(kind, 16), seed=5)
    u, ua = ens.members(0), result.analysis.members(0)
    assert np.linalg.norm(ua - u) / np.linalg.norm(u) < 1e-6


@pytest.mark.parametrize("kind", ["identity", "sine"])
def test_single_node_matches_classical(kind, rng):
    ens = Ensemble.from_arrays([rng.standard_normal((1, 6))])
    obs = observe_variable(0, np.array([0.4]), NoiseModel.scalar_diag(0.2))
    e = perturb_data(obs.data, obs.noise, 6, rng)
    classical = classical_update(ens, obs, perturbations=e)
    spectral = spectral_update_single(ens, obs, make_transform(kind, 1), perturbations=e)
    np.testing.assert_allclose(spectral.analysis.members(0), classical.analysis.members(0), atol=1e-14)


@pytest.mark.parametrize("kind", ["sine", "wavelet"])
def test_gain_factors_are_bounded(kind, rng):
    ens = Ensemble.from_arrays([rng.standard_normal((32, 8))])
    obs = observe_variable(0, np.zeros(32), NoiseModel.diag(rng.uniform(0.01, 0.1, 32)))
    result = spectral_update_single(ens, obs, make_transform(kind, 32), seed=2)
    assert np.all(result.gain_factors >= 0.0)
    assert np.all(result.gain_factors < 1.0)


def test_spectral_single_rejects_multiple_variables(random_ensemble):
    obs = observe_variable("u1", np.zeros(16), NoiseModel.scalar_diag(0.1))
    with pytest.raises(UnsupportedObservation):
        spectral_update_single(random_ensemble, obs, make_transform("sine", 16), seed=1)


def test_spectral_single_checks_transform_size(rng):
    ens = Ensemble.from_arrays([rng.standard_normal((16, 4))])
    obs = observe_variable(0, np.zeros(16), NoiseModel.scalar_diag(0.1))
    with pytest.raises(DimensionMismatch):
        spectral_update_single(ens, obs, make_transform("sine", 8), seed=1)


# --- 多変数スペクトルEnKF ---

@pytest.mark.parametrize("noise", [NoiseModel.scalar_diag(0.1), NoiseModel.diag(np.linspace(0.05, 0.2, 16))])
def test_identity_full_covariance_matches_classical(noise):
    rng = np.random.default_rng(99)
    identity = make_transform("identity", 16)
    for _ in range(20):
        ens = Ensemble.from_arrays([rng.standard_normal((16, 5)), rng.standard_normal((16, 5))])
        obs = observe_variable("u1", rng.standard_normal(16), noise)
        e = perturb_data(obs.data, noise, 5, rng)

        classical = classical_update(ens, obs, perturbations=e)
        spectral = spectral_update_multi(ens, obs, [identity, identity], cross_mode=CrossMode.SAMPLE_COVARIANCE,
                                         full_innovation_covariance=True, perturbations=e)
        np.testing.assert_allclose(spectral.analysis.stacked(), classical.analysis.stacked(), atol=1e-10)


@pytest.mark.parametrize("kind", ["sine", "wavelet"])
def test_multi_matches_dense_reconstruction(kind, rng):
    n, N, r = 8, 4, 0.05
    u1 = rng.standard_normal((n, N))
    ens = Ensemble.from_arrays([u1, 0.3 * u1])
    obs = observe_variable("u1", rng.standard_normal(n), NoiseModel.scalar_diag(r))
    e = perturb_data(obs.data, obs.noise, N, rng)
    t = make_transform(kind, n)

    result = spectral_update_multi(ens, obs, [t, t], perturbations=e)

    proj = identity_interpolation(Grid(n))
    C11 = reconstruct_dense(spectral_diagonal(ens, "u1", t))
    C21 = spectral_cross_diagonal(ens, "u1", "u2", proj, t).to_state_covariance()
    W = np.linalg.solve(C11 + r * np.eye(n), obs.data[:, None] + e - u1)
    np.testing.assert_allclose(result.analysis.members("u1"), u1 + C11 @ W, atol=1e-10)
    np.testing.assert_allclose(result.analysis.members("u2"), 0.3 * u1 + C21.T @ W, atol=1e-10)


def test_unobserved_variable_without_correlation_is_unchanged(rng):
    u2 = np.tile(rng.standard_normal((16, 1)), (1, 5))
    ens = Ensemble.from_arrays([rng.standard_normal((16, 5)), u2])
    obs = observe_variable("u1", rng.standard_normal(16), NoiseModel.scalar_diag(0.1))
    t = make_transform("wavelet", 16)
    result = spectral_update_multi(ens, obs, [t, t], seed=4)
    np.testing.assert_array_equal(result.analysis.members("u2"), u2)


def test_member_with_zero_innovation_is_unchanged(rng):
    ens = Ensemble.from_arrays([rng.standard_normal((16, 5)), rng.standard_normal((16, 5))])
    obs = observe_variable("u1", ens.members("u1")[:, 2], NoiseModel.scalar_diag(0.1))
    e = perturb_data(obs.data, obs.noise, 5, rng)
    e[:, 2] = 0.0
    t = make_transform("sine", 16)
    result = spectral_update_multi(ens, obs, [t, t], perturbations=e)
    np.testing.assert_allclose(result.analysis.stacked()[:, 2], ens.stacked()[:, 2], atol=1e-10)


def test_two_observed_blocks_match_dense_mode_system(rng):
    n, N, r = 8, 6, 0.1
    ens = Ensemble.from_arrays([rng.standard_normal((n, N)), rng.standard_normal((n, N))])
    data = rng.standard_normal(2 * n)
    obs = ObservationSpec((ObservationBlock("u1"), ObservationBlock("u2")), data, NoiseModel.scalar_diag(r))
    e = perturb_data(data, obs.noise, N, rng)
    t = make_transform("wavelet", n)

    result = spectral_update_multi(ens, obs, [t, t], perturbations=e)

    # 各ブロックを F^T Diag F で組み立てた密行列で同じ近似を再現する
    F = t.as_matrix()
    hats = [F @ ens.members(v) for v in ("u1", "u2")]
    anomalies = [h - h.mean(axis=1, keepdims=True) for h in hats]
    C = np.zeros((2 * n, 2 * n))
    for i in range(2):
        for j in range(2):
            diag = np.sum(anomalies[i] * anomalies[j], axis=1) / (N - 1)
            C[i * n:(i + 1) * n, j * n:(j + 1) * n] = F.T @ (diag[:, None] * F)
    W = np.linalg.solve(C + r * np.eye(2 * n), data[:, None] + e - ens.stacked())
    np.testing.assert_allclose(result.analysis.stacked(), ens.stacked() + C @ W, atol=1e-10)


@pytest.mark.parametrize("kind", ["sine", "wavelet"])
def test_observation_on_finer_grid_matches_dense(kind, rng):
    n, m, N, r = 16, 32, 6, 0.05
    u1 = rng.standard_normal((n, N))
    u2 = rng.standard_normal((n, N))
    ens = Ensemble.from_arrays([u1, u2])
    P = build_interpolation(Grid(n), Grid(m))
    data = rng.standard_normal(m)
    obs = ObservationSpec((ObservationBlock("u1", P),), data, NoiseModel.scalar_diag(r))
    e = perturb_data(data, obs.noise, N, rng)
    t = make_transform(kind, n)

    explicit = spectral_update_multi(ens, obs, [t, t], projections={(1, 0): P}, perturbations=e)
    # u2 は u1 と同じ格子なので、観測ブロックの射影がそのまま使われる
    implicit = spectral_update_multi(ens, obs, [t, t], perturbations=e)

    # 観測格子 (m=32) の変換で P u を対角化した密行列で同じ近似を再現する
    F = make_transform(kind, m, octaves=4).as_matrix()
    hats = [F @ P.matrix @ u for u in (u1, u2)]
    anomalies = [h - h.mean(axis=1, keepdims=True) for h in hats]
    diag11 = np.sum(anomalies[0] * anomalies[0], axis=1) / (N - 1)
    diag21 = np.sum(anomalies[1] * anomalies[0], axis=1) / (N - 1)
    C11 = F.T @ (diag11[:, None] * F)
    C21 = F.T @ (diag21[:, None] * F)
    W = np.linalg.solve(C11 + r * np.eye(m), data[:, None] + e - P.matrix @ u1)

    for result in (explicit, implicit):
        np.testing.assert_allclose(result.analysis.members("u1"), u1 + P.left_inverse @ C11 @ W, atol=1e-10)
        np.testing.assert_allclose(result.analysis.members("u2"), u2 + P.left_inverse @ C21 @ W, atol=1e-10)
    np.testing.assert_array_equal(explicit.analysis.stacked(), implicit.analysis.stacked())


def test_missing_projection_between_grids(rng):
    ens = Ensemble.from_arrays([rng.standard_normal((16, 4)), rng.standard_normal((8, 4))])
    obs = observe_variable("u2", np.zeros(8), NoiseModel.scalar_diag(0.1))
    transforms = [make_transform("sine", 16), make_transform("sine", 8)]
    with pytest.raises(MissingProjection):
        spectral_update_multi(ens, obs, transforms, seed=1)


def test_multi_sample_perturbation_noise_runs(rng):
    ens = Ensemble.from_arrays([rng.standard_normal((16, 6)), rng.standard_normal((16, 6))])
    obs = observe_variable("u1", rng.standard_normal(16), NoiseModel.sample_perturbation(0.1))
    t = make_transform("wavelet", 16)
    result = spectral_update_multi(ens, obs, [t, t], seed=8)
    assert result.gain_factors is None
    assert np.all(np.isfinite(result.analysis.stacked()))


def test_multi_is_independent_of_workers():
    cfg = SyntheticConfig(n=64, members=10, seed=3)
    ens = make_ensemble(cfg)
    _, obs = make_truth_and_obs(cfg)
    t = make_transform("wavelet", 64)
    serial = spectral_update_multi(ens, obs, [t, t], seed=1, workers=1)
    threaded = spectral_update_multi(ens, obs, [t, t], seed=1, workers=4)
    np.testing.assert_array_equal(serial.analysis.stacked(), threaded.analysis.stacked())
    np.testing.assert_array_equal(serial.innovation_norms, threaded.innovation_norms)


def test_wavelet_enkf_improves_on_classical():
    wavelet_rmse = []
    classical_rmse = []
    t = make_transform("wavelet", 128)
    for seed in range(20):
        cfg = SyntheticConfig(n=128, members=10, seed=seed)
        ens = make_ensemble(cfg)
        truth, obs = make_truth_and_obs(cfg)
        e = perturb_data(obs.data, obs.noise, 10, np.random.default_rng([seed, 1]))

        classical = classical_update(ens, obs, perturbations=e)
        wavelet = spectral_update_multi(ens, obs, [t, t], perturbations=e)
        classical_rmse.append(_rmse(classical.analysis.members("u1").mean(axis=1), truth))
        wavelet_rmse.append(_rmse(wavelet.analysis.members("u1").mean(axis=1), truth))

    assert np.median(wavelet_rmse) <= np.median(classical_rmse)


def _rmse(estimate, truth):
    return np.sqrt(np.mean((estimate - truth) ** 2))
