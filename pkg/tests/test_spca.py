"""
Tests for PCA, the elastic-net subproblem and sparse PCA
"""

import numpy as np
import pytest
from scipy import linalg
from sklearn.linear_model import lars_path_gram

from tools.errors import ConfigError, ShapeError, ZeroVarianceError
from tools.phantom import PhantomSpec, band_weight, fibonacci_sphere, generate
from tools.scanplane import optimal_scan_plane
from tools.spca import (
    FactoredGram, SpcaConfig, elastic_net, pca, spca, thresholded_pca_contributions, vertex_contributions,
)
from tools.ssm import center_normalize


def _normalized(rng, n=15, d=9):
    values, _ = center_normalize(rng.normal(size=(n, d)))
    return values


def two_block(seed, n=40, block=6):
    """First block driven by one latent factor with small noise, second block pure noise"""
    rng = np.random.default_rng(seed)
    factor = rng.normal(size=(n, 1))
    dominant = 3.0 * factor + 0.1 * rng.normal(size=(n, block))
    noise = 1.0 * rng.normal(size=(n, block))
    values, _ = center_normalize(np.hstack([dominant, noise]))
    return values


class TestPca:
    def test_sign_rule_and_reconstruction(self):
        values = _normalized(np.random.default_rng(0))
        result = pca(values)
        np.testing.assert_allclose(result.components @ result.loadings.T, values, atol=1e-10)
        pivots = result.loadings[np.argmax(np.abs(result.loadings), axis=0), np.arange(result.loadings.shape[1])]
        assert np.all(pivots > 0)
        assert np.all(np.diff(result.singular_values) <= 0)

    def test_explained_variance(self):
        result = pca(_normalized(np.random.default_rng(1)))
        assert result.explained_variance_ratio.sum() == pytest.approx(1.0)


class TestElasticNet:
    def test_zero_penalty_is_ridge(self):
        values = _normalized(np.random.default_rng(2))
        gram = values.T @ values
        alpha = pca(values).loadings[:, 0]
        beta = elastic_net(gram, alpha, 1e-4, l1_penalty=0.0)
        expected = linalg.solve(gram + 1e-4 * np.eye(gram.shape[0]), gram @ alpha)
        np.testing.assert_allclose(beta, expected, rtol=1e-8, atol=1e-10)

    def test_nonzero_target(self):
        values = _normalized(np.random.default_rng(3), n=20, d=12)
        gram = values.T @ values
        alpha = pca(values).loadings[:, 0]
        for target in (1, 3, 5):
            beta = elastic_net(gram, alpha, 1e-4, nonzero_target=target)
            assert 1 <= np.count_nonzero(beta) <= target

    def test_large_penalty_gives_zero(self):
        values = _normalized(np.random.default_rng(4))
        gram = values.T @ values
        beta = elastic_net(gram, pca(values).loadings[:, 0], 1e-4, l1_penalty=1e6)
        assert not np.any(beta)

    def test_requires_symmetric_gram(self):
        with pytest.raises(ShapeError, match="symmetric"):
            elastic_net(np.array([[1.0, 2.0], [0.0, 1.0]]), np.ones(2), l1_penalty=0.1)

    def test_exactly_one_sparsity_setting(self):
        with pytest.raises(ConfigError):
            elastic_net(np.eye(2), np.ones(2))

    def test_beats_every_point_of_a_dense_grid(self):
        rng = np.random.default_rng(6)
        values = _normalized(rng, n=10, d=4)
        gram = values.T @ values
        alpha = rng.normal(size=4)
        alpha /= np.linalg.norm(alpha)
        l1 = float(np.abs(gram @ alpha).max())
        beta = elastic_net(gram, alpha, 1e-4, l1_penalty=l1)
        assert np.any(beta)

        def objective(b):
            diff = alpha - b
            return (np.einsum("ij,jk,ik->i", diff, gram, diff)
                    + 1e-4 * np.sum(b ** 2, axis=1) + l1 * np.abs(b).sum(axis=1))

        offsets = np.linspace(-0.5, 0.5, 21)
        grid = beta + np.stack(np.meshgrid(*[offsets] * 4, indexing="ij"), axis=-1).reshape(-1, 4)
        assert objective(beta[None, :])[0] <= objective(grid).min() + 1e-10

    def test_support_grows_as_penalty_decreases(self):
        # non-positive off-diagonals keep every coefficient path monotone
        gram = np.array([
            [3.0, -0.5, -0.2, -0.1],
            [-0.5, 2.5, -0.3, -0.2],
            [-0.2, -0.3, 2.0, -0.4],
            [-0.1, -0.2, -0.4, 1.5],
        ])
        alpha = linalg.solve(gram, [1.0, 0.8, 0.6, 0.4])
        supports = [set(np.flatnonzero(elastic_net(gram, alpha, 1e-4, l1_penalty=l1)).tolist())
                    for l1 in np.geomspace(2.5, 1e-3, 40)]
        assert supports[0] == set()
        assert supports[-1] == {0, 1, 2, 3}
        for larger, smaller in zip(supports, supports[1:]):
            assert larger <= smaller

    def test_target_counts_groups(self):
        values = _normalized(np.random.default_rng(10), n=12, d=30)
        gram = values.T @ values
        beta = elastic_net(gram, pca(values).loadings[:, 0], 1e-4, nonzero_target=4, group_size=3)
        assert np.unique(np.flatnonzero(beta) // 3).size == 4
        with pytest.raises(ShapeError, match="groups of 4"):
            elastic_net(gram, np.ones(30), 1e-4, nonzero_target=2, group_size=4)

    def test_factored_gram_matches_full_path(self):
        values = _normalized(np.random.default_rng(9), n=10, d=240)
        base = pca(values)
        gram = values.T @ values
        shifted = gram + 1e-4 * np.eye(240)
        alpha = base.loadings[:, 0]
        xy = gram @ alpha
        factored = FactoredGram.from_pca(base)

        l1 = 0.5 * float(np.abs(xy).max())
        _, _, coefs = lars_path_gram(Xy=xy, Gram=shifted, n_samples=1, alpha_min=l1 / 2.0,
                                     method="lasso", max_iter=2000)
        for operator in (gram, factored):
            np.testing.assert_allclose(elastic_net(operator, alpha, 1e-4, l1_penalty=l1), coefs[:, -1],
                                       atol=1e-8)

        _, _, coefs = lars_path_gram(Xy=xy, Gram=shifted, n_samples=1, alpha_min=0.0,
                                     method="lasso", max_iter=2000)
        stop = np.flatnonzero(np.count_nonzero(coefs, axis=0) > 20)[0] - 1
        for operator in (gram, factored):
            np.testing.assert_allclose(elastic_net(operator, alpha, 1e-4, nonzero_target=20), coefs[:, stop],
                                       atol=1e-8)

    def test_factored_ridge_solution(self):
        values = _normalized(np.random.default_rng(12), n=8, d=30)
        gram = values.T @ values
        alpha = np.random.default_rng(13).normal(size=30)
        expected = linalg.solve(gram + 1e-3 * np.eye(30), gram @ alpha)
        beta = elastic_net(FactoredGram.from_pca(pca(values)), alpha, 1e-3, l1_penalty=0.0)
        np.testing.assert_allclose(beta, expected, rtol=1e-8, atol=1e-10)


class TestSpcaConfig:
    def test_conflicting_settings(self):
        with pytest.raises(ConfigError, match="either"):
            SpcaConfig(l1_penalty=0.1, nonzero_target=4)

    def test_default_count_is_fraction_of_vertices(self):
        # 7.5% of 200 vertices
        assert SpcaConfig().resolve(10, 600) == [15]

    def test_too_many_components(self):
        with pytest.raises(ShapeError, match="exceeds"):
            SpcaConfig(k=5).resolve(4, 30)

    def test_counts_are_vertices(self):
        assert SpcaConfig(coordinates_per_vertex=1).resolve(10, 600) == [45]
        assert SpcaConfig(nonzero_target=50).resolve(10, 600) == [50]
        with pytest.raises(ShapeError, match="vertices of 3"):
            SpcaConfig(nonzero_target=5).resolve(10, 601)
        assert SpcaConfig(l1_penalty=0.2).resolve(10, 601) == [0.2]


class TestSpca:
    @pytest.mark.parametrize("seed", range(20))
    def test_no_penalty_matches_pca(self, seed):
        values = _normalized(np.random.default_rng(seed), n=12, d=8)
        result = spca(values, SpcaConfig(l1_penalty=0.0))
        np.testing.assert_allclose(result.loadings[:, 0], pca(values).loadings[:, 0], atol=1e-6)
        assert result.converged

    def test_two_block_support(self):
        hits = 0
        for seed in range(20):
            result = spca(two_block(seed), SpcaConfig(nonzero_target=4, coordinates_per_vertex=1))
            support = result.support[0]
            hits += bool(support.size) and bool(np.all(support < 6))
        assert hits >= 19

    def test_objective_does_not_increase(self):
        result = spca(two_block(7), SpcaConfig(l1_penalty=0.5))
        history = np.array(result.objective_history)
        assert history.size >= 1
        assert np.all(np.diff(history) <= 1e-8 * abs(history[0]))

    def test_count_mode_objective_does_not_increase(self):
        result = spca(two_block(3), SpcaConfig(nonzero_target=4, coordinates_per_vertex=1))
        history = np.array(result.objective_history)
        assert history.size == result.n_iter
        assert np.all(np.diff(history) <= 1e-8 * abs(history[0]))
        assert result.info["l1_penalty"][0] > 0
        assert 1 <= result.support[0].size <= 4

    def test_single_varying_variable(self):
        values = np.zeros((6, 6))
        values[:, 2] = np.arange(6) - 2.5
        result = spca(values, SpcaConfig(nonzero_target=1, coordinates_per_vertex=1))
        np.testing.assert_allclose(result.loadings[:, 0], np.eye(6)[2], atol=1e-12)
        assert result.converged

    def test_zero_variance(self):
        with pytest.raises(ZeroVarianceError):
            spca(np.zeros((5, 6)), SpcaConfig(nonzero_target=2))

    def test_max_iter_status(self):
        cfg = SpcaConfig(nonzero_target=4, coordinates_per_vertex=1, max_iter=1, tol=1e-300)
        result = spca(two_block(1), cfg)
        assert result.status == "max-iter"
        assert result.n_iter == 1

    def test_adjusted_variance_positive(self):
        result = spca(two_block(2), SpcaConfig(k=2, nonzero_target=4, coordinates_per_vertex=1))
        assert result.adjusted_variance.shape == (2,)
        assert np.all(result.adjusted_variance >= 0)


def test_vertex_contributions():
    beta = np.array([0.0, 0.0, 0.0, 0.5, -0.5, 0.0, 0.0, 0.0, 0.1])
    contribution = vertex_contributions(beta)
    np.testing.assert_allclose(contribution.contributions, [0.0, 1.0, 0.1])
    np.testing.assert_array_equal(contribution.selected, [1, 2])
    with pytest.raises(ShapeError, match="multiple of 3"):
        vertex_contributions(np.ones(4))


def test_thresholded_pca_keeps_requested_count():
    values = _normalized(np.random.default_rng(5), n=10, d=30)
    baseline = thresholded_pca_contributions(pca(values), 4)
    assert baseline.selected.size == 4
    assert np.count_nonzero(baseline.contributions) == 4


def test_banded_phantom_plane_passes_near_band():
    spec = PhantomSpec(n_frames=10, n_vertices=1000, deformation="banded", band_width=0.05)
    seq = generate(spec)
    plane, contribution, _ = optimal_scan_plane(seq)

    weights = band_weight(spec, fibonacci_sphere(spec.n_vertices))
    band = np.flatnonzero(weights > 0)
    assert set(contribution.selected.tolist()) <= set(band.tolist())

    mean_shape = seq.frames.mean(axis=0)
    band_centroid = mean_shape[band].mean(axis=0)
    assert abs(plane.signed_distance(band_centroid)) < 2.0


@pytest.mark.slow
def test_default_plane_selects_five_to_ten_percent_of_vertices():
    seq = generate(PhantomSpec())
    _, contribution, loadings = optimal_scan_plane(seq)
    assert 0.05 * seq.n_vertices <= contribution.selected.size <= 0.10 * seq.n_vertices
    assert loadings.converged
