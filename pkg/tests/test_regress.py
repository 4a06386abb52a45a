"""
Tests for SIMPLS, the Gaussian kernel and kernel PLS
"""

import json
import time

import numpy as np
import pytest
from scipy import linalg

from tools.errors import ConfigError, RankError, ShapeError
from tools.regress import (
    KPLSR, PLSR, KernelConfig, KplsrModel, fit_regressor, gaussian_kernel, kernel_rows, kplsr_fit,
    model_from_dict, model_to_dict, plsr_predict, predict, simpls_fit,
)


def _regression_data(seed=0, n=12, p=5, q=3):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, p))
    y = x @ rng.normal(size=(p, q)) + 0.1 * rng.normal(size=(n, q)) + 2.0
    return x, y


class TestSimpls:
    def test_full_rank_matches_least_squares(self):
        x, y = _regression_data()
        model = simpls_fit(x, y, 5)
        x0, y0 = x - x.mean(axis=0), y - y.mean(axis=0)
        ols, *_ = linalg.lstsq(x0, y0)
        np.testing.assert_allclose(model.coefficients, ols, atol=1e-6)
        np.testing.assert_allclose(plsr_predict(model, x), x0 @ ols + y.mean(axis=0), atol=1e-6)

    def test_scores_orthogonal_and_weights_unit(self):
        x, y = _regression_data(seed=1, n=20, p=8)
        model = simpls_fit(x, y, 4)
        gram = model.scores.T @ model.scores
        off_diagonal = gram - np.diag(np.diag(gram))
        assert np.abs(off_diagonal).max() < 1e-8 * np.abs(gram).max()
        np.testing.assert_allclose(np.linalg.norm(model.weights, axis=0), 1.0)

    def test_too_many_components(self):
        x, y = _regression_data(n=5, p=3)
        with pytest.raises(RankError, match="exceeds") as excinfo:
            simpls_fit(x, y, 5)
        assert excinfo.value.component == 4

    def test_constant_response(self):
        x, _ = _regression_data()
        with pytest.raises(RankError) as excinfo:
            simpls_fit(x, np.ones((12, 2)), 1)
        assert excinfo.value.component == 1

    def test_row_mismatch(self):
        x, y = _regression_data()
        with pytest.raises(ShapeError):
            simpls_fit(x, y[:-1], 2)

    def test_truncate_equals_fresh_fit(self):
        x, y = _regression_data(seed=2, n=15, p=6)
        full = simpls_fit(x, y, 5)
        for m in range(1, 5):
            np.testing.assert_allclose(full.truncate(m).coefficients, simpls_fit(x, y, m).coefficients,
                                       atol=1e-10)
        with pytest.raises(RankError):
            full.truncate(6)

    def test_predict_single_row(self):
        x, y = _regression_data()
        model = simpls_fit(x, y, 3)
        assert plsr_predict(model, x[0]).shape == (3,)
        with pytest.raises(ShapeError, match="model expects 5"):
            plsr_predict(model, np.zeros(4))


class TestGaussianKernel:
    def test_scale_invariant(self):
        rows = np.random.default_rng(3).normal(size=(10, 6))
        kernel, cfg = gaussian_kernel(rows, 0.5)
        scaled, _ = gaussian_kernel(37.0 * rows, 0.5)
        np.testing.assert_allclose(kernel, scaled, atol=1e-12)
        np.testing.assert_allclose(np.diag(kernel), 1.0)
        assert cfg.width > 0

    def test_identical_rows(self):
        kernel, cfg = gaussian_kernel(np.ones((4, 3)), 1.0)
        np.testing.assert_array_equal(kernel, 1.0)
        assert cfg.width == 0.0

    @pytest.mark.parametrize("ratio", [0.0, -1.0, float("nan")])
    def test_invalid_ratio(self, ratio):
        with pytest.raises(ConfigError, match="ratio"):
            KernelConfig(ratio)


class TestKplsr:
    def test_interpolates_training_rows(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=(5, 8))
        y = rng.normal(size=(5, 30))
        model = kplsr_fit(x, y, 4, 0.5)
        np.testing.assert_allclose(predict(model, x), y, atol=1e-6 * np.abs(y).max())

    def test_kernel_rows_use_training_width(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=(6, 4))
        model = kplsr_fit(x, rng.normal(size=(6, 2)), 2, 1.0)
        kernel, _ = gaussian_kernel(x, 1.0)
        np.testing.assert_allclose(kernel_rows(model, x), kernel)
        assert kernel_rows(model, x[2]).shape == (6,)

    def test_conflicting_duplicates_warn(self):
        x = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 0.0], [0.0, 2.0]])
        y = np.array([[0.0], [1.0], [2.0], [3.0]])
        with pytest.warns(RuntimeWarning, match="duplicate"):
            model = kplsr_fit(x, y, 1, 1.0)
        assert model.info["conflicting_duplicates"] == [[1, 2]]

    def test_prediction_latency(self):
        rng = np.random.default_rng(6)
        x = rng.normal(size=(25, 128))
        y = rng.normal(size=(25, 3000))
        model = kplsr_fit(x, y, 5, 1.0)
        contour = rng.normal(size=128)
        best = float("inf")
        for _ in range(5):
            start = time.perf_counter()
            predict(model, contour)
            best = min(best, time.perf_counter() - start)
        assert best < 0.010


class TestModelDocument:
    @pytest.mark.parametrize("kind", [PLSR, KPLSR])
    def test_round_trip_through_json(self, kind):
        x, y = _regression_data(seed=7)
        model = fit_regressor(kind, x, y, 3, ratio=0.8)
        document = json.loads(json.dumps(model_to_dict(model, extra={"numx": 5})))
        assert document["extra"] == {"numx": 5}
        restored = model_from_dict(document)
        assert isinstance(restored, KplsrModel) == (kind == KPLSR)
        np.testing.assert_allclose(predict(restored, x), predict(model, x), atol=1e-10)

    def test_unsupported_version(self):
        x, y = _regression_data()
        document = model_to_dict(simpls_fit(x, y, 2))
        document["version"] = 99
        with pytest.raises(ShapeError, match="version"):
            model_from_dict(document)

    def test_unknown_kind(self):
        x, y = _regression_data()
        with pytest.raises(ConfigError, match="unknown regressor"):
            fit_regressor("svr", x, y, 2)
        document = model_to_dict(simpls_fit(x, y, 2))
        document["kind"] = "svr"
        with pytest.raises(ShapeError, match="unknown model kind"):
            model_from_dict(document)


@pytest.mark.parametrize("seed", range(50))
def test_random_problems_satisfy_simpls_conditions(seed):
    rng = np.random.default_rng(100 + seed)
    n = int(rng.integers(8, 31))
    p = int(rng.integers(2, n))
    q = int(rng.integers(1, 61))
    x, y = rng.normal(size=(n, p)), rng.normal(size=(n, q))
    model = simpls_fit(x, y, p)

    gram = model.scores.T @ model.scores
    off_diagonal = gram - np.diag(np.diag(gram))
    assert np.abs(off_diagonal).max() < 1e-8 * np.abs(gram).max()
    np.testing.assert_allclose(np.linalg.norm(model.weights, axis=0), 1.0)

    ols, *_ = linalg.lstsq(x - x.mean(axis=0), y - y.mean(axis=0))
    assert linalg.norm(model.coefficients - ols) <= 1e-6 * linalg.norm(ols)


class TestKplsrSymmetricLimits:
    """Two-frame and regular-polygon training sets have a constant kernel column mean"""

    @pytest.fixture
    def two_frames(self):
        x = np.array([[0.0, 0.0], [2.0, 0.0]])
        y = np.array([[1.0, 2.0, 3.0], [5.0, -2.0, 0.0]])
        return kplsr_fit(x, y, 1, 0.7), y

    @pytest.fixture
    def hexagon(self):
        angles = np.arange(6) * np.pi / 3
        x = 3.0 * np.column_stack([np.cos(angles), np.sin(angles)]) + [10.0, -4.0]
        y = np.random.default_rng(8).normal(size=(6, 4))
        return kplsr_fit(x, y, 3, 0.5), y

    def test_equidistant_query_predicts_mean_of_two_responses(self, two_frames):
        model, y = two_frames
        np.testing.assert_allclose(predict(model, np.array([1.0, 0.0])), y.mean(axis=0), atol=1e-12)
        np.testing.assert_allclose(predict(model, np.array([1.0, 5.0])), y.mean(axis=0), atol=1e-12)

    def test_far_query_predicts_response_mean(self, two_frames, hexagon):
        for model, y in (two_frames, hexagon):
            far = np.full(2, 1e4)
            np.testing.assert_array_equal(kernel_rows(model, far), 0.0)
            np.testing.assert_allclose(predict(model, far), y.mean(axis=0), atol=1e-10)

    def test_polygon_centre_predicts_response_mean(self, hexagon):
        model, y = hexagon
        np.testing.assert_allclose(predict(model, np.array([10.0, -4.0])), y.mean(axis=0), atol=1e-10)
