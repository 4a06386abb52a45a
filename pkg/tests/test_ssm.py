import numpy as np
import pytest

from tools.errors import BoundaryFrameError, ShapeError
from tools.ssm import (
    CENTER_ONLY, ContourSequence2D, NormalizationStats, ShapeSequence3D, VariableLayout,
    center_normalize, flatten, mean_distance_error, one_sided_variation, shape_variation, unflatten,
    vertex_distances,
)


def _line_sequence(n_frames=5):
    """Two vertices sliding along x by one millimetre per frame"""
    frames = [np.array([[t, 0.0, 0.0], [t, 1.0, 0.0]]) for t in range(n_frames)]
    return ShapeSequence3D(frames, np.zeros((0, 3), dtype=int))


class TestSequences:
    def test_frames_are_read_only(self):
        seq = _line_sequence()
        with pytest.raises(ValueError):
            seq.frames[0, 0, 0] = 5.0

    def test_ragged_frames(self):
        with pytest.raises(ShapeError, match="ragged"):
            ShapeSequence3D([np.zeros((3, 3)), np.zeros((4, 3))], [[0, 1, 2]])

    def test_connectivity_out_of_range(self):
        with pytest.raises(ShapeError, match="connectivity"):
            ShapeSequence3D([np.zeros((3, 3))], [[0, 1, 3]])

    def test_contours_need_two_columns(self):
        with pytest.raises(ShapeError):
            ContourSequence2D([np.zeros((4, 3))])

    def test_non_finite(self):
        frame = np.zeros((3, 3))
        frame[1, 1] = np.nan
        with pytest.raises(ShapeError, match="non-finite"):
            ShapeSequence3D([frame], [[0, 1, 2]])


def test_flatten_is_interleaved():
    seq = ShapeSequence3D([np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])], np.zeros((0, 3), dtype=int))
    matrix = flatten(seq)
    np.testing.assert_array_equal(matrix.values, [[1, 2, 3, 4, 5, 6]])
    assert matrix.layout == VariableLayout(2, 3)
    assert matrix.layout.variable(4) == (1, 1)
    np.testing.assert_array_equal(unflatten(matrix)[0], seq.frames[0])


def test_flatten_list_of_contours():
    matrix = flatten([np.zeros((4, 2)), np.ones((4, 2))])
    assert matrix.shape == (2, 8)
    with pytest.raises(ShapeError):
        flatten([np.zeros((4, 2)), np.zeros((4, 3))])


class TestCenterNormalize:
    def test_two_by_two(self):
        values, stats = center_normalize(np.array([[1.0, 3.0], [3.0, 1.0]]))
        expected = 1.0 / np.sqrt(2.0)
        np.testing.assert_allclose(values, [[-expected, expected], [expected, -expected]])
        np.testing.assert_allclose(stats.column_norms, [np.sqrt(2.0), np.sqrt(2.0)])

    def test_constant_column(self):
        values, stats = center_normalize(np.array([[1.0, 7.0], [2.0, 7.0], [4.0, 7.0]]))
        np.testing.assert_array_equal(values[:, 1], 0.0)
        assert stats.column_norms[1] == 0.0
        np.testing.assert_allclose(np.linalg.norm(values[:, 0]), 1.0)

    def test_single_row(self):
        with pytest.raises(ShapeError, match="at least 2 rows"):
            center_normalize(np.ones((1, 3)))

    def test_center_only_keeps_scale(self):
        values, stats = center_normalize(np.array([[0.0, 10.0], [2.0, 30.0]]), CENTER_ONLY)
        np.testing.assert_allclose(values, [[-1.0, -10.0], [1.0, 10.0]])
        np.testing.assert_allclose(stats.invert(values), [[0.0, 10.0], [2.0, 30.0]])

    def test_stats_apply_and_invert(self):
        data = np.random.default_rng(3).normal(size=(6, 4))
        values, stats = center_normalize(data)
        np.testing.assert_allclose(stats.apply(data), values)
        np.testing.assert_allclose(stats.invert(values), data)
        with pytest.raises(ShapeError):
            NormalizationStats(np.zeros(2), np.ones(2)).apply(np.zeros(3))


class TestDistances:
    def test_offset_vertex(self):
        truth = np.zeros((4, 3))
        pred = truth + np.array([3.0, 0.0, 4.0])
        assert mean_distance_error(pred, truth) == pytest.approx(5.0)

    def test_flattened_input(self):
        truth = np.zeros(6)
        pred = np.array([3.0, 0.0, 4.0, 0.0, 0.0, 0.0])
        np.testing.assert_allclose(vertex_distances(pred, truth), [5.0, 0.0])

    def test_mismatch(self):
        with pytest.raises(ShapeError, match="vertex count mismatch"):
            mean_distance_error(np.zeros((3, 3)), np.zeros((4, 3)))


def test_shape_variation_interior_and_boundary():
    seq = _line_sequence(5)
    assert shape_variation(seq, 2) == pytest.approx(2.0)
    assert one_sided_variation(seq, 0) == pytest.approx(1.0)
    assert one_sided_variation(seq, 4) == pytest.approx(1.0)
    for t in (0, 4):
        with pytest.raises(BoundaryFrameError, match="interior frames"):
            shape_variation(seq, t)
