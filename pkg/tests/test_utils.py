import numpy as np
import plotly.graph_objects as go
import pytest

from tools.regress import KPLSR, PLSR
from tools.validate import LoocvReport, StudyGrid
from utils import (
    contribution_colors, create_boundary_figure, create_contribution_figure, create_deviation_figure,
    create_error_figure, create_informative_figure, create_registration_figure, create_sweep_figure,
    remove_duplicated_legends,
)


@pytest.fixture
def report():
    return LoocvReport(
        per_frame_errors={PLSR: np.array([1.0, 0.8, 0.6, 0.7, np.nan, 1.1]),
                          KPLSR: np.array([0.9, 0.5, 0.4, 0.4, 0.5, 1.0])},
        shape_variations=np.array([np.nan, 2.0, 2.5, 2.4, 2.1, np.nan]),
        one_sided_variations={0: 1.0, 5: 1.2},
        config_used={},
        boundary_frames=(0, 5),
    )


def test_remove_duplicated_legends():
    fig = go.Figure([go.Scatter(y=[1], name="a"), go.Scatter(y=[2], name="a"), go.Scatter(y=[3], name="b")])
    remove_duplicated_legends(fig)
    assert [trace.showlegend for trace in fig.data] == [None, False, None]


def test_error_figure(report):
    fig = create_error_figure(report)
    assert [trace.name for trace in fig.data] == [PLSR, KPLSR, "shape variation"]
    assert fig.data[2].line.dash == "dash"
    assert len(fig.layout.shapes) == 2


def test_deviation_figure():
    grid = StudyGrid(
        name="plane-deviation",
        axes={"perturbation": ["(0,0,0)", "(0,0,500)"], "frame": [0, 1, 2]},
        values=np.array([[1.0, 2.0, 3.0], [np.nan] * 3]),
        info={"summary": {"(0,0,0)": {"mean": 2.0, "std": 0.8}}, "regressor": PLSR},
    )
    fig = create_deviation_figure(grid)
    assert list(fig.data[0].x) == ["(0,0,0)", "(0,0,500)"]
    assert fig.data[0].y[0] == 2.0
    assert np.isnan(fig.data[0].y[1])


def test_sweep_figure_maps_missing_to_nan():
    grid = StudyGrid(
        name="components-plsr",
        axes={"n_components": [1, 2], "frame": [0, 1]},
        values=np.array([[1.0, np.nan], [2.0, np.nan]]),
        info={"kind": PLSR, "frame_mean": [1.5, None], "frame_std": [0.5, None]},
    )
    fig = create_sweep_figure([grid])
    assert fig.data[0].name == PLSR
    assert np.isnan(fig.data[0].y[1])


def test_registration_figure_has_one_row_per_regressor():
    grid = StudyGrid(
        name="registration",
        axes={"regressor": [PLSR, KPLSR], "variant": ["original", "transformed"], "frame": [0, 1, 2]},
        values=np.arange(12, dtype=float).reshape(2, 2, 3),
    )
    fig = create_registration_figure(grid)
    assert len(fig.data) == 4
    assert [trace.showlegend for trace in fig.data].count(False) == 2
    assert fig.layout.height == 600


def test_boundary_and_informative_figures():
    summary = {PLSR: {"boundary_mean": 2.0, "interior_mean": 1.0}, KPLSR: {"boundary_mean": 1.5,
                                                                            "interior_mean": 0.5}}
    fig = create_boundary_figure(summary)
    assert [trace.name for trace in fig.data] == ["boundary mean", "interior mean"]
    assert fig.layout.barmode == "group"

    results = {"spca": {"mean_error": 0.4, "n_vertices": 12}, "thresholded-pca": {"mean_error": 0.6,
                                                                                  "n_vertices": 12}}
    fig = create_informative_figure(results)
    assert list(fig.data[0].text) == ["12 vertices", "12 vertices"]


def test_contribution_figure(unit_cube):
    vertices, faces = unit_cube
    fig = create_contribution_figure(vertices, faces, np.arange(8.0))
    assert isinstance(fig.data[0], go.Mesh3d)
    assert len(fig.data[0].i) == 12
    assert fig.layout.scene.aspectmode == "data"


class TestContributionColors:
    def test_range_and_shape(self):
        colors = contribution_colors(np.array([0.0, 0.5, 2.0]))
        assert colors.shape == (3, 3)
        assert colors.min() >= 0.0 and colors.max() <= 1.0
        assert not np.allclose(colors[0], colors[2])

    def test_constant_values(self):
        colors = contribution_colors(np.ones(4))
        np.testing.assert_allclose(colors, np.repeat(colors[:1], 4, axis=0))
