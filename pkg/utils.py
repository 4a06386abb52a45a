"""
Utility functions for the shape instantiation toolkit
Contains the plotly figure builders used by study reports
"""

import numpy as np
import plotly.colors
import plotly.graph_objects as go
from plotly.subplots import make_subplots

COLORS = plotly.colors.DEFAULT_PLOTLY_COLORS


def remove_duplicated_legends(fig):
    """
    Remove duplicated legends in plotly figure to avoid clutter.

    Parameters:
    -----------
    fig : plotly.graph_objects.Figure
        The figure to modify

    Returns:
    --------
    plotly.graph_objects.Figure
        The modified figure with duplicate legends removed
    """
    names = set()
    fig.for_each_trace(
        lambda trace:
            trace.update(showlegend=False)
            if (trace.name in names)
            else names.add(trace.name)
    )
    return fig


def _common_layout(fig, title, height=450):
    fig.update_layout(
        title=title,
        height=height,
        margin=dict(l=60, r=160, t=60, b=50),
        legend=dict(orientation='v', yanchor='middle', xanchor='left', x=1.02, y=0.5),
        hoverlabel=dict(bgcolor="white", font_size=12, font_family="Arial"),
        template="plotly_white",
    )
    return fig


def create_error_figure(report, title="Leave-one-out error"):
    """
    Per-frame LOOCV error curves against the shape variation baseline

    Parameters:
    -----------
    report : LoocvReport

    Returns:
    --------
    plotly.graph_objects.Figure
        One line per regressor, the interior shape variation dashed, and
        boundary frames shaded
    """
    fig = go.Figure()
    frames = np.arange(report.n_frames)
    for idx, (name, errors) in enumerate(report.per_frame_errors.items()):
        fig.add_trace(go.Scatter(
            x=frames,
            y=errors,
            mode='lines+markers',
            line=dict(color=COLORS[idx % len(COLORS)]),
            name=name,
            hovertemplate=f"<b>{name}</b><br><b>frame:</b> %{{x}}<br>"
                          "<b>error:</b> %{y:.4g} mm<extra></extra>",
        ))
    fig.add_trace(go.Scatter(
        x=frames,
        y=report.shape_variations,
        mode='lines',
        line=dict(color='black', dash='dash'),
        name='shape variation',
        hovertemplate="<b>frame:</b> %{x}<br><b>shape variation:</b> %{y:.4g} mm<extra></extra>",
    ))
    for frame in report.boundary_frames:
        fig.add_vrect(x0=frame - 0.5, x1=frame + 0.5, fillcolor="lightgray", opacity=0.4,
                      layer="below", line_width=0)
    fig.update_xaxes(title_text="Time frame")
    fig.update_yaxes(title_text="Mean distance error (mm)")
    return _common_layout(fig, title)


def create_deviation_figure(grid, title="Scan plane deviation"):
    """Mean +- std LOOCV error for every plane perturbation of a deviation study"""
    labels = list(grid.axes["perturbation"])
    summary = grid.info.get("summary", {})
    means = [summary.get(label, {}).get("mean", np.nan) for label in labels]
    stds = [summary.get(label, {}).get("std", np.nan) for label in labels]
    fig = go.Figure(go.Bar(
        x=labels,
        y=means,
        error_y=dict(type='data', array=stds, visible=True),
        marker_color=COLORS[0],
        name=grid.info.get("regressor", "error"),
        hovertemplate="<b>%{x}</b><br><b>mean error:</b> %{y:.4g} mm<extra></extra>",
    ))
    fig.update_xaxes(title_text="Perturbation (rot x deg, rot y deg, translate z mm)")
    fig.update_yaxes(title_text="Mean distance error (mm)")
    return _common_layout(fig, title)


def create_sweep_figure(grids, title="Error across component counts"):
    """
    Per-frame mean and standard deviation of the error over a component sweep

    Parameters:
    -----------
    grids : list of StudyGrid
        Results of sweep_components, one per regressor kind
    """
    fig = go.Figure()
    for idx, grid in enumerate(grids):
        kind = grid.info.get("kind", grid.name)
        frames = grid.axes["frame"]
        fig.add_trace(go.Scatter(
            x=frames,
            y=[np.nan if v is None else v for v in grid.info["frame_mean"]],
            error_y=dict(type='data', visible=True,
                         array=[np.nan if v is None else v for v in grid.info["frame_std"]]),
            mode='lines+markers',
            line=dict(color=COLORS[idx % len(COLORS)]),
            name=kind,
            hovertemplate=f"<b>{kind}</b><br><b>frame:</b> %{{x}}<br>"
                          "<b>mean error:</b> %{y:.4g} mm<extra></extra>",
        ))
    fig.update_xaxes(title_text="Time frame")
    fig.update_yaxes(title_text="Mean distance error (mm)")
    return _common_layout(fig, title)


def create_registration_figure(grid, title="Rigid transform of the 2D model"):
    """Original versus transformed predictor errors, one subplot per regressor"""
    regressors = list(grid.axes["regressor"])
    variants = list(grid.axes["variant"])
    frames = grid.axes["frame"]
    fig = make_subplots(rows=len(regressors), cols=1, shared_xaxes=True, vertical_spacing=0.08,
                        subplot_titles=regressors)
    for row_idx, name in enumerate(regressors):
        for idx, variant in enumerate(variants):
            fig.append_trace(go.Scatter(
                x=frames,
                y=grid.values[row_idx, idx],
                mode='lines+markers',
                line=dict(color=COLORS[idx % len(COLORS)], dash='solid' if idx == 0 else 'dot'),
                name=variant,
                legendgroup=variant,
                hovertemplate=f"<b>{name} ({variant})</b><br><b>frame:</b> %{{x}}<br>"
                              "<b>error:</b> %{y:.4g} mm<extra></extra>",
            ), row=row_idx + 1, col=1)
        fig.update_yaxes(title_text="Error (mm)", row=row_idx + 1, col=1)
    fig.update_xaxes(title_text="Time frame", row=len(regressors), col=1)
    remove_duplicated_legends(fig)
    return _common_layout(fig, title, height=250 * len(regressors) + 100)


def create_boundary_figure(summary, title="Boundary versus interior frames"):
    """Grouped bars of boundary and interior mean error per regressor"""
    names = list(summary)
    fig = go.Figure()
    for idx, key in enumerate(("boundary_mean", "interior_mean")):
        fig.add_trace(go.Bar(
            x=names,
            y=[summary[name][key] for name in names],
            name=key.replace("_", " "),
            marker_color=COLORS[idx],
            hovertemplate="<b>%{x}</b><br><b>%{fullData.name}:</b> %{y:.4g} mm<extra></extra>",
        ))
    fig.update_layout(barmode='group')
    fig.update_yaxes(title_text="Mean distance error (mm)")
    return _common_layout(fig, title)


def create_informative_figure(results, title="Informative vertex selection"):
    """Mean LOOCV error of the SPCA-placed plane and the thresholded-PCA plane"""
    methods = list(results)
    fig = go.Figure(go.Bar(
        x=methods,
        y=[results[m]["mean_error"] for m in methods],
        text=[f"{results[m]['n_vertices']} vertices" for m in methods],
        marker_color=[COLORS[i % len(COLORS)] for i in range(len(methods))],
        hovertemplate="<b>%{x}</b><br><b>mean error:</b> %{y:.4g} mm<br>%{text}<extra></extra>",
    ))
    fig.update_yaxes(title_text="Mean distance error (mm)")
    return _common_layout(fig, title)


def create_contribution_figure(vertices, faces, values, title="Vertex contribution", colorbar_title="value"):
    """
    Colour a triangle mesh by a per-vertex scalar

    Used for SPCA contributions and for per-vertex LOOCV errors.

    Parameters:
    -----------
    vertices : ndarray (n, 3)
    faces : ndarray (F, 3)
    values : ndarray (n,)
    """
    vertices = np.asarray(vertices, dtype=float)
    faces = np.asarray(faces, dtype=np.int64)
    fig = go.Figure(go.Mesh3d(
        x=vertices[:, 0], y=vertices[:, 1], z=vertices[:, 2],
        i=faces[:, 0], j=faces[:, 1], k=faces[:, 2],
        intensity=np.asarray(values, dtype=float),
        colorscale="Viridis",
        colorbar=dict(title=colorbar_title),
        hovertemplate="<b>x:</b> %{x:.3g}<br><b>y:</b> %{y:.3g}<br><b>z:</b> %{z:.3g}"
                      "<br><b>value:</b> %{intensity:.4g}<extra></extra>",
    ))
    fig.update_layout(scene=dict(aspectmode='data'))
    return _common_layout(fig, title, height=600)


def contribution_colors(values):
    """Map a per-vertex scalar to RGB in [0, 1] on the Viridis scale, for OBJ export"""
    values = np.asarray(values, dtype=float)
    span = values.max() - values.min() if values.size else 0.0
    scaled = (values - values.min()) / span if span > 0 else np.zeros_like(values)
    rgb = plotly.colors.sample_colorscale("Viridis", scaled.tolist(), colortype="tuple")
    return np.clip(np.asarray(rgb, dtype=float).reshape(-1, 3), 0.0, 1.0)
