"""
HTML export utilities for the shape instantiation toolkit
Assembles study figures and run metadata into standalone reports
"""

import html

from tools import __version__

REPORT_STYLE = """
        body {
            font-family: Arial, sans-serif;
            margin: 20px;
            background-color: #fafafa;
        }
        .plot-container {
            margin-bottom: 40px;
            background-color: white;
            border: 1px solid #e0e0e0;
            border-radius: 5px;
            padding: 15px;
        }
        .metadata-header {
            background-color: #f8f9fa;
            border: 1px solid #dee2e6;
            border-radius: 4px;
            padding: 15px;
            margin-bottom: 20px;
        }
        .metadata-table {
            border-collapse: collapse;
        }
        .metadata-table td {
            padding: 5px 15px 5px 0;
        }
        .metadata-table td:first-child {
            font-weight: bold;
        }
"""


def build_metadata(seed, digest, study, **extra):
    """
    Metadata block for a report

    Reports carry the seed and config digest instead of a timestamp, so a rerun
    with the same config reproduces the file byte for byte.
    """
    metadata = {"Tool version": __version__, "Study": study, "Seed": seed, "Config digest": digest}
    metadata.update(extra)
    return metadata


def metadata_html(metadata, plot_type="Report"):
    rows = "\n".join(
        f"            <tr><td>{html.escape(str(key))}:</td><td>{html.escape(str(value))}</td></tr>"
        for key, value in metadata.items()
    )
    return f"""    <div class="metadata-header">
        <h2>Shape instantiation - {html.escape(plot_type)}</h2>
        <table class="metadata-table">
{rows}
        </table>
    </div>
"""


def add_metadata_to_html(html_content, metadata, plot_type="Plot"):
    """
    Insert a metadata block right after the opening body tag

    Args:
        html_content (str): Original HTML content
        metadata (dict): Label -> value pairs
        plot_type (str): Heading of the block

    Returns:
        str: HTML content with metadata added
    """
    if not html_content:
        return html_content
    block = metadata_html(metadata, plot_type)
    body_pos = html_content.find("<body>")
    if body_pos >= 0:
        return html_content[:body_pos + 6] + "\n" + block + html_content[body_pos + 6:]
    return f"<html><head><meta charset='utf-8'></head><body>\n{block}{html_content}</body></html>"


def figures_to_html(figs, metadata, title="Shape instantiation report", plot_type="Study"):
    """
    Combine plotly figures into one standalone HTML document

    Args:
        figs (list): plotly.graph_objects.Figure objects
        metadata (dict): Label -> value pairs shown in the header
        title (str): Title for the HTML page
        plot_type (str): Heading of the metadata block

    Returns:
        str: Complete HTML with all plots and metadata
    """
    plots = []
    for i, fig in enumerate(figs):
        # div ids stay fixed between runs
        div = fig.to_html(full_html=False, include_plotlyjs="cdn" if i == 0 else False,
                          div_id=f"plot-{i}")
        plots.append(f'    <div class="plot-container">\n{div}\n    </div>\n')

    return f"""<!DOCTYPE html>
<html>
<head>
    <meta charset="utf-8" />
    <title>{html.escape(title)}</title>
    <style>{REPORT_STYLE}    </style>
</head>
<body>
{metadata_html(metadata, plot_type)}{"".join(plots)}</body>
</html>
"""
