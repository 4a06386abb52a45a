"""
Shared helpers for the subcommands: config resolution, input loading and
report writing
"""

import logging

from data_manager import (
    load_contour_sequence, load_json, load_mesh_sequence, save_json, save_table, atomic_write_text,
)
from html_exporter import build_metadata, figures_to_html
from pipeline_config import PipelineConfig, apply_overrides, load_config
from tools import __version__
from tools.phantom import generate
from tools.scanplane import ScanPlane

logger = logging.getLogger(__name__)


def resolve_config(args):
    """Config file (or defaults) with the command-line flags applied on top"""
    config = load_config(getattr(args, "config", None))
    config = apply_overrides(config, args)
    return PipelineConfig(config)


def prepare_output(cfg):
    out_dir = cfg.output_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    return out_dir


def load_meshes(cfg, allow_phantom=False):
    """
    The 3D model from inputs.mesh_manifest

    With allow_phantom, a missing manifest falls back to the phantom section
    of the config, so studies can run from a config alone.
    """
    if cfg.raw["inputs"].get("mesh_manifest") or not allow_phantom:
        return load_mesh_sequence(cfg.require_path("mesh_manifest"), cfg.max_workers)
    spec = cfg.phantom_spec()
    logger.info("No mesh manifest configured, generating a %s phantom", spec.deformation)
    return generate(spec)


def load_contours(cfg):
    return load_contour_sequence(cfg.require_path("contour_manifest"), cfg.max_workers)


def load_plane(cfg):
    return ScanPlane.from_dict(load_json(cfg.require_path("plane")))


def run_metadata(cfg):
    """Reproducibility block stored in every JSON report"""
    return {"tool_version": __version__, "seed": cfg.seed, "config_digest": cfg.digest}


def write_report(cfg, name, document, table=None, figures=None, plot_type=None):
    """
    Write <name>.json, and <name>.csv / <name>.html when a table / figures are given

    Returns:
    --------
    list of Path : written files
    """
    out_dir = prepare_output(cfg)
    document = dict(document)
    document["run"] = run_metadata(cfg)
    written = [save_json(out_dir / f"{name}.json", document)]
    if table is not None:
        written.append(save_table(out_dir / f"{name}.csv", table))
    if figures and cfg.html_report:
        metadata = build_metadata(cfg.seed, cfg.digest, name)
        text = figures_to_html(figures, metadata, title=f"{name} report", plot_type=plot_type or name)
        written.append(atomic_write_text(out_dir / f"{name}.html", text))
    for path in written:
        logger.info("Wrote %s", path)
    return written
