"""
Fit command
Trains a PLSR or KPLSR model on synchronized contour and mesh sequences
"""

import logging

from commands.common import load_contours, load_meshes, prepare_output, resolve_config, run_metadata
from data_manager import save_model
from tools.errors import ShapeError
from tools.regress import fit_regressor
from tools.ssm import flatten
from tools.validate import select_components

logger = logging.getLogger(__name__)


def train(ssm3d, ssm2d, regressor_cfg):
    """
    Fit the configured regressor on every frame

    Without a fixed component count the count (and Gaussian ratio) with the
    lowest LOOCV error is selected first.

    Returns:
    --------
    tuple : (model, settings dict)
    """
    if ssm2d.n_frames != ssm3d.n_frames:
        raise ShapeError(f"sequences are not synchronized: {ssm3d.n_frames} meshes vs {ssm2d.n_frames} contours")
    m, ratio = regressor_cfg.n_components, regressor_cfg.ratio
    settings = {"selected": m is None}
    if m is None:
        m, ratio, score = select_components(ssm3d, ssm2d, regressor_cfg)
        settings["selection_error"] = score
        logger.info("Selected %d components (ratio %s) with LOOCV mean %.4f mm", m, ratio, score)
    model = fit_regressor(regressor_cfg.kind, flatten(ssm2d), flatten(ssm3d), m, ratio)
    settings.update({"kind": regressor_cfg.kind, "n_components": int(m), "ratio": ratio})
    return model, settings


def cmd_fit(args):
    cfg = resolve_config(args)
    ssm3d = load_meshes(cfg)
    ssm2d = load_contours(cfg)
    model, settings = train(ssm3d, ssm2d, cfg.regressor_config())

    extra = dict(settings)
    extra.update({
        "numx": ssm2d.n_vertices,
        "closed": ssm2d.closed,
        "n_vertices": ssm3d.n_vertices,
        "connectivity": ssm3d.connectivity,
        "run": run_metadata(cfg),
    })
    if cfg.timing:
        extra["fit_seconds"] = model.info.get("fit_seconds")
    path = save_model(prepare_output(cfg) / "model.json", model, extra)
    print(f"Fitted {settings['kind']} with {settings['n_components']} components on "
          f"{ssm3d.n_frames} frames; model written to {path}")
    return 0


def register_fit_command(subparsers):
    parser = subparsers.add_parser("fit", help="train a 2D-to-3D regression model")
    parser.add_argument("--meshes", help="mesh-sequence manifest (overrides inputs.mesh_manifest)")
    parser.add_argument("--contours", help="contour-sequence manifest (overrides inputs.contour_manifest)")
    parser.set_defaults(func=cmd_fit)
    return parser
