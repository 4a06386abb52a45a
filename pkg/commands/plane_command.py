"""
Plane command
Finds the informative vertices of a mesh sequence with SPCA and fits the
optimal scan plane through them
"""

import logging

from commands.common import load_meshes, prepare_output, resolve_config, write_report
from data_manager import save_json, write_obj
from tools.errors import ZeroVarianceError
from tools.scanplane import optimal_scan_plane
from tools.spca import pca
from tools.ssm import CENTER_AND_NORMALIZE, center_normalize, flatten
from utils import contribution_colors, create_contribution_figure

logger = logging.getLogger(__name__)


def cmd_plane(args):
    """
    flatten -> center_normalize -> spca -> vertex_contributions -> fit_weighted_plane

    Writes plane.json, contributions.json and contributions.obj (mean shape
    coloured by contribution). A static sequence emits no plane.
    """
    cfg = resolve_config(args)
    seq = load_meshes(cfg)
    spca_cfg = cfg.spca_config()
    try:
        plane, contribution, loadings = optimal_scan_plane(seq, spca_cfg)
    except ZeroVarianceError as e:
        logger.error("SPCA cannot run: %s", e)
        print(f"No plane written: the sequence does not move ({e})")
        raise

    y_norm, _ = center_normalize(flatten(seq), CENTER_AND_NORMALIZE)
    explained = pca(y_norm).explained_variance_ratio
    logger.info("First mode explains %.1f%% of the variance; adjusted sparse variance %s",
                100.0 * explained[0], loadings.adjusted_variance)

    out_dir = prepare_output(cfg)
    save_json(out_dir / "plane.json", plane.to_dict())
    mean_shape = seq.frames.mean(axis=0)
    write_obj(out_dir / "contributions.obj", mean_shape, seq.connectivity,
              contribution_colors(contribution.contributions))
    document = {
        "contribution": contribution.to_dict(),
        "spca": loadings.to_dict(),
        "adjusted_variance": loadings.adjusted_variance,
        "explained_variance_ratio": explained[:loadings.k],
        "n_vertices": seq.n_vertices,
    }
    figure = create_contribution_figure(mean_shape, seq.connectivity, contribution.contributions,
                                        title="SPCA vertex contribution", colorbar_title="contribution")
    write_report(cfg, "contributions", document, figures=[figure], plot_type="Informative vertices")

    print(f"Plane through {contribution.selected.size} informative vertices "
          f"(SPCA {loadings.status} after {loadings.n_iter} iterations)")
    print(f"  origin {plane.origin.round(3).tolist()}  normal {plane.normal.round(4).tolist()}")
    return 0


def register_plane_command(subparsers):
    parser = subparsers.add_parser("plane", help="fit the optimal scan plane of a mesh sequence")
    parser.add_argument("--meshes", help="mesh-sequence manifest (overrides inputs.mesh_manifest)")
    parser.set_defaults(func=cmd_plane)
    return parser
