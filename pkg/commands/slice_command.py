"""
Slice command
Builds the 2D contour model by cutting every mesh frame with the scan plane
"""

import logging

from commands.common import load_meshes, load_plane, prepare_output, resolve_config
from data_manager import save_contour_sequence
from tools.scanplane import build_contour_sequence, perturb_plane

logger = logging.getLogger(__name__)


def cmd_slice(args):
    cfg = resolve_config(args)
    seq = load_meshes(cfg)
    plane = load_plane(cfg)
    deviation = cfg.perturbation()
    if not deviation.is_identity:
        logger.info("Perturbing the scan plane by %s", deviation.label)
        plane = perturb_plane(plane, deviation)

    contours = build_contour_sequence(seq, plane, cfg.numx, max_workers=cfg.max_workers)
    manifest = save_contour_sequence(contours, prepare_output(cfg) / "contours")
    discarded = sum(contours.info.get("discarded_loops", []))
    print(f"Wrote {contours.n_frames} contours of {cfg.numx} vertices to {manifest}")
    if discarded:
        print(f"  {discarded} secondary loops discarded (largest loop kept per frame)")
    return 0


def register_slice_command(subparsers):
    parser = subparsers.add_parser("slice", help="build the 2D contour model from meshes and a plane")
    parser.add_argument("--meshes", help="mesh-sequence manifest (overrides inputs.mesh_manifest)")
    parser.add_argument("--plane", help="plane JSON written by the plane command (overrides inputs.plane)")
    parser.set_defaults(func=cmd_slice)
    return parser
