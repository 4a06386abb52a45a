"""
Phantom command
Writes a synthetic corresponded mesh sequence and its manifest
"""

import logging

from commands.common import prepare_output, resolve_config
from data_manager import save_mesh_sequence
from tools.phantom import BASE_SHAPES, CYCLES, DEFORMATIONS, generate

logger = logging.getLogger(__name__)


def cmd_phantom(args):
    cfg = resolve_config(args)
    section = cfg.raw["phantom"]
    for key in ("base_shape", "deformation", "cycle", "n_frames", "n_vertices", "amplitude"):
        value = getattr(args, key, None)
        if value is not None:
            section[key] = value
    spec = cfg.phantom_spec()
    seq = generate(spec)
    out_dir = prepare_output(cfg) / "meshes"
    manifest = save_mesh_sequence(seq, out_dir)
    print(f"Wrote {seq.n_frames} frames of {seq.n_vertices} vertices to {manifest}")
    return 0


def register_phantom_command(subparsers):
    parser = subparsers.add_parser("phantom", help="generate a synthetic dynamic phantom")
    parser.add_argument("--base-shape", dest="base_shape", choices=BASE_SHAPES)
    parser.add_argument("--deformation", choices=DEFORMATIONS)
    parser.add_argument("--cycle", choices=CYCLES)
    parser.add_argument("--frames", dest="n_frames", type=int)
    parser.add_argument("--vertices", dest="n_vertices", type=int)
    parser.add_argument("--amplitude", type=float, help="peak displacement in mm")
    parser.set_defaults(func=cmd_phantom)
    return parser
