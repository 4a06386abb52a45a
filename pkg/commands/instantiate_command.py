"""
Instantiate command
Predicts one 3D mesh from one 2D contour with a fitted model
"""

import time
import logging
from pathlib import Path

import numpy as np

from commands.common import prepare_output, resolve_config
from data_manager import load_model, read_contour_csv, write_obj
from tools.errors import ShapeError
from tools.regress import predict

logger = logging.getLogger(__name__)


def instantiate(model, extra, contour):
    """
    Predict mesh vertices from one contour

    Parameters:
    -----------
    model : PlsModel or KplsrModel
    extra : dict
        Model metadata written by the fit command ('numx', 'n_vertices')
    contour : ndarray (numX, 2)

    Returns:
    --------
    tuple : (vertices ndarray (n, 3), prediction time in ms)
    """
    contour = np.asarray(contour, dtype=float)
    numx = int(extra.get("numx", model.n_features // 2))
    if contour.shape != (numx, 2):
        raise ShapeError(f"contour has {contour.shape[0]} vertices, the model was trained with numX={numx}")
    start = time.perf_counter()
    prediction = predict(model, contour.reshape(-1))
    elapsed_ms = 1000.0 * (time.perf_counter() - start)
    return prediction.reshape(-1, 3), elapsed_ms


def cmd_instantiate(args):
    cfg = resolve_config(args)
    model, extra = load_model(cfg.require_path("model"))
    contour = read_contour_csv(args.contour)
    vertices, elapsed_ms = instantiate(model, extra, contour)
    faces = np.asarray(extra.get("connectivity", []), dtype=np.int64).reshape(-1, 3)

    out_dir = prepare_output(cfg)
    path = write_obj(out_dir / f"{Path(args.contour).stem}_instantiated.obj", vertices, faces)
    logger.info("Prediction took %.3f ms", elapsed_ms)
    print(f"Wrote {len(vertices)} vertices to {path}")
    if cfg.timing:
        print(f"  prediction time {elapsed_ms:.3f} ms")
    return 0


def register_instantiate_command(subparsers):
    parser = subparsers.add_parser("instantiate", help="predict a 3D mesh from one contour CSV")
    parser.add_argument("contour", help="contour CSV with numX 'x,y' rows")
    parser.add_argument("--model", help="model JSON written by the fit command (overrides inputs.model)")
    parser.set_defaults(func=cmd_instantiate)
    return parser
