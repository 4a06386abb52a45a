'''
Shape Instantiation Toolkit - command-line pipeline for predicting a 3D shape from a single 2D contour

Features:
- Synthetic dynamic phantoms with analytic cross-sections
- Sparse PCA informative vertices and the optimal scan plane
- 2D contour model construction by mesh slicing and arc-length resampling
- PLSR (SIMPLS) and Gaussian-kernel PLSR regression from contour to mesh
- Leave-one-out validation studies with JSON, CSV and HTML reports
'''

# Import Packages
import sys
import logging
import argparse

import numpy as np

from commands import register_commands
from tools import __version__
from tools.errors import (
    BoundaryFrameError, ConfigError, DegenerateGeometryError, NoIntersectionError, ParseError,
    PhantomSpecError, RankError, ShapeError, ZeroVarianceError,
)
from tools.regress import REGRESSOR_KINDS

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4

# Exception type -> exit status, most specific first
EXIT_CODES = (
    (ConfigError, EXIT_CONFIG),
    (ParseError, EXIT_DATA),
    (ShapeError, EXIT_DATA),
    (NoIntersectionError, EXIT_DATA),
    (PhantomSpecError, EXIT_DATA),
    (BoundaryFrameError, EXIT_DATA),
    (FileNotFoundError, EXIT_DATA),
    (OSError, EXIT_DATA),
    (RankError, EXIT_NUMERICAL),
    (DegenerateGeometryError, EXIT_NUMERICAL),
    (ZeroVarianceError, EXIT_NUMERICAL),
    (np.linalg.LinAlgError, EXIT_NUMERICAL),
)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def build_parser():
    """Top-level parser with the shared flags and one subparser per command"""
    parser = argparse.ArgumentParser(prog="shape-instantiation",
                                     description="Shape instantiation from 2D contours to 3D meshes")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="-v for INFO, -vv for DEBUG")
    parser.add_argument("--config", help="JSON or YAML pipeline config")
    parser.add_argument("--out", help="output directory (overrides output.directory)")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--regressor", choices=REGRESSOR_KINDS)
    parser.add_argument("--components", help="component count, range '1-8' or list '2,4,6'")
    parser.add_argument("--ratio", help="Gaussian ratio or comma-separated grid")
    parser.add_argument("--numx", type=int, help="contour vertices per frame")
    parser.add_argument("--no-timing", dest="no_timing", action="store_true",
                        help="leave wall-clock timings out of reports")

    subparsers = parser.add_subparsers(dest="command", metavar="command")
    subparsers.required = True
    register_commands(subparsers)
    return parser


def exit_code_for(error):
    for error_type, code in EXIT_CODES:
        if isinstance(error, error_type):
            return code
    return None


def main(argv=None):
    """
    Run one subcommand

    Parameters:
    -----------
    argv : list of str, optional
        Defaults to sys.argv[1:]

    Returns:
    --------
    int : 0 on success, 2 config error, 3 data error, 4 numerical failure
    """
    parser = build_parser()
    args = parser.parse_args(argv)

    level = {0: logging.WARNING, 1: logging.INFO}.get(args.verbose, logging.DEBUG)
    logging.basicConfig(level=level, format=LOG_FORMAT)

    try:
        return args.func(args)
    except Exception as e:
        code = exit_code_for(e)
        if code is None:
            raise
        logger.debug("Command %s failed", args.command, exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
