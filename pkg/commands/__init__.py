"""
Commands Package for the shape instantiation toolkit

This package organizes the command-line surface into one module per subcommand:
- Phantom: synthetic mesh sequences
- Plane: SPCA informative vertices and the optimal scan plane
- Slice: 2D contour model from a mesh sequence and a plane
- Fit: PLSR / KPLSR model training
- Instantiate: one 3D mesh from one contour
- Study: validation studies and their reports
"""

from .phantom_command import register_phantom_command
from .plane_command import register_plane_command
from .slice_command import register_slice_command
from .fit_command import register_fit_command
from .instantiate_command import register_instantiate_command
from .study_command import register_study_command


def register_commands(subparsers):
    """
    Register all subcommands

    Parameters:
    -----------
    subparsers : argparse._SubParsersAction
        Result of ArgumentParser.add_subparsers
    """
    register_phantom_command(subparsers)
    register_plane_command(subparsers)
    register_slice_command(subparsers)
    register_fit_command(subparsers)
    register_instantiate_command(subparsers)
    register_study_command(subparsers)
