"""
Pytest configuration file.
This file contains shared fixtures and configuration for tests.
"""

import sys
from pathlib import Path

# Add the parent directory to sys.path to allow importing from app modules
sys.path.insert(0, str(Path(__file__).parent.parent))

import numpy as np
import pytest

from tools.phantom import PhantomSpec, generate
from tools.scanplane import ScanPlane


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: acceptance-scale studies on the default phantom")


@pytest.fixture
def small_spec():
    """A quick sinusoidal-radial phantom"""
    return PhantomSpec(n_frames=8, n_vertices=400)


@pytest.fixture
def small_phantom(small_spec):
    return generate(small_spec)


@pytest.fixture
def z_plane():
    """Plane z = 0 with in-plane axes x and y"""
    return ScanPlane([0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0])


@pytest.fixture
def unit_cube():
    """Unit cube [0, 1]^3 as 8 vertices and 12 outward triangles"""
    vertices = np.array([
        [0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0],
        [0, 0, 1], [1, 0, 1], [1, 1, 1], [0, 1, 1],
    ], dtype=float)
    faces = np.array([
        [0, 2, 1], [0, 3, 2],
        [4, 5, 6], [4, 6, 7],
        [0, 1, 5], [0, 5, 4],
        [1, 2, 6], [1, 6, 5],
        [2, 3, 7], [2, 7, 6],
        [3, 0, 4], [3, 4, 7],
    ])
    return vertices, faces
