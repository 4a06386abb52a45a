"""
Statistical shape model containers for the shape instantiation toolkit
Holds corresponded 3D mesh sequences and 2D contour sequences, their flattened
design matrices, column normalization and the two distance metrics
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from tools.errors import BoundaryFrameError, ShapeError

logger = logging.getLogger(__name__)

CENTER_ONLY = "center-only"
CENTER_AND_NORMALIZE = "center-and-normalize"
NORMALIZATION_MODES = (CENTER_ONLY, CENTER_AND_NORMALIZE)


def _frozen(array):
    array = np.array(array, dtype=float)
    array.setflags(write=False)
    return array


def _stack_frames(frames, dim, label):
    """Stack a list of per-frame vertex arrays into an (N, n, dim) array"""
    if isinstance(frames, np.ndarray) and frames.ndim == 3:
        stacked = frames
    else:
        frames = [np.asarray(f, dtype=float) for f in frames]
        if not frames:
            raise ShapeError(f"{label} has no frames")
        sizes = {f.shape for f in frames}
        if len(sizes) != 1:
            raise ShapeError(f"{label} frames are ragged: {sorted(s[0] if s else 0 for s in sizes)} vertices")
        stacked = np.stack(frames)
    if stacked.shape[0] == 0:
        raise ShapeError(f"{label} has no frames")
    if stacked.ndim != 3 or stacked.shape[2] != dim:
        raise ShapeError(f"{label} frames must be (n, {dim}) arrays, got {stacked.shape[1:]}")
    if not np.all(np.isfinite(stacked)):
        raise ShapeError(f"{label} contains non-finite coordinates")
    return _frozen(stacked)


@dataclass(frozen=True)
class ShapeSequence3D:
    """
    N corresponded meshes sharing one triangle list

    Attributes:
    -----------
    frames : ndarray, shape (N, numY, 3)
        Vertex coordinates in millimetres, frame t at index t
    connectivity : ndarray of int, shape (F, 3)
        Zero-based triangle vertex indices
    """
    frames: np.ndarray
    connectivity: np.ndarray
    info: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        frames = _stack_frames(self.frames, 3, "shape sequence")
        faces = np.asarray(self.connectivity, dtype=np.int64).reshape(-1, 3)
        if faces.size and (faces.min() < 0 or faces.max() >= frames.shape[1]):
            raise ShapeError(
                f"connectivity indices must lie in [0, {frames.shape[1]}), "
                f"got range [{faces.min()}, {faces.max()}]"
            )
        faces.setflags(write=False)
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "connectivity", faces)

    @property
    def n_frames(self):
        return self.frames.shape[0]

    @property
    def n_vertices(self):
        return self.frames.shape[1]

    def frame(self, t):
        return self.frames[t]

    def with_frames(self, frames):
        """New sequence with the same connectivity and different vertex positions"""
        return ShapeSequence3D(frames, self.connectivity, dict(self.info))


@dataclass(frozen=True)
class ContourSequence2D:
    """N corresponded planar contours, frame t synchronized with 3D frame t"""
    frames: np.ndarray
    closed: bool = True
    info: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "frames", _stack_frames(self.frames, 2, "contour sequence"))
        object.__setattr__(self, "closed", bool(self.closed))

    @property
    def n_frames(self):
        return self.frames.shape[0]

    @property
    def n_vertices(self):
        return self.frames.shape[1]

    def frame(self, t):
        return self.frames[t]

    def with_frames(self, frames):
        return ContourSequence2D(frames, self.closed, dict(self.info))


@dataclass(frozen=True)
class VariableLayout:
    """Interleaved per-vertex ordering (x1, y1, z1, x2, ...)"""
    n_points: int
    dim: int

    @property
    def n_variables(self):
        return self.n_points * self.dim

    def variable(self, column):
        """Return (vertex index, coordinate index) of a design-matrix column"""
        if not 0 <= column < self.n_variables:
            raise ShapeError(f"column {column} outside layout of {self.n_variables} variables")
        return divmod(column, self.dim)


@dataclass(frozen=True)
class DesignMatrix:
    values: np.ndarray
    layout: VariableLayout

    def __post_init__(self):
        values = _frozen(np.atleast_2d(self.values))
        if values.shape[1] != self.layout.n_variables:
            raise ShapeError(
                f"matrix has {values.shape[1]} columns but layout describes {self.layout.n_variables}"
            )
        object.__setattr__(self, "values", values)

    @property
    def shape(self):
        return self.values.shape


@dataclass(frozen=True)
class NormalizationStats:
    """Column statistics; a norm of 0 marks a constant column left unscaled"""
    column_means: np.ndarray
    column_norms: np.ndarray
    mode: str = CENTER_AND_NORMALIZE

    def __post_init__(self):
        if self.mode not in NORMALIZATION_MODES:
            raise ShapeError(f"unknown normalization mode '{self.mode}'")
        object.__setattr__(self, "column_means", _frozen(self.column_means))
        object.__setattr__(self, "column_norms", _frozen(self.column_norms))

    def _scale(self):
        if self.mode == CENTER_ONLY:
            return np.ones_like(self.column_norms)
        return np.where(self.column_norms > 0, self.column_norms, 1.0)

    def apply(self, values):
        """Normalize new rows with the stored statistics"""
        values = np.asarray(values, dtype=float)
        if values.shape[-1] != self.column_means.shape[0]:
            raise ShapeError(
                f"expected {self.column_means.shape[0]} columns, got {values.shape[-1]}"
            )
        return (values - self.column_means) / self._scale()

    def invert(self, values):
        """Map normalized rows back to the original units"""
        values = np.asarray(values, dtype=float)
        return values * self._scale() + self.column_means


def flatten(seq):
    """
    Flatten a shape or contour sequence into an N x d design matrix

    Parameters:
    -----------
    seq : ShapeSequence3D, ContourSequence2D or list of (n, dim) arrays

    Returns:
    --------
    DesignMatrix with row t holding frame t in interleaved order
    """
    if isinstance(seq, (ShapeSequence3D, ContourSequence2D)):
        frames = seq.frames
    else:
        arrays = [np.asarray(f, dtype=float) for f in seq]
        if not arrays:
            raise ShapeError("cannot flatten an empty sequence")
        dims = {a.shape[-1] if a.ndim == 2 else None for a in arrays}
        if len(dims) != 1 or None in dims:
            raise ShapeError("frames must all be (n, dim) arrays with the same dim")
        frames = _stack_frames(arrays, dims.pop(), "sequence")
    n_frames, n_points, dim = frames.shape
    return DesignMatrix(frames.reshape(n_frames, n_points * dim), VariableLayout(n_points, dim))


def unflatten(matrix):
    """Inverse of flatten: returns an (N, n, dim) vertex array"""
    layout = matrix.layout
    return np.array(matrix.values).reshape(matrix.values.shape[0], layout.n_points, layout.dim)


def center_normalize(m, mode=CENTER_AND_NORMALIZE):
    """
    Center every column to mean 0 and, in normalize mode, scale it to unit norm

    Constant columns become exactly zero and their norm is recorded as 0.

    Parameters:
    -----------
    m : DesignMatrix or ndarray
    mode : str
        'center-only' or 'center-and-normalize'

    Returns:
    --------
    tuple : (normalized DesignMatrix or ndarray, NormalizationStats)
    """
    if mode not in NORMALIZATION_MODES:
        raise ShapeError(f"unknown normalization mode '{mode}'")
    values = np.asarray(m.values if isinstance(m, DesignMatrix) else m, dtype=float)
    if values.ndim != 2 or values.shape[0] < 2:
        raise ShapeError(f"centering needs at least 2 rows, got shape {values.shape}")

    means = values.mean(axis=0)
    centered = values - means
    constant = np.ptp(values, axis=0) == 0
    centered[:, constant] = 0.0
    norms = np.linalg.norm(centered, axis=0)
    norms[constant] = 0.0

    stats = NormalizationStats(means, norms, mode)
    if mode == CENTER_AND_NORMALIZE:
        centered = centered / np.where(norms > 0, norms, 1.0)

    if isinstance(m, DesignMatrix):
        return DesignMatrix(centered, m.layout), stats
    return centered, stats


def _as_points(frame):
    frame = np.asarray(frame, dtype=float)
    if frame.ndim == 1:
        if frame.size % 3:
            raise ShapeError(f"flattened frame length {frame.size} is not a multiple of 3")
        frame = frame.reshape(-1, 3)
    return frame


def vertex_distances(pred, truth):
    """Per-vertex Euclidean distances between two corresponded frames"""
    pred = _as_points(pred)
    truth = _as_points(truth)
    if pred.shape != truth.shape:
        raise ShapeError(f"vertex count mismatch: {pred.shape[0]} vs {truth.shape[0]}")
    return np.linalg.norm(pred - truth, axis=1)


def mean_distance_error(pred, truth):
    """Mean vertex-to-vertex Euclidean distance in millimetres"""
    return float(vertex_distances(pred, truth).mean())


def shape_variation(seq, t):
    """
    Mean distance between the neighbours of frame t

    Raises BoundaryFrameError at the first and last frame.
    """
    n = seq.n_frames
    if not 1 <= t <= n - 2:
        raise BoundaryFrameError(
            f"shape variation is undefined at frame {t}; interior frames are 1..{n - 2}"
        )
    return mean_distance_error(seq.frame(t - 1), seq.frame(t + 1))


def one_sided_variation(seq, t):
    """Distance from a boundary frame to its only neighbour"""
    n = seq.n_frames
    if n < 2:
        raise BoundaryFrameError("one-sided variation needs at least 2 frames")
    neighbour = t + 1 if t == 0 else t - 1
    if not 0 <= t < n:
        raise BoundaryFrameError(f"frame {t} outside 0..{n - 1}")
    return mean_distance_error(seq.frame(t), seq.frame(neighbour))
