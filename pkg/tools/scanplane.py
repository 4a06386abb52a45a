"""
Scan plane tools for the shape instantiation toolkit
Weighted plane fitting, plane perturbation, mesh slicing and contour resampling
"""

import logging
import concurrent.futures
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.spatial.transform import Rotation

from tools.errors import DegenerateGeometryError, NoIntersectionError, ShapeError
from tools.spca import SpcaConfig, spca, vertex_contributions
from tools.ssm import CENTER_AND_NORMALIZE, ContourSequence2D, center_normalize, flatten

logger = logging.getLogger(__name__)

ORTHONORMAL_TOL = 1e-8

# (rot_x_deg, rot_y_deg, translate_z_mm) deviations around the optimal plane
DEVIATION_PRESET = (
    (0.0, 0.0, 0.0),
    (6.0, 0.0, 0.0), (-6.0, 0.0, 0.0),
    (0.0, 6.0, 0.0), (0.0, -6.0, 0.0),
    (0.0, 0.0, 6.0), (0.0, 0.0, -6.0),
    (3.0, 3.0, 0.0), (-3.0, -3.0, 0.0),
    (3.0, 0.0, 3.0), (-3.0, 0.0, -3.0),
    (0.0, 3.0, -3.0), (0.0, -3.0, 3.0),
)


def _unit(vector):
    vector = np.asarray(vector, dtype=float)
    norm = np.linalg.norm(vector)
    if norm == 0:
        raise DegenerateGeometryError("zero-length direction vector")
    return vector / norm


def in_plane_axes(normal):
    """Deterministic in-plane axes: projection of global x, falling back to global y"""
    normal = _unit(normal)
    for axis in (np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0])):
        projected = axis - (axis @ normal) * normal
        if np.linalg.norm(projected) > 1e-6:
            axis_x = projected / np.linalg.norm(projected)
            return axis_x, np.cross(normal, axis_x)
    raise DegenerateGeometryError("cannot build in-plane axes")


@dataclass(frozen=True)
class ScanPlane:
    """
    Oriented plane with a right-handed in-plane frame

    Attributes:
    -----------
    origin : ndarray (3,)
    axis_x, axis_y : ndarray (3,)
        Orthonormal in-plane axes
    normal : ndarray (3,)
        axis_x x axis_y
    info : dict
        Fit objectives and other diagnostics
    """
    origin: np.ndarray
    axis_x: np.ndarray
    axis_y: np.ndarray
    normal: np.ndarray = None
    info: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        origin = np.asarray(self.origin, dtype=float).reshape(3)
        axis_x = np.asarray(self.axis_x, dtype=float).reshape(3)
        axis_y = np.asarray(self.axis_y, dtype=float).reshape(3)
        normal = np.cross(axis_x, axis_y) if self.normal is None else np.asarray(self.normal, dtype=float).reshape(3)
        frame = np.column_stack([axis_x, axis_y, normal])
        if not np.allclose(frame.T @ frame, np.eye(3), atol=ORTHONORMAL_TOL):
            raise DegenerateGeometryError("plane axes are not orthonormal")
        if not np.allclose(np.cross(axis_x, axis_y), normal, atol=ORTHONORMAL_TOL):
            raise DegenerateGeometryError("plane axes are not right-handed")
        for name, value in (("origin", origin), ("axis_x", axis_x), ("axis_y", axis_y), ("normal", normal)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)

    @classmethod
    def from_normal(cls, origin, normal, info=None):
        normal = _unit(normal)
        axis_x, axis_y = in_plane_axes(normal)
        return cls(origin, axis_x, axis_y, normal, info or {})

    @property
    def frame(self):
        """3 x 3 matrix with columns axis_x, axis_y, normal"""
        return np.column_stack([self.axis_x, self.axis_y, self.normal])

    def signed_distance(self, points):
        return (np.asarray(points, dtype=float) - self.origin) @ self.normal

    def project(self, points):
        """In-plane (axis_x, axis_y) coordinates of 3D points"""
        offset = np.asarray(points, dtype=float) - self.origin
        return np.column_stack([offset @ self.axis_x, offset @ self.axis_y])

    def to_dict(self):
        return {
            "origin": self.origin.tolist(),
            "axis_x": self.axis_x.tolist(),
            "axis_y": self.axis_y.tolist(),
            "normal": self.normal.tolist(),
            "info": self.info,
        }

    @classmethod
    def from_dict(cls, data):
        try:
            return cls(data["origin"], data["axis_x"], data["axis_y"], data.get("normal"), data.get("info", {}))
        except KeyError as e:
            raise ShapeError(f"plane document is missing {e}")


@dataclass(frozen=True)
class PlanePerturbation:
    """Rotation about axis_x then axis_y (degrees), then translation along the new normal (mm)"""
    rot_x_deg: float = 0.0
    rot_y_deg: float = 0.0
    translate_z_mm: float = 0.0

    def __post_init__(self):
        if not np.all(np.isfinite(self.as_tuple())):
            raise ShapeError(f"perturbation must be finite, got {self.as_tuple()}")

    def as_tuple(self):
        return (float(self.rot_x_deg), float(self.rot_y_deg), float(self.translate_z_mm))

    @property
    def label(self):
        return "({:g},{:g},{:g})".format(*self.as_tuple())

    @property
    def is_identity(self):
        return self.as_tuple() == (0.0, 0.0, 0.0)


@dataclass(frozen=True)
class PlanarContour:
    vertices: np.ndarray
    closed: bool = True
    info: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        vertices = np.asarray(self.vertices, dtype=float)
        if vertices.ndim != 2 or vertices.shape[1] != 2:
            raise ShapeError(f"contour vertices must be (m, 2), got {vertices.shape}")
        vertices.setflags(write=False)
        object.__setattr__(self, "vertices", vertices)
        object.__setattr__(self, "closed", bool(self.closed))

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    def segment_lengths(self):
        points = self.vertices
        if self.closed:
            points = np.vstack([points, points[:1]])
        return np.linalg.norm(np.diff(points, axis=0), axis=1)

    def perimeter(self):
        return float(self.segment_lengths().sum())

    def signed_area(self):
        """Shoelace area, positive for counter-clockwise loops"""
        x, y = self.vertices[:, 0], self.vertices[:, 1]
        return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def weighted_plane_objectives(plane, points, weights):
    """Weighted sums of squared and absolute point-to-plane distances"""
    distances = plane.signed_distance(points)
    weights = np.asarray(weights, dtype=float)
    return {
        "weighted_squared": float(np.sum(weights * distances ** 2)),
        "weighted_absolute": float(np.sum(weights * np.abs(distances))),
    }


def fit_weighted_plane(points, weights):
    """
    Weighted total-least-squares plane

    The plane passes through the weighted centroid; its normal is the
    smallest-eigenvalue eigenvector of the weighted covariance.

    Parameters:
    -----------
    points : array_like (n, 3)
    weights : array_like (n,)
        Non-negative weights, e.g. vertex contributions

    Returns:
    --------
    ScanPlane with info['weighted_squared'] and info['weighted_absolute']
    """
    points = np.asarray(points, dtype=float)
    weights = np.asarray(weights, dtype=float).ravel()
    if points.ndim != 2 or points.shape[1] != 3:
        raise ShapeError(f"points must be (n, 3), got {points.shape}")
    if weights.shape[0] != points.shape[0]:
        raise ShapeError(f"{weights.shape[0]} weights for {points.shape[0]} points")
    if np.any(weights < 0) or not np.all(np.isfinite(weights)):
        raise ShapeError("weights must be finite and non-negative")

    active = weights > 0
    if np.count_nonzero(active) < 3:
        raise DegenerateGeometryError(
            f"plane fit needs at least 3 points with positive weight, got {np.count_nonzero(active)}"
        )
    pts, w = points[active], weights[active]
    centroid = (w[:, None] * pts).sum(axis=0) / w.sum()
    offset = pts - centroid
    covariance = (w[:, None] * offset).T @ offset / w.sum()
    eigenvalues, eigenvectors = linalg.eigh(covariance)

    spread = eigenvalues[-1]
    if spread <= 0 or eigenvalues[1] <= 1e-12 * spread:
        raise DegenerateGeometryError("weighted points are collinear or coincident")

    normal = eigenvectors[:, 0]
    # orient the normal deterministically: largest-magnitude component positive
    normal = normal * (1.0 if normal[np.argmax(np.abs(normal))] > 0 else -1.0)
    plane = ScanPlane.from_normal(centroid, normal)
    info = weighted_plane_objectives(plane, points, weights)
    info["n_points"] = int(active.sum())
    logger.info("Fitted plane through %d weighted points, weighted squared residual %.4g",
                info["n_points"], info["weighted_squared"])
    return ScanPlane(plane.origin, plane.axis_x, plane.axis_y, plane.normal, info)


def perturb_plane(p, d, inverse=False):
    """
    Rotate a plane about its own axis_x then axis_y and shift it along the new normal

    Parameters:
    -----------
    p : ScanPlane
    d : PlanePerturbation or (rx, ry, tz) tuple
    inverse : bool
        Apply the exact inverse transform instead

    Returns:
    --------
    ScanPlane
    """
    if not isinstance(d, PlanePerturbation):
        d = PlanePerturbation(*d)
    rx, ry, tz = d.as_tuple()
    rotation = Rotation.from_euler("XY", [rx, ry], degrees=True).as_matrix()
    if not inverse:
        frame = p.frame @ rotation
        origin = p.origin + tz * frame[:, 2]
    else:
        origin = p.origin - tz * p.normal
        frame = p.frame @ rotation.T
    return ScanPlane(origin, frame[:, 0], frame[:, 1], frame[:, 2], {"perturbation": d.as_tuple()})


def _intersection_graph(vertices, faces, plane):
    """Edge-keyed intersection points and the segments joining them"""
    distances = plane.signed_distance(vertices)
    positive = distances >= 0
    edges = np.stack([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]], axis=1)
    crossing = positive[edges[..., 0]] != positive[edges[..., 1]]
    cut_faces = np.flatnonzero(crossing.sum(axis=1) == 2)

    node_index = {}
    points = []
    segments = []
    for face in cut_faces:
        ends = []
        for a, b in edges[face][crossing[face]]:
            key = (min(a, b), max(a, b))
            if key not in node_index:
                da, db = distances[key[0]], distances[key[1]]
                t = da / (da - db)
                node_index[key] = len(points)
                points.append(vertices[key[0]] + t * (vertices[key[1]] - vertices[key[0]]))
            ends.append(node_index[key])
        segments.append((ends[0], ends[1]))
    return np.array(points).reshape(-1, 3), segments


def _chain_segments(segments):
    """Walk segment adjacency into open chains (from degree-1 nodes) and closed loops"""
    incident = defaultdict(list)
    for sid, (a, b) in enumerate(segments):
        incident[a].append(sid)
        incident[b].append(sid)
    used = np.zeros(len(segments), dtype=bool)

    def walk(start):
        path = [start]
        current = start
        while True:
            sid = next((s for s in incident[current] if not used[s]), None)
            if sid is None:
                return path
            used[sid] = True
            a, b = segments[sid]
            current = b if a == current else a
            path.append(current)
            if current == start:
                return path

    chains = []
    for node in sorted(incident):
        if len(incident[node]) == 1 and not used[incident[node][0]]:
            chains.append((walk(node), False))
    for sid, (a, _) in enumerate(segments):
        if not used[sid]:
            path = walk(a)
            if len(path) > 2 and path[0] == path[-1]:
                chains.append((path[:-1], True))
            else:
                chains.append((path, False))
    return chains


def _dedupe(points, closed, tol):
    keep = [0]
    for i in range(1, len(points)):
        if np.linalg.norm(points[i] - points[keep[-1]]) > tol:
            keep.append(i)
    points = points[keep]
    if closed and len(points) > 1 and np.linalg.norm(points[0] - points[-1]) <= tol:
        points = points[:-1]
    return points


def slice_mesh(vertices, faces, plane):
    """
    Cut a triangle mesh with a plane and return the largest intersection loop

    Parameters:
    -----------
    vertices : ndarray (numY, 3)
    faces : ndarray of int (F, 3)
    plane : ScanPlane

    Returns:
    --------
    PlanarContour in (axis_x, axis_y) coordinates, counter-clockwise when closed;
    info holds 'perimeter' and 'discarded_loops'
    """
    vertices = np.asarray(vertices, dtype=float)
    faces = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    points, segments = _intersection_graph(vertices, faces, plane)
    if not segments:
        raise NoIntersectionError("plane does not intersect the mesh")

    scale = max(1.0, float(np.ptp(vertices, axis=0).max()))
    candidates = []
    for path, closed in _chain_segments(segments):
        loop = _dedupe(plane.project(points[path]), closed, 1e-12 * scale)
        if closed and len(loop) < 3:
            continue
        if len(loop) < 2:
            continue
        candidates.append(PlanarContour(loop, closed))
    if not candidates:
        raise NoIntersectionError("plane only touches the mesh surface")

    perimeters = [c.perimeter() for c in candidates]
    best = int(np.argmax(perimeters))
    contour = candidates[best]
    discarded = len(candidates) - 1
    if discarded:
        logger.debug("Discarded %d smaller intersection loop(s)", discarded)
    if not contour.closed:
        logger.warning("Largest intersection chain is open; mesh is not watertight along the plane")

    loop = contour.vertices
    if contour.closed and contour.signed_area() < 0:
        loop = loop[::-1]
    return PlanarContour(loop, contour.closed, {"perimeter": perimeters[best], "discarded_loops": discarded})


def _anchor_index(vertices):
    """Vertex of maximal x, ties broken by maximal y"""
    scale = max(1.0, float(np.abs(vertices).max()))
    x_max = vertices[:, 0].max()
    candidates = np.flatnonzero(vertices[:, 0] >= x_max - 1e-9 * scale)
    return int(candidates[np.argmax(vertices[candidates, 1])])


def resample_contour(c, numX):
    """
    Resample a contour to numX points equally spaced in arc length

    Closed contours start at the max-x (then max-y) vertex; open contours keep
    their first and last vertex.
    """
    numX = int(numX)
    if c.closed and numX < 3:
        raise ShapeError(f"closed contours need numX >= 3, got {numX}")
    if not c.closed and numX < 2:
        raise ShapeError(f"open contours need numX >= 2, got {numX}")

    vertices = np.asarray(c.vertices, dtype=float)
    if c.closed:
        vertices = np.roll(vertices, -_anchor_index(vertices), axis=0)
        vertices = np.vstack([vertices, vertices[:1]])
    arc = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(vertices, axis=0), axis=1))])
    total = arc[-1]
    if total <= 0:
        raise DegenerateGeometryError("contour has zero length")

    targets = np.linspace(0.0, total, numX, endpoint=not c.closed)
    resampled = np.column_stack([np.interp(targets, arc, vertices[:, 0]),
                                 np.interp(targets, arc, vertices[:, 1])])
    return PlanarContour(resampled, c.closed, {"source_perimeter": float(total)})


def _slice_frame(t, vertices, faces, plane, numX):
    try:
        contour = slice_mesh(vertices, faces, plane)
    except NoIntersectionError as e:
        raise NoIntersectionError(str(e), frame=t) from e
    return t, contour, resample_contour(contour, numX)


def build_contour_sequence(seq, plane, numX, max_workers=None):
    """
    Slice and resample every frame with one plane

    Parameters:
    -----------
    seq : ShapeSequence3D
    plane : ScanPlane
    numX : int
    max_workers : int, optional
        Threads used to slice frames; results are kept in frame order

    Returns:
    --------
    ContourSequence2D with info['perimeters'] and info['discarded_loops']
    """
    results = [None] * seq.n_frames
    with concurrent.futures.ThreadPoolExecutor(max_workers=max_workers) as executor:
        futures = [executor.submit(_slice_frame, t, seq.frame(t), seq.connectivity, plane, numX)
                   for t in range(seq.n_frames)]
        for future in concurrent.futures.as_completed(futures):
            t, raw, resampled = future.result()
            results[t] = (raw, resampled)

    closed = all(raw.closed for raw, _ in results)
    return ContourSequence2D(
        [resampled.vertices for _, resampled in results],
        closed=closed,
        info={
            "perimeters": [raw.perimeter() for raw, _ in results],
            "discarded_loops": [raw.info["discarded_loops"] for raw, _ in results],
            "plane": plane.to_dict(),
        },
    )


def optimal_scan_plane(seq, spca_cfg=None, component_index=0):
    """
    Plane through the informative vertices of the first sparse mode

    Flattens and normalizes the sequence, runs SPCA, sums per-vertex
    contributions and fits the contribution-weighted plane through those
    vertices on the mean shape.

    Returns:
    --------
    tuple : (ScanPlane, VertexContribution, SparseLoadings)
    """
    y_norm, _ = center_normalize(flatten(seq), CENTER_AND_NORMALIZE)
    loadings = spca(y_norm, spca_cfg or SpcaConfig())
    contribution = vertex_contributions(loadings, component_index)
    mean_shape = seq.frames.mean(axis=0)
    plane = fit_weighted_plane(mean_shape, contribution.contributions)
    plane.info.update({
        "n_informative": int(contribution.selected.size),
        "spca_status": loadings.status,
        "spca_iterations": loadings.n_iter,
    })
    return plane, contribution, loadings
