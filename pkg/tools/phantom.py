"""
Synthetic dynamic phantoms for the shape instantiation toolkit
Corresponded ellipsoid mesh sequences with analytic deformation fields and
analytic cross-sections used as test oracles
"""

import logging
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import integrate, special
from scipy.spatial import ConvexHull

from tools.errors import NoIntersectionError, PhantomSpecError
from tools.ssm import ShapeSequence3D

logger = logging.getLogger(__name__)

BASE_SHAPES = ("ellipsoid", "bumpy-ellipsoid")
DEFORMATIONS = ("sinusoidal-radial", "linear-stretch", "bending", "banded")
CYCLES = ("half", "full")
RADIAL_DEFORMATIONS = ("sinusoidal-radial", "banded")
MAX_AMPLITUDE_FRACTION = 0.25
GOLDEN_ANGLE = np.pi * (3.0 - np.sqrt(5.0))


@dataclass(frozen=True)
class PhantomSpec:
    """
    Phantom settings

    Attributes:
    -----------
    base_shape : str
        'ellipsoid' or 'bumpy-ellipsoid'
    n_frames : int
        N
    n_vertices : int
        numY
    deformation : str
        'sinusoidal-radial', 'linear-stretch', 'bending' or 'banded'
    amplitude : float
        Peak displacement in mm, below 25% of the smallest semi-axis
    cycle : str
        'half' (end-inhale to end-exhale) or 'full' (periodic)
    seed : int
        Seeds the bump coefficients of the bumpy base
    semi_axes : tuple
        Ellipsoid semi-axes (a, b, c) in mm
    bump_scale : float
        Relative radial bump size of the bumpy base
    band_center, band_width : float
        Height (in unit-sphere z) and half-width of the moving belt for 'banded'
    band_phase_lag : float
        Peak phase lag (radians) of the belt, varying as sin(band_lobes * azimuth)
    band_lobes : int
        Number of lag periods around the belt
    cap_start : float
        Unit-sphere |z| where the polar bulge of 'sinusoidal-radial' begins
    """
    base_shape: str = "ellipsoid"
    n_frames: int = 20
    n_vertices: int = 1000
    deformation: str = "sinusoidal-radial"
    amplitude: float = 7.0
    cycle: str = "half"
    seed: int = 0
    semi_axes: tuple = (60.0, 40.0, 30.0)
    bump_scale: float = 0.05
    band_center: float = 0.3
    band_width: float = 0.1
    band_phase_lag: float = 0.1
    band_lobes: int = 7
    cap_start: float = 0.35
    info: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.base_shape not in BASE_SHAPES:
            raise PhantomSpecError(f"unknown base shape '{self.base_shape}', expected one of {BASE_SHAPES}")
        if self.deformation not in DEFORMATIONS:
            raise PhantomSpecError(f"unknown deformation '{self.deformation}', expected one of {DEFORMATIONS}")
        if self.cycle not in CYCLES:
            raise PhantomSpecError(f"unknown cycle '{self.cycle}', expected one of {CYCLES}")
        if int(self.n_frames) < 2:
            raise PhantomSpecError(f"n_frames must be >= 2, got {self.n_frames}")
        if int(self.n_vertices) < 4:
            raise PhantomSpecError(f"n_vertices must be >= 4, got {self.n_vertices}")
        axes = tuple(float(a) for a in self.semi_axes)
        if len(axes) != 3 or min(axes) <= 0:
            raise PhantomSpecError(f"semi_axes must be three positive lengths, got {self.semi_axes}")
        object.__setattr__(self, "semi_axes", axes)
        limit = MAX_AMPLITUDE_FRACTION * min(axes)
        if not 0 <= self.amplitude < limit:
            raise PhantomSpecError(
                f"amplitude must be in [0, {limit:g}) mm (25% of the smallest semi-axis), got {self.amplitude}"
            )
        if not 0 <= self.bump_scale < 0.25:
            raise PhantomSpecError(f"bump_scale must be in [0, 0.25), got {self.bump_scale}")
        if self.band_width <= 0:
            raise PhantomSpecError(f"band_width must be > 0, got {self.band_width}")
        if not 0 <= self.cap_start < 1:
            raise PhantomSpecError(f"cap_start must be in [0, 1), got {self.cap_start}")

    def to_dict(self):
        data = asdict(self)
        data.pop("info")
        data["semi_axes"] = list(self.semi_axes)
        return data


@dataclass(frozen=True)
class CrossSection:
    perimeter: float
    area: float


def fibonacci_sphere(n):
    """n near-uniform unit directions on a Fibonacci spiral"""
    i = np.arange(n, dtype=float)
    z = 1.0 - 2.0 * (i + 0.5) / n
    radius = np.sqrt(1.0 - z ** 2)
    phi = GOLDEN_ANGLE * i
    return np.column_stack([radius * np.cos(phi), radius * np.sin(phi), z])


def sphere_faces(directions):
    """Outward-oriented triangles of the convex hull of unit directions"""
    faces = ConvexHull(directions).simplices.astype(np.int64)
    a, b, c = (directions[faces[:, k]] for k in range(3))
    inward = np.einsum("ij,ij->i", np.cross(b - a, c - a), a + b + c) < 0
    faces[inward] = faces[inward][:, [0, 2, 1]]
    return faces


def _bump_field(spec, directions):
    """Low-degree real harmonics in Cartesian form with seeded weights"""
    if spec.base_shape != "bumpy-ellipsoid" or spec.bump_scale == 0:
        return np.zeros(len(directions))
    x, y, z = directions.T
    harmonics = np.column_stack([
        x * y, y * z, x * z, x ** 2 - y ** 2, 3 * z ** 2 - 1,
        x * (x ** 2 - 3 * y ** 2), y * (3 * x ** 2 - y ** 2), z * (5 * z ** 2 - 3),
    ])
    rng = np.random.default_rng(spec.seed)
    weights = rng.uniform(-1.0, 1.0, harmonics.shape[1])
    bump = harmonics @ weights
    peak = np.abs(bump).max()
    return spec.bump_scale * bump / peak if peak > 0 else bump


def base_vertices(spec, directions=None):
    """Undeformed surface point E(u) for every unit direction u"""
    if directions is None:
        directions = fibonacci_sphere(spec.n_vertices)
    ellipsoid = directions * np.asarray(spec.semi_axes)
    return ellipsoid * (1.0 + _bump_field(spec, directions))[:, None]


def phase(spec, t):
    """Phase angle of frame t: pi t / (N - 1) for a half cycle, 2 pi t / N for a full one"""
    if spec.cycle == "half":
        return np.pi * t / (spec.n_frames - 1)
    return 2.0 * np.pi * t / spec.n_frames


def cap_weight(spec, directions):
    """Smoothstep from 0 at |z| = cap_start to 1 at the poles; zero on the belt between the caps"""
    s = np.clip((np.abs(directions[:, 2]) - spec.cap_start) / (1.0 - spec.cap_start), 0.0, 1.0)
    return s * s * (3.0 - 2.0 * s)


def _radial_offset(spec, directions, theta):
    if spec.deformation == "sinusoidal-radial":
        # the belt follows the first harmonic of the phase only; the caps add
        # a third-harmonic bulge that no belt section can see
        breathing = 0.5 * (1.0 - np.cos(theta))
        bulge = 0.5 * (1.0 - np.cos(3.0 * theta))
        return spec.amplitude * (0.4 * breathing + 0.6 * bulge * cap_weight(spec, directions))
    # the belt lags in phase by a few degrees around its circumference
    azimuth = np.arctan2(directions[:, 1], directions[:, 0])
    lagged = theta + spec.band_phase_lag * np.sin(spec.band_lobes * azimuth)
    return spec.amplitude * 0.5 * (1.0 - np.cos(lagged)) * band_weight(spec, directions)


def band_weight(spec, directions):
    """Raised-cosine belt around band_center; exactly zero farther than band_width away"""
    offset = (directions[:, 2] - spec.band_center) / spec.band_width
    return np.where(np.abs(offset) < 1.0, np.cos(0.5 * np.pi * offset) ** 2, 0.0)


def stretch_scale(spec, t):
    """Linear-stretch driver: affine in t over a half cycle, a triangle wave over a full one"""
    if spec.cycle == "half":
        return t / (spec.n_frames - 1)
    return 1.0 - abs(1.0 - 2.0 * t / spec.n_frames)


def frame_vertices(spec, t, directions=None, base=None):
    """
    Vertices of frame t, evaluated directly from the deformation formula

    t may be any real phase index, including n_frames for periodicity checks.
    """
    if directions is None:
        directions = fibonacci_sphere(spec.n_vertices)
    if base is None:
        base = base_vertices(spec, directions)
    theta = phase(spec, t)
    vertices = base.copy()
    if spec.amplitude == 0:
        return vertices
    if spec.deformation in RADIAL_DEFORMATIONS:
        radius = np.linalg.norm(base, axis=1)
        vertices += (_radial_offset(spec, directions, theta) / radius)[:, None] * base
    elif spec.deformation == "linear-stretch":
        vertices[:, 0] += stretch_scale(spec, t) * spec.amplitude * directions[:, 0]
    else:
        m = 0.5 * (1.0 - np.cos(theta))
        vertices[:, 2] += spec.amplitude * m * (base[:, 0] / spec.semi_axes[0]) ** 2
    return vertices


def generate(spec):
    """
    Build a corresponded mesh sequence from a phantom spec

    Parameters:
    -----------
    spec : PhantomSpec

    Returns:
    --------
    ShapeSequence3D whose vertex i follows the same material point in every frame
    """
    directions = fibonacci_sphere(spec.n_vertices)
    faces = sphere_faces(directions)
    base = base_vertices(spec, directions)
    frames = np.stack([frame_vertices(spec, t, directions, base) for t in range(spec.n_frames)])
    logger.info("Generated %s phantom: %d frames, %d vertices, %d triangles",
                spec.deformation, spec.n_frames, spec.n_vertices, len(faces))
    return ShapeSequence3D(frames, faces, {"phantom": spec.to_dict()})


def ellipse_perimeter(p, q):
    """Perimeter of an ellipse with semi-axes p and q via the complete elliptic integral"""
    p, q = max(p, q), min(p, q)
    return 4.0 * p * special.ellipe(1.0 - (q / p) ** 2)


def _ellipsoid_section(semi_axes, plane):
    quadric = np.diag(1.0 / np.asarray(semi_axes) ** 2)
    basis = np.column_stack([plane.axis_x, plane.axis_y])
    restricted = basis.T @ quadric @ basis
    linear = basis.T @ quadric @ plane.origin
    level = 1.0 - plane.origin @ quadric @ plane.origin + linear @ np.linalg.solve(restricted, linear)
    if level <= 0:
        raise NoIntersectionError("plane does not cut the ellipsoid")
    eigenvalues = np.linalg.eigvalsh(restricted)
    p, q = np.sqrt(level / eigenvalues)
    return CrossSection(ellipse_perimeter(p, q), float(np.pi * p * q))


def analytic_cross_section(spec, frame, plane):
    """
    Exact perimeter and area of a phantom frame's planar section

    Undeformed and linearly stretched ellipsoids use the quadratic form of the
    section, so off-centre planes are allowed. Radial deformations are
    integrated in polar form and need a plane through the ellipsoid centre.

    Parameters:
    -----------
    spec : PhantomSpec
    frame : float
        Frame index (phase)
    plane : ScanPlane

    Returns:
    --------
    CrossSection
    """
    if spec.base_shape != "ellipsoid":
        raise PhantomSpecError(f"no analytic cross-section for base shape '{spec.base_shape}'")

    axes = np.asarray(spec.semi_axes)
    if spec.amplitude == 0:
        return _ellipsoid_section(axes, plane)
    if spec.deformation == "linear-stretch":
        stretched = axes.copy()
        stretched[0] += stretch_scale(spec, frame) * spec.amplitude
        return _ellipsoid_section(stretched, plane)
    if spec.deformation not in RADIAL_DEFORMATIONS:
        raise PhantomSpecError(f"no analytic cross-section for '{spec.deformation}' deformation")

    scale = float(axes.max())
    if abs(plane.signed_distance(np.zeros(3))) > 1e-9 * scale:
        raise PhantomSpecError("radial cross-sections need a plane through the phantom centre")

    theta = phase(spec, frame)

    def radius(phi):
        direction = np.cos(phi) * plane.axis_x + np.sin(phi) * plane.axis_y
        scaled = direction / axes
        unit = scaled / np.linalg.norm(scaled)
        return 1.0 / np.linalg.norm(scaled) + _radial_offset(spec, unit[None, :], theta)[0]

    step = 1e-6

    def arc_element(phi):
        rho = radius(phi)
        slope = (radius(phi + step) - radius(phi - step)) / (2.0 * step)
        return np.hypot(rho, slope)

    perimeter, _ = integrate.quad(arc_element, 0.0, 2.0 * np.pi, limit=200, epsabs=1e-9)
    area, _ = integrate.quad(lambda phi: 0.5 * radius(phi) ** 2, 0.0, 2.0 * np.pi, limit=200, epsabs=1e-9)
    return CrossSection(float(perimeter), float(area))
