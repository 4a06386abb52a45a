"""
Exception types for the shape instantiation toolkit
All errors derive from ShapeToolkitError so the CLI can map them to exit codes
"""


class ShapeToolkitError(Exception):
    """Base class for all toolkit errors"""


class ShapeError(ShapeToolkitError, ValueError):
    """Array shapes, vertex counts or layouts do not agree"""


class RankError(ShapeToolkitError, ValueError):
    """Latent component extraction failed at a given component index (1-based)"""
    def __init__(self, message, component=None):
        super().__init__(message)
        self.component = component


class DegenerateGeometryError(ShapeToolkitError, ValueError):
    """Collinear points, too few weighted points or zero-length contours"""


class NoIntersectionError(ShapeToolkitError, ValueError):
    """A plane does not cut the surface"""
    def __init__(self, message, frame=None):
        if frame is not None:
            message = f"frame {frame}: {message}"
        super().__init__(message)
        self.frame = frame


class PhantomSpecError(ShapeToolkitError, ValueError):
    """Invalid phantom specification"""


class ZeroVarianceError(ShapeToolkitError, ValueError):
    """Input sequence does not move at all"""


class ConfigError(ShapeToolkitError, ValueError):
    """Invalid or unsupported pipeline configuration"""


class ParseError(ShapeToolkitError, ValueError):
    """Malformed input file; carries the path and 1-based line number when known"""
    def __init__(self, message, path=None, line=None):
        location = ""
        if path is not None:
            location = f"{path}"
            if line is not None:
                location += f":{line}"
            location += ": "
        elif line is not None:
            location = f"line {line}: "
        super().__init__(location + message)
        self.path = path
        self.line = line


class BoundaryFrameError(ShapeToolkitError, IndexError):
    """Requested quantity is undefined at the first or last frame"""
