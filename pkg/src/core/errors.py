"""
Exception hierarchy for shapetrack.

InputError subclasses describe bad user input (CLI exit code 2),
ComputationError subclasses describe failures while computing (exit code 1).
"""

from typing import Optional


class ShapeTrackError(Exception):
    """Base class for all shapetrack errors."""


class InputError(ShapeTrackError, ValueError):
    """Invalid input data, files or arguments."""


class ComputationError(ShapeTrackError, RuntimeError):
    """A computation could not be carried out on otherwise valid input."""


class GridSpecError(InputError):
    pass


class ManifoldError(InputError):
    pass


class PointCloudFormatError(InputError):
    pass


class ScenarioError(InputError):
    pass


class TrackFormatError(InputError):
    """Track file violation, carrying the offending field path and line when known."""

    def __init__(self, message: str, field: Optional[str] = None, line: Optional[int] = None):
        self.field = field
        self.line = line
        location = []
        if line is not None:
            location.append(f"line {line}")
        if field:
            location.append(f"field '{field}'")
        prefix = f"[{', '.join(location)}] " if location else ""
        super().__init__(prefix + message)


class InteriorUndeterminedError(ComputationError):
    def __init__(self, message: str = "cannot determine interior"):
        super().__init__(message)


class OutOfGridError(ComputationError):
    pass


class SingularCovarianceError(ComputationError):
    pass


class RenderError(ComputationError):
    pass


class SceneNotVisibleError(ComputationError):
    def __init__(self, frame: int):
        self.frame = frame
        super().__init__(f"object not visible from the camera, first blind frame: {frame}")


class NonFiniteEnergyError(ComputationError):
    def __init__(self, term: str, frame: Optional[int] = None):
        self.term = term
        self.frame = frame
        where = f" at frame {frame}" if frame is not None else ""
        super().__init__(f"non-finite {term} energy{where}")
