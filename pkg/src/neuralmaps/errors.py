"""Exception hierarchy shared across the package."""


class NeuralMapsError(Exception):
    """Base class for all package errors."""


class GradientError(NeuralMapsError):
    """A loss could not be differentiated (NaN loss, foreign tape...)."""


class EvaluationError(NeuralMapsError):
    """A forward pass produced a non-finite value."""

    def __init__(self, message, layer=None):
        super().__init__(message)
        self.layer = layer


class CheckpointError(NeuralMapsError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class CorruptCheckpointError(CheckpointError):
    pass


class ShapeMismatchError(CheckpointError):
    pass


class MeshError(NeuralMapsError):
    pass


class MeshFormatError(MeshError):
    """The OBJ file could not be parsed."""


class TopologyError(MeshError):
    """The mesh is not a manifold disk."""


class EmbeddingError(MeshError):
    """Tutte embedding failed (singular system or a non-positive triangle)."""


class OutOfDomainError(NeuralMapsError):
    def __init__(self, message, nearest_face=None):
        super().__init__(message)
        self.nearest_face = nearest_face


class ProjectionError(NeuralMapsError):
    """A 3D keypoint is too far from the surface to be pulled back."""


class DegenerateJacobianError(NeuralMapsError):
    pass


class SingularSourceError(DegenerateJacobianError):
    """The source surface Jacobian is rank deficient at a sample."""

    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class NonFiniteDensityError(NeuralMapsError):
    def __init__(self, message, flagged=()):
        super().__init__(message)
        self.flagged = list(flagged)


class DivergenceError(NeuralMapsError):
    """Optimization produced a non-finite or exploding loss."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class ConfigError(NeuralMapsError):
    pass
