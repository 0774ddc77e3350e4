"""Exception hierarchy shared by the solver modules."""


class AcousticShapeError(Exception):
    """Base class for all package errors."""


class MeshError(AcousticShapeError, ValueError):
    """Invalid mesh data or unsupported mesh request."""


class DeformationTooLarge(AcousticShapeError, ValueError):
    """The perturbed map is not a diffeomorphism (non-positive Jacobian)."""


class DegeneracyError(AcousticShapeError):
    """The coefficient 1 - 2k*dpsi fell below the admissible lower bound."""

    def __init__(self, message, step=None, margin=None):
        super().__init__(message)
        self.step = step
        self.margin = margin


class NonConvergence(AcousticShapeError):
    """Picard iteration hit its iteration cap."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class BlowUpError(AcousticShapeError):
    """Energy monitor detected unbounded growth or non-finite values."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class SupportError(AcousticShapeError, ValueError):
    """A deformation field touches a region where it must vanish."""


class ConfigError(AcousticShapeError, ValueError):
    """Malformed or inconsistent run configuration."""
