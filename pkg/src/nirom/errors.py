"""Exception types raised across the package."""


class NiromError(Exception):
    """Base class for all package errors."""


class MeshError(NiromError, ValueError):
    """Invalid mesh topology or geometry."""


class MeshFormatError(MeshError):
    """Mesh text file could not be parsed."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DimensionError(NiromError, ValueError):
    """Array shapes do not conform."""


class ParameterError(NiromError, ValueError):
    """Parameter outside its admissible range."""


class DegenerateObservableError(NiromError, ZeroDivisionError):
    """An observable that appears as a divisor is (near) zero."""

    def __init__(self, message, cell=None):
        self.cell = cell
        super().__init__(message)


class ConvergenceError(NiromError, RuntimeError):
    """An iterative solver failed to converge."""

    def __init__(self, message, residual=None, iterations=None):
        self.residual = residual
        self.iterations = iterations
        super().__init__(message)


class StencilError(NiromError, ValueError):
    """Interpolation stencil is singular or too small."""


class FormatError(NiromError, ValueError):
    """Binary or text artifact file is malformed."""
