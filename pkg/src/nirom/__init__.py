"""Non-intrusive projection-based model reduction for steady parametric PDEs."""

from .errors import (
    ConvergenceError,
    DegenerateObservableError,
    DimensionError,
    FormatError,
    MeshError,
    MeshFormatError,
    NiromError,
    ParameterError,
    StencilError,
)

__version__ = "0.1.0"

__all__ = [
    "ConvergenceError",
    "DegenerateObservableError",
    "DimensionError",
    "FormatError",
    "MeshError",
    "MeshFormatError",
    "NiromError",
    "ParameterError",
    "StencilError",
    "__version__",
]
