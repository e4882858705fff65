"""varsr: residual-CNN single-image super-resolution with adaptive loss."""

__version__ = "0.1.0"

from .errors import (  # noqa: F401
    DegenerateInput,
    DivergenceDetected,
    InvalidParameter,
    ShapeMismatch,
    VarsrError,
)
