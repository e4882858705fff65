"""Toolkit exception types."""


class VarsrError(Exception):
    """Base class for all toolkit errors."""


class DegenerateInput(VarsrError):
    """Input is structurally valid but too small or empty for the operation."""


class ShapeMismatch(VarsrError):
    """Operands that must share dimensions do not."""


class InvalidParameter(VarsrError):
    """A configuration value is outside its legal range."""


class DivergenceDetected(VarsrError):
    """Training produced a non-finite loss or parameter.

    Carries the epoch and batch index at which divergence was observed
    (batch may be None when detected at an epoch boundary).
    """

    def __init__(self, epoch, batch=None, message=""):
        self.epoch = epoch
        self.batch = batch
        detail = message or "non-finite value during training"
        where = f"epoch {epoch}" + (f", batch {batch}" if batch is not None else "")
        super().__init__(f"{detail} ({where})")
