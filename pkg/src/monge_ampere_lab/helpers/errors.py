"""
Exception hierarchy shared by every module
"""
from typing import Optional


class LabError(Exception):
    """Base class for all failures raised by the lab"""

    exit_code: int = 1


class ArgumentError(LabError, ValueError):
    """Invalid argument that pydantic validation does not already cover"""

    exit_code = 2


class PotentialEvaluationError(LabError):
    """A stack layer produced a non-finite jet, or the jet order cap was hit"""

    def __init__(self, message: str, layer_index: Optional[int] = None):
        self.layer_index = layer_index
        if layer_index is not None:
            message = f"layer {layer_index}: {message}"
        super().__init__(message)


class ConvexityError(LabError):
    """psi'' is not strictly positive where it has to be"""

    def __init__(self, message: str, y: Optional[float] = None):
        self.y = y
        if y is not None:
            message = f"{message} (y={y!r})"
        super().__init__(message)


class NumericError(LabError):
    """Quadrature truncation, bisection bracketing or support mismatch"""


class TrainingError(LabError):
    """Non-finite loss or gradient while fitting a network"""

    def __init__(self, message: str, epoch: Optional[int] = None):
        self.epoch = epoch
        if epoch is not None:
            message = f"epoch {epoch}: {message}"
        super().__init__(message)


class StepSizeError(LabError):
    """A variational step left the standard deviation non-positive"""


class MonotonicityError(LabError):
    """A learned map stopped being monotone on the grid"""
