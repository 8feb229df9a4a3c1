"""Error hierarchy for momentflow.

Every error carries the process exit code the CLI reports for it:
2 for usage/domain problems, 3 for I/O and file-format problems,
4 for numerical failures.
"""
from typing import List, Optional


class MomentflowError(Exception):
    """Base class for all momentflow errors"""
    exit_code = 1


class DomainError(MomentflowError, ValueError):
    """A parameter lies outside the domain an operation accepts"""
    exit_code = 2


class ValidationFailed(DomainError):
    """A network failed validation; carries the diagnostics"""

    def __init__(self, diagnostics: List["object"]):
        self.diagnostics = list(diagnostics)
        summary = "; ".join(str(d) for d in self.diagnostics[:5])
        more = f" (+{len(self.diagnostics) - 5} more)" if len(self.diagnostics) > 5 else ""
        super().__init__(f"network failed validation: {summary}{more}")


class NetworkFormatError(MomentflowError):
    """Base class for container file problems"""
    exit_code = 3


class FormatVersionError(NetworkFormatError):
    pass


class ChecksumError(NetworkFormatError):
    pass


class ShapeError(NetworkFormatError):
    pass


class UnsupportedLayerError(NetworkFormatError):
    def __init__(self, layer_type: str, position: Optional[int] = None):
        self.layer_type = layer_type
        self.position = position
        where = f" at layer {position}" if position is not None else ""
        super().__init__(f"unsupported layer type '{layer_type}'{where}")


class NumericalError(MomentflowError):
    exit_code = 4


class CholeskyError(NumericalError):
    """Cholesky factorization failed even after eigenvalue clipping"""

    def __init__(self, min_eigenvalue: float):
        self.min_eigenvalue = float(min_eigenvalue)
        super().__init__(
            f"covariance is not positive definite after repair "
            f"(min eigenvalue {self.min_eigenvalue:.3e})"
        )
