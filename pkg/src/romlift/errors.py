"""Exception types raised across the package."""

import numpy as np


class ValidationError(ValueError):
    """Bad input or configuration; the CLI maps this to exit code 1."""


class PulseUnderresolvedError(ValidationError):
    pass


class GridAlignmentError(ValidationError):
    """Pulse breakpoints or sampling instants do not land where required."""


class GridMismatchError(ValidationError):
    pass


class CFLViolationError(ValidationError):
    pass


class InsufficientDataError(ValidationError):
    pass


class MissingRecordingError(ValidationError):
    pass


class OracleSizeError(ValidationError):
    pass


class NumericalError(RuntimeError):
    """Base for failures of the numerics themselves (CLI exit code 2)."""


class NotPositiveDefiniteError(NumericalError, np.linalg.LinAlgError):
    """Cholesky breakdown.

    ``index`` is the zero-based pivot that failed and ``pivot`` the value that
    was not positive. In this package it usually means the Gramian was
    assembled from oversampled or inconsistent data.
    """

    def __init__(self, index, pivot, context=""):
        self.index = int(index)
        self.pivot = float(pivot)
        self.context = context
        msg = f"matrix is not positive definite: pivot {self.index} = {self.pivot:.6e}"
        if context:
            msg = f"{context}: {msg}"
        super().__init__(msg)


class NumericalInstabilityError(NumericalError):
    pass


class AsymmetricResponseError(NumericalError):
    pass
