"""Exception types shared across the package."""

import numpy as np


class InvalidArgumentError(ValueError):
    """Raised when an argument violates a documented precondition."""


class NumericalFailure(np.linalg.LinAlgError):
    """Raised when a covariance stays non positive definite after jitter
    escalation, or when a fit meets non-finite parameters or gradients.

    Attributes
    ----------
    index : int or None
        Index of the offending sequence, when the failure can be attributed
        to one.
    """

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index
