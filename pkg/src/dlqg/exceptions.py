"""Exception hierarchy.

Every error raised on purpose derives from :class:`DlqgError`, so callers
(the CLI in particular) can map them to exit codes.
"""


class DlqgError(Exception):
    """Base class for all package errors."""


class NotRegular(DlqgError):
    """The pencil sE - A is singular (det is the zero polynomial)."""


class AlreadyShifted(DlqgError):
    """discount_transform was applied to an already discounted system."""


class IllPosed(DlqgError):
    """White noise would enter the algebraic part of the system."""


class NotStabilizable(DlqgError):
    """The rank condition fails somewhere in the closed right half-plane."""

    def __init__(self, msg, failing_lambda=None):
        super().__init__(msg)
        self.failing_lambda = failing_lambda


class NoStabilizingSolution(DlqgError):
    """The Riccati equation has no stabilizing solution."""


class SingularR(DlqgError):
    """The input weight is singular where an invertible one is needed."""


class Infeasible(DlqgError):
    """The KYP inequality has no solution; the optimal cost is unbounded below."""


class Unsupported(DlqgError):
    """The instance falls outside what the Lur'e solver backends handle."""


class InconsistentControl(DlqgError):
    """The chosen control law violates or cannot resolve the algebraic constraints."""


class EnsembleNotConverged(DlqgError):
    """Terminal second moment exceeds the convergence threshold."""
