"""Exception types shared across the package."""


class TetlapError(Exception):
    """Base class for package errors."""


class NumericalError(TetlapError):
    """A solver failed to meet its accuracy contract (non-convergence,
    right-hand side outside the operator image, indefinite matrix)."""


class UnsupportedGeometryError(TetlapError):
    """The mesh does not satisfy the geometric preconditions of the
    requested operation; the message names the violated condition."""
