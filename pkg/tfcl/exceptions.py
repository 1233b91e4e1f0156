"""Custom exception classes for the tfcl package.

Every error raised on purpose by tfcl derives from :class:`TFCLError`, so
callers and the command-line front end can catch them with one clause.
"""

from typing import Optional


class TFCLError(Exception):
    """Base exception class for all tfcl errors.

    Attributes:
        message: Human-readable error message.
    """

    def __init__(self, message: str) -> None:
        """Initialize the TFCLError.

        Args:
            message: Human-readable error message.
        """
        self.message = message
        super().__init__(self.message)


class ConfigError(TFCLError):
    """Exception raised for configuration file errors.

    Examples:
        - Configuration file not found
        - Unsupported configuration file format
        - Configuration file cannot be parsed
    """


class ValidationError(TFCLError):
    """Exception raised when an input value is invalid.

    This covers both configuration values and numerical inputs handed to
    the library functions.

    Examples:
        - Non-finite entries in a weight matrix
        - Shape or dimension mismatch between arguments
        - Group count k outside 1 <= k < d + T
        - Unknown key in a configuration section
        - Step constant C not larger than the Lipschitz constant
    """


class DegenerateInputError(ValidationError):
    """Exception raised when a Laplacian is identically zero.

    The closed-form U-update needs a nonzero graph. Solvers catch this
    case themselves and freeze U for that iteration.
    """


class SpectralError(TFCLError):
    """Exception raised by the symmetric eigensolver.

    Examples:
        - Input matrix is not symmetric within tolerance
        - LAPACK failed to converge
    """


class DatasetError(TFCLError):
    """Exception raised for dataset content problems.

    Examples:
        - Malformed CSV rows (the message carries line numbers)
        - Unknown or missing columns
        - A task without both classes where an AUC loss needs them
        - No users left after filtering
    """


class ConvergenceError(TFCLError):
    """Exception raised when a fit produces a non-finite objective.

    Attributes:
        message: Human-readable error message.
        iteration: Index of the iteration that diverged, if known.
    """

    def __init__(self, message: str, iteration: Optional[int] = None) -> None:
        """Initialize the ConvergenceError.

        Args:
            message: Human-readable error message.
            iteration: Index of the iteration that diverged.
        """
        self.iteration = iteration
        super().__init__(message)
