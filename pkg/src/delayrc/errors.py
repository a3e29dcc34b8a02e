"""Exception types shared across the package."""


class ParameterError(ValueError):
    """Invalid argument values or mismatched dimensions."""


class FormatError(ValueError):
    """Malformed input file; carries the offending line number when known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class SingularSystemError(ArithmeticError):
    """Normal equations are singular; retry with a positive ridge penalty."""


class UndefinedMetricError(ValueError):
    """Metric has no defined value for the given data (e.g. all-zero target)."""
