"""Exception types shared across the package."""


class DataError(ValueError):
    """Malformed input data: CSV schema violations, bad bank files, absent coverage."""


class NumericsError(RuntimeError):
    """Numerical failure, e.g. a non-finite loss during training."""
