"""Exception hierarchy shared across the package."""


class StreamOptError(Exception):
    """Base class for all streamopt errors."""


class DataError(StreamOptError):
    """Malformed or inconsistent input data (files, records, schemes)."""


class InfeasibleError(StreamOptError):
    """The requested configuration cannot be satisfied on this instance."""
