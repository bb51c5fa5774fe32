"""Exception types shared across the package."""


class SpotmwError(Exception):
    """Base class for all package errors."""


class ConfigError(SpotmwError):
    """Invalid configuration value or combination of values."""


class InvalidRecordError(SpotmwError):
    """A contract record violates a hard invariant (e.g. non-positive wage)."""


class IngestionError(SpotmwError):
    """Input data cannot be ingested; carries row/column context when known."""

    def __init__(self, message, row=None, column=None):
        self.row = row
        self.column = column
        ctx = []
        if row is not None:
            ctx.append(f"row {row}")
        if column is not None:
            ctx.append(f"column {column!r}")
        if ctx:
            message = f"{message} ({', '.join(ctx)})"
        super().__init__(message)


class SchemaError(IngestionError):
    """A CSV file does not conform to its declared schema."""


class EstimationError(SpotmwError):
    """Estimation preconditions violated (empty cells, rank deficiency, ...)."""
