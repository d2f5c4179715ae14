"""Exception hierarchy shared across the package."""


class MedicError(Exception):
    """Base class for all errors raised by this package."""


class SchemaError(MedicError):
    """Schema description is malformed or inconsistent with the data file."""


class DataError(MedicError):
    """Data file content violates the declared schema."""


class ModelError(MedicError):
    """Model parameters are inconsistent (shapes, stage preconditions)."""


class TrainingError(MedicError):
    """Training aborted (non-finite loss, invalid configuration)."""
