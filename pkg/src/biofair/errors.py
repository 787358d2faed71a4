"""Exception hierarchy. Every error raised on bad input derives from BiofairError."""

from __future__ import annotations


class BiofairError(ValueError):
    """Base class for input, configuration and computation errors."""


class SchemaError(BiofairError):
    """Attribute schema is malformed, or a score file is missing a required column."""


class RowError(BiofairError):
    """A single row of a score file is invalid."""

    def __init__(self, line: int, message: str):
        self.line = line
        super().__init__(f"line {line}: {message}")


class DatasetError(BiofairError):
    """The dataset as a whole is unusable (e.g. empty)."""


class PartitionError(BiofairError):
    pass


class CurveError(BiofairError):
    """A rate curve cannot be built (e.g. one label is missing)."""


class ParameterError(BiofairError):
    pass


class CriterionError(BiofairError):
    """A fairness criterion is undefined for every cell."""


class SpecError(BiofairError):
    """Invalid synthetic population spec."""
