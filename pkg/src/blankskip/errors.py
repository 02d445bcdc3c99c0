"""Exception types shared across the package."""


class BlankskipError(Exception):
    """Base class for all package errors."""


class ContractViolation(BlankskipError, ValueError):
    """An operation was called with arguments violating its preconditions."""


class EmptyInputError(BlankskipError, ValueError):
    """Decoding was requested on an empty frame sequence."""


class DataFormatError(BlankskipError, ValueError):
    """A model/trace file is malformed. Carries the byte offset of the problem."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class MetricUndefinedError(BlankskipError, ZeroDivisionError):
    """A metric was requested with a zero denominator (no calls / no audio)."""


class InstanceTooLargeError(BlankskipError, ValueError):
    """The exhaustive oracle refused an instance above its work guard."""
