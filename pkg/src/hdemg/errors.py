"""Exception types shared across the toolkit."""


class HdemgError(Exception):
    """Base class for all toolkit errors."""


class InvalidInputError(HdemgError, ValueError):
    """Input violates a documented precondition (shape, range, finiteness)."""


class DegenerateDataError(HdemgError, ValueError):
    """Data has no usable spread (zero variance, single cluster, ...)."""


class InsufficientSpikesError(HdemgError, ValueError):
    """Too few spikes to compute the requested statistic."""


class DegenerateUpdateError(HdemgError, ArithmeticError):
    """A fixed-point update collapsed to the zero vector; retry with a new start."""


class FormatError(HdemgError, ValueError):
    """A file does not follow the expected binary layout.

    ``offset`` is the byte offset at which the problem was detected.
    """

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class CorruptFileError(FormatError):
    """A file follows the layout but its payload is truncated or inconsistent."""
