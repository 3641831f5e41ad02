"""Exception types raised across the package."""


class MantaeError(Exception):
    """Base class for all package errors."""


class ShapeError(MantaeError, ValueError):
    pass


class SizeError(MantaeError, ValueError):
    pass


class ModeError(MantaeError, ValueError):
    pass


class PlanError(MantaeError, ValueError):
    pass


class RankError(MantaeError, ValueError):
    pass


class ConfigError(MantaeError, ValueError):
    pass


class DegenerateInputError(MantaeError, ValueError):
    pass


class UsageError(MantaeError, RuntimeError):
    pass


class DivergenceError(MantaeError, RuntimeError):
    def __init__(self, message, epoch=None, minibatch=None):
        super().__init__(message)
        self.epoch = epoch
        self.minibatch = minibatch


class FormatError(MantaeError, ValueError):
    """Malformed tensor or checkpoint file. ``offset`` is the byte position."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class TruncationError(FormatError):
    pass


class InputError(MantaeError, ValueError):
    """A required input file is missing or inconsistent with its companions."""
