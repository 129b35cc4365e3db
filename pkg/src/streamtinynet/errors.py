"""Exception hierarchy shared by every module."""


class StreamTinyNetError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(StreamTinyNetError, ValueError):
    """A layer, model, or engine was configured inconsistently."""


class InputError(StreamTinyNetError, ValueError):
    """Runtime input (frames, labels, datasets) does not match expectations."""


class StateError(StreamTinyNetError, RuntimeError):
    """An operation was attempted on an object in the wrong state."""


class FormatError(StreamTinyNetError, ValueError):
    """A binary file is malformed.

    ``offset`` is the byte position at which the problem was detected.
    """

    def __init__(self, message, offset=None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)


class ShapeError(FormatError):
    """A serialized tensor does not match the shape its config implies."""

    def __init__(self, message, layer=None, offset=None):
        self.layer = layer
        super().__init__(message, offset)
