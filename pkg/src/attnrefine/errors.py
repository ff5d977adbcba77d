"""Exception types shared by every module in the package."""


class AttnRefineError(Exception):
    """Base class for all library errors."""


class FormatError(AttnRefineError):
    """A file is structurally malformed (bad magic, version, or payload size)."""


class ValidationError(AttnRefineError):
    """A value violates a documented invariant (range, ordering, emptiness)."""


class ShapeError(AttnRefineError):
    """Array dimensions are incompatible with the requested operation."""


class FrameMismatchError(AttnRefineError):
    """Inputs that must refer to the same frame refer to different ones."""
