"""Exception hierarchy shared by every module."""


class SegTrackError(Exception):
    """Base class; the CLI turns these into structured error messages."""


class EmptyMask(SegTrackError, ValueError):
    pass


class EmptyInput(SegTrackError, ValueError):
    pass


class DimensionMismatch(SegTrackError, ValueError):
    pass


class BothEmpty(SegTrackError, ValueError):
    pass


class InvalidDims(SegTrackError, ValueError):
    pass


class OutOfRange(SegTrackError, IndexError):
    pass


class MaskOutOfBounds(SegTrackError, ValueError):
    pass


class GridMismatch(SegTrackError, ValueError):
    pass


class NoPositives(SegTrackError, ValueError):
    pass


class NonFinite(SegTrackError, ValueError):
    pass


class LabelOutOfRange(SegTrackError, ValueError):
    pass


class EmptyBatch(SegTrackError, ValueError):
    pass


class NotInitialized(SegTrackError, RuntimeError):
    pass


class EmptyGroundTruth(SegTrackError, ValueError):
    pass


class EmptyDataset(SegTrackError, ValueError):
    pass


class InvalidConfig(SegTrackError, ValueError):
    pass


class ParseError(SegTrackError, ValueError):
    """Malformed file content. ``where`` names the line or field at fault."""

    def __init__(self, message, where=None):
        self.where = where
        super().__init__(f"{where}: {message}" if where else message)


class SchemaError(ParseError):
    pass


class InconsistentIds(ParseError):
    pass


class IoError(SegTrackError, OSError):
    pass
