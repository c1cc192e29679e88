"""Exception types shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, DataError -> 3,
NonFiniteLossError -> 4.
"""


class CTMAError(Exception):
    pass


class ShapeMismatchError(CTMAError):
    pass


class ValueRangeError(CTMAError):
    pass


class BadFrameCountError(CTMAError):
    pass


class BadShapeError(CTMAError):
    pass


class BadThresholdError(CTMAError):
    pass


class NonBinaryError(CTMAError):
    pass


class ConfigError(CTMAError):
    pass


class DataError(CTMAError):
    pass


class LayoutError(DataError):
    pass


class MissingFileError(DataError):
    pass


class CorruptImageError(DataError):
    pass


class TooSmallError(DataError):
    pass


class CoverageGapError(CTMAError):
    pass


class NonFiniteLossError(CTMAError):
    pass


class CheckpointVersionError(CTMAError):
    pass


class EmptyHistoryError(CTMAError):
    pass
