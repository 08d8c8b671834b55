"""Exception hierarchy.

Data problems (bad files, out-of-range samples, corrupt frames) derive from
``DataError`` so the CLI can map them to a single exit code.
"""

from __future__ import annotations


class SeizknnError(Exception):
    """Base class for every error raised by this package."""


class DataError(SeizknnError):
    """Input data could not be used."""


class ConfigError(SeizknnError, ValueError):
    """Invalid parameters or configuration."""


class MissingFile(DataError, FileNotFoundError):
    pass


class MalformedRow(DataError):
    def __init__(self, row_index: int, reason: str):
        self.row_index = row_index
        self.reason = reason
        super().__init__(f"row {row_index}: {reason}")


class UnknownClass(DataError):
    def __init__(self, value):
        self.value = value
        super().__init__(f"class label {value!r} outside 1..5")


class InvalidSpec(ConfigError):
    pass


class WindowTooShort(DataError):
    pass


class OutOfRange(DataError):
    """A sample does not fit the fixed-point word. Saturation is never silent."""

    def __init__(self, index: int, value: float, window_seq: int | None = None):
        self.index = index
        self.value = value
        self.window_seq = window_seq
        where = f"window {window_seq}, " if window_seq is not None else ""
        super().__init__(f"{where}sample {index} = {value!r} exceeds the fixed-point range")


class DimensionMismatch(DataError):
    pass


class ShapeMismatch(DataError):
    pass


class EmptyStore(DataError):
    pass


class EmptyNeighborSet(DataError):
    pass


class NotTrained(SeizknnError):
    pass


class CorruptSnapshot(DataError):
    def __init__(self, reason: str):
        self.reason = reason
        super().__init__(f"corrupt snapshot: {reason}")


class FrameError(DataError):
    pass


class BadSync(FrameError):
    pass


class BadCrc(FrameError):
    pass


class ShortFrame(FrameError):
    pass


class InsufficientClass(DataError):
    def __init__(self, label, have: int, need: int):
        self.label = label
        self.have = have
        self.need = need
        super().__init__(f"class {label}: have {have} windows, need {need}")


class InvalidParams(ConfigError):
    pass
