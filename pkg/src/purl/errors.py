"""Exception types shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2,
DataFormatError -> 3, NumericError -> 4.
"""


class PurlError(Exception):
    """Base class for all package errors."""


class ConfigError(PurlError):
    """Invalid or inconsistent configuration."""


class DimensionError(PurlError):
    """Array shapes incompatible with the requested operation."""


class NumericError(PurlError):
    """Non-finite values encountered during computation."""

    def __init__(self, message: str, layer_index: int | None = None):
        super().__init__(message)
        self.layer_index = layer_index


class DegenerateLayerError(PurlError):
    """Layer has no unmasked weights left, so weight statistics are undefined."""


class EpisodeDoneError(PurlError):
    """step() called on an environment whose episode already finished."""


class DataFormatError(PurlError):
    """Malformed data or checkpoint file."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset
