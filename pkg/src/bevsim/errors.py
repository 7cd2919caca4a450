"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes (config -> 1, data -> 2, anything
else -> 3), and the HTTP service maps them onto status codes, so raise
the most specific one that applies.
"""


class BevSimError(Exception):
    """Base class for all package errors."""


class ConfigError(BevSimError):
    """Invalid configuration: bad grid spec, malformed config file, bad ranges."""


class DataError(BevSimError):
    """Invalid or inconsistent input data (directories, label sets, ids)."""


class DataFormatError(DataError):
    """A file on disk does not conform to its documented binary/text format."""


class PlacementError(BevSimError):
    """Procedural scene generation could not place an object."""

    def __init__(self, class_name: str, attempts: int):
        self.class_name = class_name
        self.attempts = attempts
        super().__init__(
            f"could not place object of class {class_name!r} "
            f"after {attempts} attempts"
        )
