"""Exception types raised across the package.

Everything inherits from SlidetransError so callers can catch broadly,
while the CLI maps specific subclasses to exit codes.
"""


class SlidetransError(Exception):
    """Base class for all errors raised by this package."""


class GeometryError(SlidetransError):
    """Invalid geometric input (degenerate polygon, bad bbox, bad mask dims)."""


class InvalidRegionError(SlidetransError):
    """A region of interest lies outside the image it refers to."""


class UnknownImageError(SlidetransError):
    """An annotation store has no entry for the requested image id."""


class UnsupportedPairError(SlidetransError):
    """A backend does not handle the requested language pair."""


class UndefinedMetricError(SlidetransError):
    """A metric is undefined for the given input (e.g. empty reference)."""


class FontLoadError(SlidetransError):
    """A font file could not be loaded."""


class ContractViolationError(SlidetransError):
    """A backend returned output that violates its documented contract."""


class BackendError(SlidetransError):
    """Failure while talking to a backend."""

    def __init__(self, backend: str, message: str):
        self.backend = backend
        super().__init__(f"[{backend}] {message}")


class BackendUnreachableError(BackendError):
    """The remote endpoint could not be reached."""


class MalformedResponseError(BackendError):
    """The remote endpoint replied with an unparseable or incomplete payload."""


class DeckError(SlidetransError):
    """A presentation file is missing required parts or cannot be parsed."""


class LocatorMismatchError(DeckError):
    """A run locator no longer matches the document it was extracted from."""


class DatasetError(SlidetransError):
    """An evaluation dataset is missing files or malformed."""


class StageFailureError(SlidetransError):
    """A pipeline stage failed; carries the stage name for reporting."""

    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.cause = cause
        super().__init__(f"{stage} stage failed: {cause}")


class ConfigError(SlidetransError):
    """Bad configuration value or unresolvable backend selector."""
