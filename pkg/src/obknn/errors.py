"""Exception types raised across the package."""

from __future__ import annotations


class ObknnError(Exception):
    """Base class for every error raised by obknn."""


class DimensionError(ObknnError, ValueError):
    """Vectors of incompatible dimension were combined."""


class DegenerateInputError(ObknnError, ValueError):
    """Input is well-typed but mathematically unusable (e.g. a zero-norm vector under cosine)."""


class DegenerateQueryError(DegenerateInputError):
    """A TF-IDF query shares no vocabulary with the index."""


class LabelError(ObknnError, ValueError):
    """Unknown label name or out-of-range label id."""


class DistributionError(ObknnError, ValueError):
    """A vector that should be a probability distribution is not one."""


class EmptyDatastoreError(ObknnError):
    """Query issued against a datastore with no live entries."""


class EmptyNeighborSetError(ObknnError, ValueError):
    """A label distribution was requested from zero neighbors."""


class NotFoundError(ObknnError, LookupError):
    """Entry id does not exist in the datastore."""


class FormatError(ObknnError):
    """A datastore file failed validation while loading."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class ParseError(ObknnError):
    """A JSON Lines input file could not be ingested."""

    def __init__(self, path, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.path = str(path)
        self.line = line
