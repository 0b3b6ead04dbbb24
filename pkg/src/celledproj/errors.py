"""Exception hierarchy.

Every error raised on purpose by this package derives from
:class:`CelledProjError`, so the CLI can map families to exit codes.
"""


class CelledProjError(Exception):
    pass


class InputError(CelledProjError):
    """Malformed or missing input files (CLI exit code 3)."""


class ExtractionError(CelledProjError):
    """A feature cannot be computed for the given image (CLI exit code 4)."""


class ConfigError(CelledProjError, ValueError):
    """Invalid parameters or configuration (CLI exit code 2)."""


class EmptyImage(ExtractionError):
    pass


class ParseError(InputError):
    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class DimensionMismatch(InputError):
    pass


class BadMagic(InputError):
    pass


class CountMismatch(InputError):
    pass


class TruncatedFile(InputError):
    pass


class MissingFile(InputError):
    pass


class BadCellCount(ExtractionError):
    pass


class ImageTooSmall(ExtractionError):
    pass


class BadGrid(ExtractionError):
    pass


class LengthMismatch(CelledProjError, ValueError):
    pass


class EmptyTrainingSet(CelledProjError, ValueError):
    pass


class EmptyBatch(CelledProjError, ValueError):
    pass


class BadConfig(ConfigError):
    pass


class TooFewSamples(CelledProjError, ValueError):
    pass
