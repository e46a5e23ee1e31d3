"""Exception hierarchy.

Everything raised on bad input derives from :class:`ValidationError`, which the
CLI maps to exit code 2. I/O problems surface as ``OSError`` (exit code 3).
"""


class OodGateError(Exception):
    """Base class for all package errors."""


class ValidationError(OodGateError, ValueError):
    """Input violates a documented precondition."""


# imaging
class UnsupportedFormatError(ValidationError):
    pass


class CorruptStreamError(ValidationError):
    pass


class ZeroDimensionError(ValidationError):
    pass


class NotColorError(ValidationError):
    pass


class TooSmallError(ValidationError):
    pass


# features
class TooNarrowError(ValidationError):
    pass


class DegenerateFitError(ValidationError):
    pass


# forest / attribution
class SingleClassError(ValidationError):
    pass


class TooFewSamplesError(ValidationError):
    pass


class SchemaMismatchError(ValidationError):
    pass


class TooManyFeaturesError(ValidationError):
    pass


class EmptySampleError(ValidationError):
    pass


# evaluation
class ClassTooSmallError(ValidationError):
    pass


class EmptyInputError(ValidationError):
    pass


class NoModelsError(ValidationError):
    pass


# persistence / manifests / benchmark
class ModelFormatError(ValidationError):
    pass


class ChecksumMismatchError(ModelFormatError):
    pass


class VersionUnsupportedError(ModelFormatError):
    pass


class DuplicatePathError(ValidationError):
    pass


class BadLabelError(ValidationError):
    pass


class BadSplitError(ValidationError):
    pass


class MissingFileError(ValidationError, FileNotFoundError):
    pass


class MissingModelError(ValidationError, FileNotFoundError):
    pass


class EmptyManifestError(ValidationError):
    pass
