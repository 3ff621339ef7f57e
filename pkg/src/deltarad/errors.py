"""Exception hierarchy.

Every error carries the CLI exit code of its category: 2 for configuration
problems, 3 for bad or missing input data, 4 for numerical failures.
"""


class DeltaRadError(Exception):
    exit_code = 1


class ConfigError(DeltaRadError):
    exit_code = 2


class DataError(DeltaRadError):
    exit_code = 3


class NumericalError(DeltaRadError):
    exit_code = 4


# imaging-io
class NiftiError(DataError):
    pass


class BadMagicError(NiftiError):
    pass


class BigEndianError(NiftiError):
    pass


class UnsupportedDatatypeError(NiftiError):
    pass


class UnsupportedDimensionsError(NiftiError):
    pass


class TruncatedDataError(NiftiError):
    pass


class NonPositiveSpacingError(NiftiError):
    pass


class NonFiniteDataError(NiftiError):
    pass


class GridMismatchError(DataError):
    pass


class InvalidMaskError(DataError):
    pass


class ManifestError(DataError):
    pass


class SchemaError(ManifestError):
    pass


class DuplicateCourseError(ManifestError):
    pass


class MissingF1Error(ManifestError):
    pass


class OutcomeError(DataError):
    pass


class ParseError(OutcomeError):
    pass


class NegativeTimeError(OutcomeError):
    pass


class NonBinaryEventError(OutcomeError):
    pass


# preprocess / features
class EmptyMaskError(DataError):
    pass


class EmptyReferenceMaskError(EmptyMaskError):
    pass


class ZeroMedianError(DataError):
    pass


class DegenerateOutputGridError(DataError):
    pass


class NoValidPairsError(DataError):
    pass


class NormalizationInputMissingError(DataError):
    pass


# stability / selection / delta
class LengthMismatchError(DataError):
    pass


class BothConstantError(NumericalError):
    pass


class TooFewCoursesError(DataError):
    pass


class MisalignedRowsError(DataError):
    pass


class NameMismatchError(DataError):
    pass


class ZeroBaselineError(DataError):
    pass


class EmptyCohortError(DataError):
    pass


# survival
class EmptySampleError(DataError):
    pass


class NoEventsError(DataError):
    pass


class SingularError(NumericalError):
    pass


class RankDeficientError(NumericalError):
    pass


class OutOfRangeError(DataError):
    pass


class ConstantColumnError(DataError):
    pass


class TooFewSamplesError(DataError):
    pass


class NoValidCutpointError(DataError):
    pass


class NoComparablePairsError(DataError):
    pass


# phantom / pipeline
class LesionExceedsGridError(ConfigError):
    pass


class MissingUpstreamArtifactError(DataError):
    pass


class StageError(DeltaRadError):
    """A pipeline stage failed; wraps the underlying error with the stage name."""

    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}' failed: {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 1)
