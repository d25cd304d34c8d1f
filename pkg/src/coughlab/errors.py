"""Exception hierarchy.

Every error carries the process exit code the CLI maps it to:
1 usage/config, 2 data, 3 numeric failure.
"""


class CoughLabError(Exception):
    exit_code = 1


class ConfigError(CoughLabError, ValueError):
    exit_code = 1


class DataError(CoughLabError):
    exit_code = 2


class NumericError(CoughLabError, ArithmeticError):
    exit_code = 3


# audio
class WavFormatError(DataError):
    """Malformed RIFF/WAVE container."""


class UnsupportedCodecError(DataError):
    """Valid WAV but an encoding we do not decode."""


class EmptyAudioError(DataError):
    pass


class UpsampleUnsupportedError(ConfigError):
    pass


# features
class FilterbankError(ConfigError):
    pass


class FeatureFileError(DataError):
    pass


# net
class ShapeError(ConfigError):
    pass


class NonFiniteInputError(NumericError):
    pass


class TrainingDivergedError(NumericError):
    def __init__(self, epoch, message=None):
        self.epoch = epoch
        super().__init__(message or f"training diverged at epoch {epoch} (non-finite loss)")


class CheckpointError(DataError):
    pass


class CheckpointIntegrityError(CheckpointError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class CheckpointShapeError(CheckpointError):
    pass


# dataset
class ManifestError(DataError):
    pass


class StratificationError(ConfigError):
    pass


# eval
class MetricError(DataError, ValueError):
    """A metric is undefined for the given records."""


class DegenerateRocError(MetricError):
    pass


class LabelError(DataError, ValueError):
    pass
