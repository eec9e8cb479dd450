"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class DepthCoeffError(Exception):
    exit_code = 1


class InvalidInputError(DepthCoeffError, ValueError):
    exit_code = 10


class RangeError(InvalidInputError):
    exit_code = 11


class MissingPixelError(InvalidInputError):
    exit_code = 12


class NormalizationError(InvalidInputError):
    exit_code = 13


class EmptyMaskError(DepthCoeffError, ValueError):
    exit_code = 14


class InvalidGTError(InvalidInputError):
    exit_code = 15


class FormatError(DepthCoeffError):
    exit_code = 16


class DegenerateInputError(InvalidInputError):
    exit_code = 17


class InvalidSpecError(InvalidInputError):
    exit_code = 18


class InvalidPatternError(InvalidInputError):
    exit_code = 19


class ConfigurationError(DepthCoeffError, ValueError):
    exit_code = 20


class TrainingDivergedError(DepthCoeffError, RuntimeError):
    exit_code = 21

    def __init__(self, epoch: int, loss: float):
        super().__init__(f"training diverged at epoch {epoch} (loss={loss})")
        self.epoch = epoch
        self.loss = loss
