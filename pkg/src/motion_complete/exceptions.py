"""Exception types raised across the package."""


class MotionCompleteError(Exception):
    """Base class for all package errors."""


class ShapeError(MotionCompleteError, ValueError):
    pass


class DegenerateQuaternion(MotionCompleteError, ValueError):
    pass


class BvhSyntaxError(MotionCompleteError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class UnsupportedChannel(BvhSyntaxError):
    pass


class SequenceTooShort(MotionCompleteError, ValueError):
    pass


class EmptyDataset(MotionCompleteError, ValueError):
    pass


class NoKeyframes(MotionCompleteError, ValueError):
    pass


class NoPrecedingKeyframe(NoKeyframes):
    pass


class DoesNotFit(MotionCompleteError, ValueError):
    pass


class MaskLengthMismatch(ShapeError):
    pass


class DimensionMismatch(ShapeError):
    pass


class MissingStats(MotionCompleteError, ValueError):
    pass


class TooShort(MotionCompleteError, ValueError):
    pass


class NonScalarLoss(MotionCompleteError, ValueError):
    pass


class NumericDivergence(MotionCompleteError, FloatingPointError):
    """Training produced a non-finite loss."""


class CheckpointError(MotionCompleteError, ValueError):
    """A checkpoint file is malformed or inconsistent with its config."""
