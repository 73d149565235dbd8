"""Input checks shared by the estimator wrappers and the CLI."""

import numpy as np

from .exceptions import DimensionMismatch, EmptyDataset, MaskLengthMismatch
from .masks import CompletionMask, as_labels
from .skeleton import MotionSequence


def check_sequences(X, n_joints=None):
    """Return ``X`` as a non-empty list of :class:`MotionSequence`."""
    if isinstance(X, MotionSequence):
        X = [X]
    X = list(X)
    if not X:
        raise EmptyDataset("expected at least one sequence")
    for i, s in enumerate(X):
        if not isinstance(s, MotionSequence):
            raise TypeError(f"item {i} is {type(s).__name__}, expected MotionSequence")
        if n_joints is not None and s.n_joints != n_joints:
            raise DimensionMismatch(f"sequence {i} has {s.n_joints} joints, expected {n_joints}")
    return X


def check_mask(mask, n_frames):
    """Validate one mask against a clip length and return it as a CompletionMask."""
    mask = mask if isinstance(mask, CompletionMask) else CompletionMask(as_labels(mask))
    if len(mask) != n_frames:
        raise MaskLengthMismatch(f"mask has {len(mask)} frames, sequence has {n_frames}")
    return mask


def check_positions(X):
    """Positions array ``(..., J, 3)`` as float64."""
    X = np.asarray(getattr(X, "positions", X), dtype=np.float64)
    if X.ndim < 2 or X.shape[-1] != 3:
        raise DimensionMismatch(f"expected (..., J, 3) positions, got {X.shape}")
    return X
