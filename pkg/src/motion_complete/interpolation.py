"""Interpolation and zero-velocity baselines.

:func:`fill_unknown` also produces the prefilled input the completion model
consumes.
"""

import numpy as np
from sklearn.base import BaseEstimator

from . import quaternion as quat
from .exceptions import NoKeyframes, NoPrecedingKeyframe
from .masks import KEYFRAME, UNKNOWN, as_labels, broadcast_masks
from .skeleton import GLOBAL, LOCAL, to_global, to_local

SLERP_LERP_THRESHOLD = 1.0 - 1e-7


def lerp(a, b, t):
    t = np.asarray(t, dtype=np.float64)
    return (1.0 - t) * a + t * b


def slerp(q0, q1, t):
    """Spherical interpolation, shortest arc. Broadcasts over leading dims."""
    q0 = np.asarray(q0, dtype=np.float64)
    q1 = quat.quat_align(q0, q1)
    t = np.asarray(t, dtype=np.float64)[..., None]
    dot = np.clip(quat.quat_dot(q0, q1), -1.0, 1.0)[..., None]
    theta = np.arccos(dot)
    sin_theta = np.sin(theta)
    near = dot > SLERP_LERP_THRESHOLD
    safe = np.where(near, 1.0, sin_theta)
    w0 = np.where(near, 1.0 - t, np.sin((1.0 - t) * theta) / safe)
    w1 = np.where(near, t, np.sin(t * theta) / safe)
    return quat.quat_normalize(w0 * q0 + w1 * q1)


def _flanking_keyframes(labels):
    """For each frame: index of the previous and next keyframe (-1 if none)."""
    n = len(labels)
    prev = np.full(n, -1)
    nxt = np.full(n, -1)
    last = -1
    for t in range(n):
        if labels[t] == KEYFRAME:
            last = t
        prev[t] = last
    last = -1
    for t in range(n - 1, -1, -1):
        if labels[t] == KEYFRAME:
            last = t
        nxt[t] = last
    return prev, nxt


def fill_arrays(positions, rotations, labels):
    """Array form of :func:`fill_unknown`; time is axis ``-3``.

    Leading batch axes are allowed; one label row is shared by the batch.
    """
    labels = as_labels(labels)
    if not np.any(labels == KEYFRAME):
        raise NoKeyframes("mask has no keyframes")
    positions = np.array(positions, dtype=np.float64)
    rotations = np.array(rotations, dtype=np.float64)
    prev, nxt = _flanking_keyframes(labels)
    t = np.flatnonzero(labels == UNKNOWN)
    if t.size == 0:
        return positions, rotations
    a = np.where(prev[t] < 0, nxt[t], prev[t])
    b = np.where(nxt[t] < 0, a, nxt[t])
    span = np.where(b > a, b - a, 1)
    w = ((t - a) / span)[:, None]
    positions[..., t, :, :] = lerp(positions[..., a, :, :], positions[..., b, :, :], w[..., None])
    rotations[..., t, :, :] = slerp(rotations[..., a, :, :], rotations[..., b, :, :], w)
    return positions, rotations


def fill_unknown(seq, mask):
    """Fill unknown frames by LERP (positions) and SLERP (rotations).

    Unknown frames before the first or after the last keyframe hold the
    nearest keyframe. Keyframe and ignored frames are returned untouched.
    """
    labels = as_labels(mask)
    if len(labels) != seq.n_frames:
        raise ValueError(f"mask has {len(labels)} frames, sequence has {seq.n_frames}")
    positions, rotations = fill_arrays(seq.positions, seq.rotations, labels)
    out = seq.copy()
    out.positions, out.rotations = positions, rotations
    return out


def zero_velocity(seq, mask):
    """Hold the most recent keyframe through every unknown frame."""
    labels = as_labels(mask)
    if len(labels) != seq.n_frames:
        raise ValueError(f"mask has {len(labels)} frames, sequence has {seq.n_frames}")
    out = seq.copy()
    prev, _ = _flanking_keyframes(labels)
    for t in np.flatnonzero(labels == UNKNOWN):
        if prev[t] < 0:
            raise NoPrecedingKeyframe(f"unknown frame {t} has no preceding keyframe")
        out.positions[t] = seq.positions[prev[t]]
        out.rotations[t] = seq.rotations[prev[t]]
    return out


def interpolate(seq, mask, coord=None, skeleton=None):
    """Interpolation baseline, optionally run in another coordinate system.

    With ``coord=None`` interpolation happens in the sequence's own
    coordinates; otherwise the sequence is converted, filled and converted
    back.
    """
    if coord is None or coord == seq.coord:
        return fill_unknown(seq, mask)
    if coord == LOCAL:
        return to_global(fill_unknown(to_local(seq, skeleton), mask), skeleton)
    if coord == GLOBAL:
        return to_local(fill_unknown(to_global(seq, skeleton), mask), skeleton)
    raise ValueError(f"unknown coord {coord!r}")


class _Baseline(BaseEstimator):
    """Stateless predictor following the estimator calling convention."""

    def fit(self, X=None, y=None):
        return self

    def predict(self, X, masks):
        if hasattr(X, "positions"):
            return self._complete(X, masks)
        X = list(X)
        return [self._complete(s, m) for s, m in zip(X, broadcast_masks(masks, len(X)))]


class InterpolationBaseline(_Baseline):
    def __init__(self, coord=None, skeleton=None):
        self.coord = coord
        self.skeleton = skeleton

    def _complete(self, seq, mask):
        return interpolate(seq, mask, self.coord, self.skeleton)


class ZeroVelocityBaseline(_Baseline):
    def _complete(self, seq, mask):
        return zero_velocity(seq, mask)
