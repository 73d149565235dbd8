"""Vectorised quaternion algebra.

Quaternions are stored as ``(..., 4)`` float64 arrays in ``(x, y, z, w)``
order with ``w`` the scalar part. Every function broadcasts over leading
dimensions.
"""

import numpy as np

from .exceptions import DegenerateQuaternion

IDENTITY = np.array([0.0, 0.0, 0.0, 1.0])


def identity(shape=()):
    return np.broadcast_to(IDENTITY, tuple(shape) + (4,)).copy()


def quat_normalize(q):
    q = np.asarray(q, dtype=np.float64)
    norm = np.linalg.norm(q, axis=-1, keepdims=True)
    if np.any(norm == 0.0) or not np.all(np.isfinite(norm)):
        raise DegenerateQuaternion("cannot normalize a zero-norm quaternion")
    return q / norm


def quat_conj(q):
    q = np.asarray(q, dtype=np.float64)
    return np.concatenate([-q[..., :3], q[..., 3:]], axis=-1)


def quat_mul(a, b):
    """Hamilton product ``a * b``: rotation ``b`` followed by ``a``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    ax, ay, az, aw = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    bx, by, bz, bw = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    return np.stack(
        [
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
            aw * bw - ax * bx - ay * by - az * bz,
        ],
        axis=-1,
    )


def quat_rotate_vec(q, v):
    q = np.asarray(q, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    u = q[..., :3]
    w = q[..., 3:]
    t = 2.0 * np.cross(u, v)
    return v + w * t + np.cross(u, t)


def quat_dot(a, b):
    return np.sum(np.asarray(a) * np.asarray(b), axis=-1)


def quat_align(reference, q):
    """Flip ``q`` onto the hemisphere of ``reference`` (dot >= 0)."""
    q = np.asarray(q, dtype=np.float64)
    sign = np.where(quat_dot(reference, q) < 0.0, -1.0, 1.0)
    return q * sign[..., None]


def align_sequence(q, axis=0):
    """Make consecutive quaternions along ``axis`` hemisphere-continuous."""
    q = np.moveaxis(np.asarray(q, dtype=np.float64), axis, 0).copy()
    for t in range(1, q.shape[0]):
        q[t] = quat_align(q[t - 1], q[t])
    return np.moveaxis(q, 0, axis)


def from_axis_angle(axis, angle):
    axis = np.asarray(axis, dtype=np.float64)
    angle = np.asarray(angle, dtype=np.float64)
    axis = axis / np.linalg.norm(axis, axis=-1, keepdims=True)
    half = 0.5 * angle[..., None]
    return np.concatenate([axis * np.sin(half), np.cos(half)], axis=-1)


def to_axis_angle(q):
    """Return ``(axis, angle)`` with angle in ``[0, pi]``."""
    q = quat_normalize(q)
    q = np.where(q[..., 3:] < 0.0, -q, q)
    s = np.linalg.norm(q[..., :3], axis=-1)
    angle = 2.0 * np.arctan2(s, q[..., 3])
    safe = np.where(s > 1e-12, s, 1.0)
    axis = np.where(s[..., None] > 1e-12, q[..., :3] / safe[..., None], [1.0, 0.0, 0.0])
    return axis, angle


def angle_between(a, b):
    """Geodesic rotation angle between two unit quaternions."""
    d = np.clip(np.abs(quat_dot(a, b)), 0.0, 1.0)
    return 2.0 * np.arccos(d)


def to_matrix(q):
    q = np.asarray(q, dtype=np.float64)
    x, y, z, w = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    m = np.stack(
        [
            1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w),
            2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w),
            2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y),
        ],
        axis=-1,
    )
    return m.reshape(q.shape[:-1] + (3, 3))
