"""Reconstruction and kinematics losses.

Predictions may be :class:`~motion_complete.tensor.Tensor` objects (training)
or plain arrays; ground truth is always plain arrays. Every loss is averaged
over the non-ignored frames of the batch and returns a scalar tensor.
"""

import numpy as np

from . import tensor as tn
from .exceptions import ShapeError
from .masks import IGNORED, as_labels
from .skeleton import GLOBAL, LOCAL, fk

ALPHA_REC = 1.0
ALPHA_K = 0.01


# -- quaternion ops on tensors --------------------------------------------------


def _components(q):
    return [q[..., i] for i in range(4)]


def tquat_mul(a, b):
    ax, ay, az, aw = _components(a)
    bx, by, bz, bw = _components(b)
    return tn.stack(
        [
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
            aw * bw - ax * bx - ay * by - az * bz,
        ],
        axis=-1,
    )


def tquat_conj(q):
    return q * np.array([-1.0, -1.0, -1.0, 1.0])


def _cross(a, b):
    ax, ay, az = (a[..., i] for i in range(3))
    bx, by, bz = (b[..., i] for i in range(3))
    return tn.stack([ay * bz - az * by, az * bx - ax * bz, ax * by - ay * bx], axis=-1)


def tquat_rotate(q, v):
    u = q[..., :3]
    w = q[..., 3:]
    t = _cross(u, v) * 2.0
    return v + w * t + _cross(u, t)


def tquat_normalize(q):
    return q / tn.sqrt((q * q).sum(axis=-1, keepdims=True))


# -- helpers ------------------------------------------------------------------------


def _frame_weights(mask, lead):
    labels = as_labels(mask)
    weights = (labels != IGNORED).astype(np.float64)
    weights = np.broadcast_to(weights, lead)
    total = weights.sum()
    if total == 0:
        raise ValueError("every frame is ignored")
    return weights, total


def _masked_mean(per_frame, mask):
    weights, total = _frame_weights(mask, per_frame.shape)
    return (per_frame * weights).sum() / float(total)


def _check(pred, gt, what):
    if tuple(pred.shape) != tuple(np.shape(gt)):
        raise ShapeError(f"{what}: prediction {pred.shape} vs target {np.shape(gt)}")


def align_hemisphere(pred_rot, gt_rot):
    """Flip target quaternions onto the prediction's hemisphere."""
    pred = getattr(pred_rot, "data", pred_rot)
    gt = np.asarray(gt_rot)
    return np.where(np.sum(pred * gt, axis=-1, keepdims=True) < 0.0, -gt, gt)


# -- losses -------------------------------------------------------------------------


def rec_loss(pred_pos, pred_rot, gt_pos, gt_rot, mask, coord=GLOBAL, stats=None):
    """L1 pose reconstruction.

    Per frame: L1 of the position error averaged over position-bearing joints
    (the root only in local coordinates) plus L1 of the quaternion error
    averaged over joints. Positions are divided by ``stats.std`` when given so
    both terms are of comparable size. ``pred_rot=None`` drops the rotation
    term (positions-only data).
    """
    pred_pos = tn.as_tensor(pred_pos)
    _check(pred_pos, gt_pos, "positions")
    gt_pos = np.asarray(gt_pos)
    scale = np.ones(gt_pos.shape[-2:]) if stats is None else stats.std
    if coord == LOCAL:
        pred_pos, gt_pos, scale = pred_pos[..., :1, :], gt_pos[..., :1, :], scale[:1]
    elif coord != GLOBAL:
        raise ValueError(f"unknown coord {coord!r}")
    diff = tn.tensor_abs(pred_pos - gt_pos) / scale
    per_frame = diff.sum(axis=(-2, -1)) / float(gt_pos.shape[-2])
    if pred_rot is not None:
        pred_rot = tn.as_tensor(pred_rot)
        _check(pred_rot, gt_rot, "rotations")
        target = align_hemisphere(pred_rot, gt_rot)
        rdiff = tn.tensor_abs(pred_rot - target)
        per_frame = per_frame + rdiff.sum(axis=(-2, -1)) / float(target.shape[-2])
    return _masked_mean(per_frame, mask)


def fk_positions(skel, root_pos, local_rots):
    """Differentiable forward kinematics; returns global positions ``(..., J, 3)``."""
    q = tquat_normalize(tn.as_tensor(local_rots))
    root_pos = tn.as_tensor(root_pos)
    if q.shape[-2] != skel.n_joints:
        raise ShapeError(f"{q.shape[-2]} joints vs skeleton {skel.n_joints}")
    rots = [q[..., 0, :]]
    pos = [root_pos]
    for j in range(1, skel.n_joints):
        p = skel.parents[j]
        rots.append(tquat_mul(rots[p], q[..., j, :]))
        pos.append(pos[p] + tquat_rotate(rots[p], skel.offsets[j]))
    return tn.stack(pos, axis=-2)


def ik_offsets(skel, global_pos, global_rots):
    """Differentiable bone vectors implied by global positions (joints 1..J-1)."""
    global_pos = tn.as_tensor(global_pos)
    q = tquat_normalize(tn.as_tensor(global_rots))
    if global_pos.shape[-2] != skel.n_joints or q.shape[-2] != skel.n_joints:
        raise ShapeError("joint count does not match skeleton")
    parents = np.array(skel.parents[1:], dtype=np.intp)
    child = np.arange(1, skel.n_joints)
    parent_inv = tquat_conj(q[..., parents, :])
    bones = global_pos[..., child, :] - global_pos[..., parents, :]
    return tquat_rotate(parent_inv, bones)


def fk_loss(pred_root, pred_local_rot, gt_global_pos, skel, mask, scale=1.0):
    """L1 between forward-kinematics positions of the prediction and the target.

    Per frame the L1 error is averaged over joints.
    """
    gpos = fk_positions(skel, pred_root, pred_local_rot)
    _check(gpos, gt_global_pos, "global positions")
    diff = tn.tensor_abs(gpos - np.asarray(gt_global_pos)) / scale
    per_frame = diff.sum(axis=(-2, -1)) / float(skel.n_joints)
    return _masked_mean(per_frame, mask)


def ik_loss(pred_global_pos, pred_global_rot, skel, mask, scale=1.0):
    """L1 between recovered bone offsets and the skeleton's, root excluded.

    Per frame the L1 error is averaged over the ``J - 1`` bones.
    """
    offsets = ik_offsets(skel, pred_global_pos, pred_global_rot)
    diff = tn.tensor_abs(offsets - skel.offsets[1:]) / scale
    per_frame = diff.sum(axis=(-2, -1)) / float(skel.n_joints - 1)
    return _masked_mean(per_frame, mask)


def total_loss(pred_pos, pred_rot, gt_pos, gt_rot, mask, skel=None, coord=GLOBAL, stats=None,
               alpha_rec=ALPHA_REC, alpha_k=ALPHA_K, gt_global_pos=None, kinematic_scale=1.0):
    """``alpha_rec * rec + alpha_k * kinematics`` plus the individual terms.

    The kinematics term is the FK loss in local coordinates and the IK loss in
    global coordinates; it is skipped entirely when ``alpha_k == 0`` or there
    are no rotations.
    """
    rec = rec_loss(pred_pos, pred_rot, gt_pos, gt_rot, mask, coord, stats)
    terms = {"rec": rec}
    total = rec if alpha_rec == 1.0 else rec * alpha_rec
    if alpha_k == 0 or pred_rot is None:
        return total, terms
    if skel is None:
        raise ValueError("kinematic losses need a skeleton")
    if coord == LOCAL:
        if gt_global_pos is None:
            gt_global_pos, _ = fk(skel, np.asarray(gt_pos)[..., 0, :], gt_rot)
        kin = fk_loss(tn.as_tensor(pred_pos)[..., 0, :], pred_rot, gt_global_pos, skel, mask,
                      kinematic_scale)
        terms["fk"] = kin
    else:
        kin = ik_loss(pred_pos, pred_rot, skel, mask, kinematic_scale)
        terms["ik"] = kin
    return total + kin * alpha_k, terms
