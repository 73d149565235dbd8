"""Skeletons, poses, motion sequences and forward/inverse kinematics."""

from dataclasses import dataclass, field, replace

import numpy as np

from . import quaternion as quat
from .exceptions import ShapeError

ROOT = -1
LOCAL = "local"
GLOBAL = "global"


@dataclass(frozen=True)
class Skeleton:
    """Joint hierarchy with constant rest offsets.

    ``parents[0]`` is :data:`ROOT` and every other parent index precedes its
    child, so a single forward sweep visits parents before children.
    """

    parents: tuple
    offsets: np.ndarray
    names: tuple = ()

    def __post_init__(self):
        parents = tuple(int(p) for p in self.parents)
        offsets = np.array(self.offsets, dtype=np.float64)
        if offsets.shape != (len(parents), 3):
            raise ShapeError(f"offsets must be ({len(parents)}, 3), got {offsets.shape}")
        if not parents or parents[0] != ROOT:
            raise ShapeError("joint 0 must be the root")
        for j, p in enumerate(parents[1:], start=1):
            if not 0 <= p < j:
                raise ShapeError(f"joint {j} has parent {p}; parents must precede children")
        offsets[0] = 0.0
        offsets.setflags(write=False)
        names = tuple(self.names) or tuple(f"joint{j}" for j in range(len(parents)))
        object.__setattr__(self, "parents", parents)
        object.__setattr__(self, "offsets", offsets)
        object.__setattr__(self, "names", names)

    @property
    def n_joints(self):
        return len(self.parents)

    def is_depth_first(self):
        """True when joint indices follow a depth-first preorder walk."""
        return depth_first_order(self.parents) == list(range(self.n_joints))

    def bone_lengths(self):
        return np.linalg.norm(self.offsets, axis=-1)

    def __eq__(self, other):
        if not isinstance(other, Skeleton):
            return NotImplemented
        return (
            self.parents == other.parents
            and self.names == other.names
            and np.array_equal(self.offsets, other.offsets)
        )

    __hash__ = None


def depth_first_order(parents):
    """Preorder walk of the joint tree, children in index order."""
    children = {j: [] for j in range(len(parents))}
    for j, p in enumerate(parents):
        if p != ROOT:
            children[p].append(j)
    order, stack = [], [0]
    while stack:
        j = stack.pop()
        order.append(j)
        stack.extend(reversed(children[j]))
    return order


@dataclass
class Pose:
    positions: np.ndarray
    rotations: np.ndarray


@dataclass
class MotionSequence:
    """A clip of ``T`` frames over ``J`` joints.

    In ``local`` coordinates ``positions[:, 0]`` is the root position and the
    remaining rows hold bone offsets; rotations are parent-relative. In
    ``global`` coordinates both arrays are world-space.
    """

    positions: np.ndarray
    rotations: np.ndarray
    coord: str = GLOBAL
    frame_rate: float = 30.0
    skeleton: Skeleton = field(default=None, repr=False)

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64)
        self.rotations = np.asarray(self.rotations, dtype=np.float64)
        if self.positions.ndim != 3 or self.positions.shape[-1] != 3:
            raise ShapeError(f"positions must be (T, J, 3), got {self.positions.shape}")
        if self.rotations.shape != self.positions.shape[:2] + (4,):
            raise ShapeError(
                f"rotations must be {self.positions.shape[:2] + (4,)}, got {self.rotations.shape}"
            )
        if self.coord not in (LOCAL, GLOBAL):
            raise ValueError(f"coord must be 'local' or 'global', got {self.coord!r}")
        if self.skeleton is not None and self.skeleton.n_joints != self.n_joints:
            raise ShapeError("skeleton joint count does not match the sequence")

    @property
    def n_frames(self):
        return self.positions.shape[0]

    @property
    def n_joints(self):
        return self.positions.shape[1]

    def __len__(self):
        return self.n_frames

    def __getitem__(self, t):
        if isinstance(t, slice):
            return replace(self, positions=self.positions[t], rotations=self.rotations[t])
        return Pose(self.positions[t], self.rotations[t])

    def copy(self):
        return replace(self, positions=self.positions.copy(), rotations=self.rotations.copy())

    @property
    def root_positions(self):
        return self.positions[:, 0]


def _check_joints(skel, n, what):
    if n != skel.n_joints:
        raise ShapeError(f"{what} has {n} joints, skeleton has {skel.n_joints}")


def fk(skel, root_pos, local_rots, offsets=None):
    """Forward kinematics. Broadcasts over leading dimensions.

    Returns ``(global_pos, global_rots)`` shaped ``(..., J, 3)`` and
    ``(..., J, 4)``. ``offsets`` overrides the skeleton's rest offsets and
    may itself carry leading dimensions.
    """
    local_rots = np.asarray(local_rots, dtype=np.float64)
    root_pos = np.asarray(root_pos, dtype=np.float64)
    _check_joints(skel, local_rots.shape[-2], "local_rots")
    offsets = skel.offsets if offsets is None else np.asarray(offsets, dtype=np.float64)
    if offsets.shape[-2:] != (skel.n_joints, 3):
        raise ShapeError(f"offsets must end in ({skel.n_joints}, 3), got {offsets.shape}")
    lead = np.broadcast_shapes(local_rots.shape[:-2], root_pos.shape[:-1], offsets.shape[:-2])
    gpos = np.empty(lead + (skel.n_joints, 3))
    grot = np.empty(lead + (skel.n_joints, 4))
    gpos[..., 0, :] = root_pos
    grot[..., 0, :] = local_rots[..., 0, :]
    for j in range(1, skel.n_joints):
        p = skel.parents[j]
        grot[..., j, :] = quat.quat_mul(grot[..., p, :], local_rots[..., j, :])
        gpos[..., j, :] = gpos[..., p, :] + quat.quat_rotate_vec(grot[..., p, :], offsets[..., j, :])
    return gpos, grot


def ik(global_pos, global_rots, skel):
    """Global-to-local coordinate transform; the exact inverse of :func:`fk`.

    Returns ``(root_pos, local_rots, offsets)`` where ``offsets`` are the bone
    vectors implied by the global positions (row 0 is zero).
    """
    global_pos = np.asarray(global_pos, dtype=np.float64)
    global_rots = np.asarray(global_rots, dtype=np.float64)
    _check_joints(skel, global_pos.shape[-2], "global_pos")
    _check_joints(skel, global_rots.shape[-2], "global_rots")
    parents = np.array(skel.parents[1:], dtype=np.intp)
    parent_inv = quat.quat_conj(global_rots[..., parents, :])
    local_rots = global_rots.copy()
    local_rots[..., 1:, :] = quat.quat_mul(parent_inv, global_rots[..., 1:, :])
    offsets = np.zeros_like(global_pos)
    offsets[..., 1:, :] = quat.quat_rotate_vec(
        parent_inv, global_pos[..., 1:, :] - global_pos[..., parents, :]
    )
    return global_pos[..., 0, :].copy(), local_rots, offsets


def flatten_pose(pose):
    """``[p, q]``: all positions row-major, then all quaternions row-major."""
    return np.concatenate([np.ravel(pose.positions), np.ravel(pose.rotations)])


def unflatten_pose(x, n_joints):
    x = np.asarray(x)
    if x.shape[-1] != 7 * n_joints:
        raise ShapeError(f"expected {7 * n_joints} features, got {x.shape[-1]}")
    lead = x.shape[:-1]
    split = 3 * n_joints
    return Pose(
        x[..., :split].reshape(lead + (n_joints, 3)),
        x[..., split:].reshape(lead + (n_joints, 4)),
    )


def to_global(seq, skel=None):
    if seq.coord == GLOBAL:
        return seq
    skel = skel or seq.skeleton
    if skel is None:
        raise ValueError("a skeleton is required for coordinate conversion")
    offsets = seq.positions.copy()
    offsets[:, 0] = 0.0
    gpos, grot = fk(skel, seq.positions[:, 0], seq.rotations, offsets=offsets)
    return replace(seq, positions=gpos, rotations=grot, coord=GLOBAL, skeleton=skel)


def to_local(seq, skel=None):
    if seq.coord == LOCAL:
        return seq
    skel = skel or seq.skeleton
    if skel is None:
        raise ValueError("a skeleton is required for coordinate conversion")
    root, lrot, offsets = ik(seq.positions, seq.rotations, skel)
    offsets[:, 0] = root
    return replace(seq, positions=offsets, rotations=lrot, coord=LOCAL, skeleton=skel)


def standardize_tpose(seq, skel=None):
    """Replace the bone vectors of a global sequence with the skeleton's rest offsets.

    Rotations are kept; positions are recomputed so every bone has exactly the
    skeleton's length.
    """
    if seq.coord != GLOBAL:
        raise ValueError("standardize_tpose expects a global sequence")
    skel = skel or seq.skeleton
    if skel is None:
        raise ValueError("a skeleton is required")
    root, lrot, _ = ik(seq.positions, seq.rotations, skel)
    gpos, grot = fk(skel, root, lrot)
    return replace(seq, positions=gpos, rotations=grot, skeleton=skel)
