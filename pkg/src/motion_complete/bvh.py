"""BVH reading and writing.

Euler channels are composed intrinsically in the order they are declared,
so ``Zrotation Xrotation Yrotation`` means ``R = Rz @ Rx @ Ry``. Angles are
degrees on disk and radians everywhere else.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

from . import quaternion as quat
from .exceptions import BvhSyntaxError, UnsupportedChannel
from .skeleton import LOCAL, ROOT, MotionSequence, Skeleton

POSITION_CHANNELS = ("Xposition", "Yposition", "Zposition")
ROTATION_CHANNELS = ("Xrotation", "Yrotation", "Zrotation")
_AXES = {"X": np.array([1.0, 0.0, 0.0]), "Y": np.array([0.0, 1.0, 0.0]), "Z": np.array([0.0, 0.0, 1.0])}


@dataclass
class BvhDocument:
    skeleton: Skeleton
    channels: list
    motion: np.ndarray
    frame_time: float
    root_offset: np.ndarray = field(default_factory=lambda: np.zeros(3))
    end_sites: dict = field(default_factory=dict)

    def __post_init__(self):
        self.motion = np.atleast_2d(np.asarray(self.motion, dtype=np.float64))
        n_channels = sum(len(c) for c in self.channels)
        if self.motion.shape[1] != n_channels:
            raise BvhSyntaxError(
                f"motion has {self.motion.shape[1]} columns, hierarchy declares {n_channels} channels"
            )
        if not self.frame_time > 0:
            raise BvhSyntaxError("frame time must be positive")

    @property
    def n_frames(self):
        return self.motion.shape[0]

    def to_sequence(self):
        """Decode the motion table into a local :class:`MotionSequence`."""
        skel = self.skeleton
        T, J = self.n_frames, skel.n_joints
        positions = np.broadcast_to(skel.offsets, (T, J, 3)).copy()
        positions[:, 0] = self.root_offset
        rotations = quat.identity((T, J))
        col = 0
        for j, chans in enumerate(self.channels):
            block = self.motion[:, col:col + len(chans)]
            col += len(chans)
            pos_idx = [i for i, c in enumerate(chans) if c in POSITION_CHANNELS]
            for i in pos_idx:
                positions[:, j, POSITION_CHANNELS.index(chans[i])] = block[:, i]
            rot_idx = [i for i, c in enumerate(chans) if c in ROTATION_CHANNELS]
            if rot_idx:
                order = "".join(chans[i][0] for i in rot_idx)
                rotations[:, j] = euler_to_quat(np.radians(block[:, rot_idx]), order)
        return MotionSequence(
            positions, rotations, coord=LOCAL, frame_rate=1.0 / self.frame_time, skeleton=skel
        )

    @classmethod
    def from_sequence(cls, seq, order="ZYX", end_sites=None):
        """Encode a local sequence with 6 root channels and 3 per joint."""
        if seq.coord != LOCAL:
            raise ValueError("BVH export needs a local sequence")
        skel = seq.skeleton
        if skel is None:
            raise ValueError("sequence has no skeleton")
        if not skel.is_depth_first():
            raise ValueError("BVH export needs joints numbered in depth-first order")
        rot_names = [f"{axis}rotation" for axis in order]
        channels = [list(POSITION_CHANNELS) + rot_names]
        channels += [list(rot_names) for _ in range(1, skel.n_joints)]
        cols = [seq.positions[:, 0]]
        for j in range(skel.n_joints):
            cols.append(np.degrees(quat_to_euler(seq.rotations[:, j], order)))
        return cls(
            skeleton=skel,
            channels=channels,
            motion=np.concatenate(cols, axis=1),
            frame_time=1.0 / seq.frame_rate,
            end_sites=dict(end_sites or {}),
        )

    def dumps(self, precision=6):
        skel = self.skeleton
        children = {j: [] for j in range(skel.n_joints)}
        for j, p in enumerate(skel.parents):
            if p != ROOT:
                children[p].append(j)
        lines = ["HIERARCHY"]

        def fmt(v):
            return " ".join(f"{x:.{precision}f}" for x in v)

        def emit(j, depth):
            pad = "\t" * depth
            head = "ROOT" if j == 0 else "JOINT"
            offset = self.root_offset if j == 0 else skel.offsets[j]
            lines.append(f"{pad}{head} {skel.names[j]}")
            lines.append(f"{pad}{{")
            lines.append(f"{pad}\tOFFSET {fmt(offset)}")
            lines.append(f"{pad}\tCHANNELS {len(self.channels[j])} {' '.join(self.channels[j])}")
            for c in children[j]:
                emit(c, depth + 1)
            if j in self.end_sites:
                lines.append(f"{pad}\tEnd Site")
                lines.append(f"{pad}\t{{")
                lines.append(f"{pad}\t\tOFFSET {fmt(self.end_sites[j])}")
                lines.append(f"{pad}\t}}")
            lines.append(f"{pad}}}")

        emit(0, 0)
        lines.append("MOTION")
        lines.append(f"Frames: {self.n_frames}")
        lines.append(f"Frame Time: {self.frame_time:.{max(precision, 8)}f}")
        for row in self.motion:
            lines.append(fmt(row))
        return "\n".join(lines) + "\n"


def euler_to_quat(angles, order):
    """Intrinsic Euler angles (radians, ``(..., k)``) to quaternions."""
    angles = np.asarray(angles, dtype=np.float64)
    q = quat.identity(angles.shape[:-1])
    for i, axis in enumerate(order.upper()):
        q = quat.quat_mul(q, quat.from_axis_angle(_AXES[axis], angles[..., i]))
    return q


def quat_to_euler(q, order):
    """Inverse of :func:`euler_to_quat` for three-axis orders."""
    return Rotation.from_quat(np.asarray(q).reshape(-1, 4)).as_euler(order.upper()).reshape(
        np.shape(q)[:-1] + (3,)
    )


class _Lines:
    def __init__(self, text):
        self.lines = text.splitlines()
        self.i = 0

    def next_tokens(self):
        while self.i < len(self.lines):
            self.i += 1
            toks = self.lines[self.i - 1].split()
            if toks:
                return toks
        raise BvhSyntaxError("unexpected end of file", self.i)

    def error(self, msg, cls=BvhSyntaxError):
        return cls(msg, self.i)


def _floats(src, toks, n):
    try:
        vals = [float(t) for t in toks]
    except ValueError:
        raise src.error(f"expected numbers, got {' '.join(toks)!r}")
    if len(vals) != n:
        raise src.error(f"expected {n} values, got {len(vals)}")
    return vals


def parse_bvh(text):
    """Parse BVH text (``str`` or ``bytes``) into a :class:`BvhDocument`."""
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    src = _Lines(text)
    if src.next_tokens() != ["HIERARCHY"]:
        raise src.error("expected HIERARCHY")

    names, parents, offsets, channels = [], [], [], []
    end_sites = {}

    def parse_joint(toks, parent):
        if len(toks) < 2 or toks[0] not in ("ROOT", "JOINT"):
            raise src.error(f"expected ROOT or JOINT, got {' '.join(toks)!r}")
        j = len(names)
        names.append(" ".join(toks[1:]))
        parents.append(parent)
        offsets.append(None)
        channels.append([])
        if src.next_tokens() != ["{"]:
            raise src.error("expected '{'")
        while True:
            toks = src.next_tokens()
            key = toks[0]
            if key == "OFFSET":
                offsets[j] = _floats(src, toks[1:], 3)
            elif key == "CHANNELS":
                try:
                    n = int(toks[1])
                except (IndexError, ValueError):
                    raise src.error("malformed CHANNELS line")
                chans = toks[2:]
                if len(chans) != n:
                    raise src.error(f"CHANNELS declares {n} channels, lists {len(chans)}")
                for c in chans:
                    if c not in POSITION_CHANNELS + ROTATION_CHANNELS:
                        raise src.error(f"unsupported channel {c!r}", UnsupportedChannel)
                channels[j] = chans
            elif key == "JOINT":
                parse_joint(toks, j)
            elif key == "End":
                if src.next_tokens() != ["{"]:
                    raise src.error("expected '{'")
                toks = src.next_tokens()
                if toks[0] != "OFFSET":
                    raise src.error("End Site needs an OFFSET")
                end_sites[j] = np.array(_floats(src, toks[1:], 3))
                if src.next_tokens() != ["}"]:
                    raise src.error("expected '}'")
            elif key == "}":
                break
            else:
                raise src.error(f"unexpected token {key!r}")
        if offsets[j] is None:
            raise src.error(f"joint {names[j]!r} has no OFFSET")

    parse_joint(src.next_tokens(), ROOT)
    if src.next_tokens() != ["MOTION"]:
        raise src.error("expected MOTION")
    toks = src.next_tokens()
    if toks[0] != "Frames:" or len(toks) != 2 or not toks[1].isdigit():
        raise src.error("expected 'Frames: <n>'")
    n_frames = int(toks[1])
    toks = src.next_tokens()
    if toks[:2] != ["Frame", "Time:"] or len(toks) != 3:
        raise src.error("expected 'Frame Time: <seconds>'")
    frame_time = _floats(src, toks[2:], 1)[0]
    n_channels = sum(len(c) for c in channels)
    rows = []
    for _ in range(n_frames):
        rows.append(_floats(src, src.next_tokens(), n_channels))
    motion = np.array(rows, dtype=np.float64).reshape(n_frames, n_channels)

    root_offset = np.array(offsets[0], dtype=np.float64)
    offsets = np.array(offsets, dtype=np.float64)
    offsets[0] = 0.0
    skel = Skeleton(tuple(parents), offsets, tuple(names))
    try:
        return BvhDocument(skel, channels, motion, frame_time, root_offset, end_sites)
    except BvhSyntaxError as exc:
        raise src.error(str(exc)) from None


def read_bvh(path):
    with open(path, "rb") as fh:
        return parse_bvh(fh.read())


def write_bvh(path, doc):
    with open(path, "w") as fh:
        fh.write(doc.dumps())
